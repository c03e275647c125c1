//! C interface to the clustnet pipeline.
//!
//! Objects cross the boundary as opaque pointers created by a `*_new` or
//! loader function and released by the matching `*_free`. Fallible calls
//! return a [`ClustnetStatus`]; the message of the last failure on the
//! calling thread is available from [`clustnet_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clustnet::bic::{select_clusters_with, BicConfig};
use clustnet::data::{self, Dataset};
use clustnet::pipeline::{run_pipeline_on, PipelineConfig, PipelineReport, RunOutcome};
use clustnet::report;
use clustnet::Error;
use ndarray::ArrayView2;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClustnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    Parse = 5,
    Numerical = 6,
    Config = 7,
    /// A pipeline finished but at least one run was aborted.
    RunFailed = 8,
    OutOfRange = 9,
    Panic = 10,
}

impl From<&Error> for ClustnetStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => Self::Io,
            Error::Csv(_) | Error::Json(_) | Error::RaggedRow { .. } | Error::BadCell { .. } | Error::BadLabel { .. } => {
                Self::Parse
            }
            Error::Config(_) => Self::Config,
            Error::Shape(_) => Self::ShapeMismatch,
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::Numerical(_) => Self::Numerical,
        }
    }
}

/// Opaque dataset handle.
pub struct ClustnetDataset(Dataset);

/// Opaque pipeline configuration handle.
pub struct ClustnetConfig(PipelineConfig);

/// Opaque pipeline result handle.
pub struct ClustnetReport(PipelineReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(ClustnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(ClustnetStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: ClustnetStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ClustnetStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClustnetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ClustnetStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: caller passes null or a live handle from this library.
    unsafe { p.as_ref() }.ok_or_else(|| Fail(ClustnetStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: as in `borrow`, with exclusive access.
    unsafe { p.as_mut() }.ok_or_else(|| Fail(ClustnetStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(ClustnetStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: non-null and NUL-terminated by contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(ClustnetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return fail(ClustnetStatus::NullPointer, "output pointer is null");
    }
    // SAFETY: checked non-null; caller provides writable storage.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return fail(ClustnetStatus::NullPointer, "output pointer is null");
    }
    // SAFETY: checked non-null; caller provides writable storage.
    unsafe { *out = value };
    Ok(())
}

unsafe fn matrix<'a>(values: *const f64, n_rows: usize, n_cols: usize) -> Result<ArrayView2<'a, f64>, Fail> {
    if values.is_null() {
        return fail(ClustnetStatus::NullPointer, "values is null");
    }
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Fail(ClustnetStatus::InvalidArgument, "matrix size overflows".into()))?;
    // SAFETY: caller guarantees `len` readable doubles.
    let slice = unsafe { std::slice::from_raw_parts(values, len) };
    ArrayView2::from_shape((n_rows, n_cols), slice).map_err(|e| Fail(ClustnetStatus::ShapeMismatch, e.to_string()))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn clustnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn clustnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clustnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by `CString::into_raw` in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Copy a row-major `n_rows x n_cols` matrix into a new dataset. `labels`
/// may be null; otherwise it holds `n_rows` class ids.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` doubles, `labels` to `n_rows`
/// entries when non-null, and `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn clustnet_dataset_from_rows(
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const usize,
    out: *mut *mut ClustnetDataset,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let x = unsafe { matrix(values, n_rows, n_cols) }?;
        let labels = if labels.is_null() {
            None
        } else {
            // SAFETY: caller guarantees `n_rows` entries.
            Some(unsafe { std::slice::from_raw_parts(labels, n_rows) }.to_vec())
        };
        let ds = Dataset::new(x.to_owned(), labels)?;
        out_ptr(out, ClustnetDataset(ds))
    })
}

/// Load a bundled table (`iris`, `wine`), a generator (`moons`, `flame`,
/// seeded from `config`) or a CSV path. `config` may be null for defaults.
///
/// # Safety
/// `config` must be null or a live config handle, `source` a NUL-terminated
/// string and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn clustnet_dataset_load(
    config: *const ClustnetConfig,
    source: *const c_char,
    out: *mut *mut ClustnetDataset,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let source = unsafe { c_str(source, "source") }?;
        let default = PipelineConfig::default();
        // SAFETY: null or a live handle.
        let cfg = unsafe { config.as_ref() }.map_or(&default, |c| &c.0);
        let ds = cfg.load_dataset(source)?;
        out_ptr(out, ClustnetDataset(ds))
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn clustnet_dataset_n_samples(ds: *const ClustnetDataset) -> usize {
    // SAFETY: null or a live handle.
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.n_samples())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn clustnet_dataset_n_features(ds: *const ClustnetDataset) -> usize {
    // SAFETY: null or a live handle.
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.n_features())
}

/// # Safety
/// `ds` must be null or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clustnet_dataset_free(ds: *mut ClustnetDataset) {
    if !ds.is_null() {
        // SAFETY: allocated by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// A configuration holding every default.
#[no_mangle]
pub extern "C" fn clustnet_config_new() -> *mut ClustnetConfig {
    Box::into_raw(Box::new(ClustnetConfig(PipelineConfig::default())))
}

/// Parse a flat TOML configuration.
///
/// # Safety
/// `text` must be NUL-terminated and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn clustnet_config_from_toml(
    text: *const c_char,
    out: *mut *mut ClustnetConfig,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let text = unsafe { c_str(text, "text") }?;
        out_ptr(out, ClustnetConfig(PipelineConfig::from_toml(text)?))
    })
}

/// Set one field by name using TOML value syntax, e.g. `("layers", "[20, 5]")`
/// or `("mapping", "\"majority\"")`.
///
/// # Safety
/// `config` must be a live config handle; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn clustnet_config_set(
    config: *mut ClustnetConfig,
    key: *const c_char,
    value: *const c_char,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let cfg = unsafe { borrow_mut(config, "config") }?;
        let key = unsafe { c_str(key, "key") }?;
        let value = unsafe { c_str(value, "value") }?;
        let mut table: toml::Table =
            toml::from_str(&cfg.0.to_toml()?).map_err(|e| Fail(ClustnetStatus::Config, e.to_string()))?;
        let parsed: toml::Table = toml::from_str(&format!("v = {value}"))
            .map_err(|e| Fail(ClustnetStatus::Parse, format!("value for {key}: {e}")))?;
        table.insert(key.to_string(), parsed["v"].clone());
        cfg.0 = PipelineConfig::from_toml(&table.to_string())?;
        Ok(())
    })
}

/// Serialise as TOML; free the result with [`clustnet_string_free`].
///
/// # Safety
/// `config` must be a live config handle and `out` writable storage.
#[no_mangle]
pub unsafe extern "C" fn clustnet_config_to_toml(
    config: *const ClustnetConfig,
    out: *mut *mut c_char,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let cfg = unsafe { borrow(config, "config") }?;
        let s = CString::new(cfg.0.to_toml()?).map_err(|e| Fail(ClustnetStatus::Config, e.to_string()))?;
        write_out(out, s.into_raw())
    })
}

/// # Safety
/// `config` must be null or a config handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clustnet_config_free(config: *mut ClustnetConfig) {
    if !config.is_null() {
        // SAFETY: allocated by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Run the full pipeline on `ds`. A report is produced even when some
/// runs abort; the status is then [`ClustnetStatus::RunFailed`].
///
/// # Safety
/// `ds` and `config` must be live handles; `out` writable storage.
#[no_mangle]
pub unsafe extern "C" fn clustnet_cluster(
    ds: *const ClustnetDataset,
    config: *const ClustnetConfig,
    out: *mut *mut ClustnetReport,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let ds = unsafe { borrow(ds, "dataset") }?;
        let cfg = unsafe { borrow(config, "config") }?;
        cfg.0.validate()?;
        let rep = run_pipeline_on(&ds.0, "ffi", &cfg.0.layers, &cfg.0)?;
        let failed = rep.any_failed();
        out_ptr(out, ClustnetReport(rep))?;
        if failed {
            return fail(ClustnetStatus::RunFailed, "at least one run failed");
        }
        Ok(())
    })
}

/// Number of runs in the report, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn clustnet_report_n_runs(report: *const ClustnetReport) -> usize {
    // SAFETY: null or a live handle.
    unsafe { report.as_ref() }.map_or(0, |r| r.0.runs.len())
}

fn run_of(rep: &PipelineReport, run: usize) -> Result<&clustnet::pipeline::RunReport, Fail> {
    match rep.runs.get(run) {
        Some(RunOutcome::Ok(r)) => Ok(r),
        Some(RunOutcome::Failed { error, .. }) => fail(ClustnetStatus::RunFailed, error.clone()),
        None => fail(ClustnetStatus::OutOfRange, format!("run {run} of {}", rep.runs.len())),
    }
}

/// Cluster count chosen in `run`.
///
/// # Safety
/// `report` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clustnet_report_n_clusters(
    report: *const ClustnetReport,
    run: usize,
    out: *mut usize,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let rep = unsafe { borrow(report, "report") }?;
        write_out(out, run_of(&rep.0, run)?.n_clusters)
    })
}

/// Accuracy of `run`; needs a labelled dataset.
///
/// # Safety
/// `report` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clustnet_report_accuracy(
    report: *const ClustnetReport,
    run: usize,
    out: *mut f64,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let rep = unsafe { borrow(report, "report") }?;
        match &run_of(&rep.0, run)?.eval {
            Some(e) => write_out(out, e.accuracy),
            None => fail(ClustnetStatus::InvalidArgument, "dataset has no labels"),
        }
    })
}

/// Copy the assignments of `run` into `buf`, which holds `len` entries.
/// `len` must equal the number of samples.
///
/// # Safety
/// `report` must be a live report handle and `buf` writable for `len`
/// entries.
#[no_mangle]
pub unsafe extern "C" fn clustnet_report_assignments(
    report: *const ClustnetReport,
    run: usize,
    buf: *mut usize,
    len: usize,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let rep = unsafe { borrow(report, "report") }?;
        let r = run_of(&rep.0, run)?;
        let a = match &r.eval {
            Some(e) => &e.assignments,
            None => return fail(ClustnetStatus::InvalidArgument, "assignments are kept for labelled data only"),
        };
        if buf.is_null() {
            return fail(ClustnetStatus::NullPointer, "buf is null");
        }
        if len != a.len() {
            return fail(ClustnetStatus::ShapeMismatch, format!("buffer holds {len}, need {}", a.len()));
        }
        // SAFETY: `len` writable entries by contract.
        unsafe { std::slice::from_raw_parts_mut(buf, len) }.copy_from_slice(a);
        Ok(())
    })
}

/// Full report as pretty JSON; free with [`clustnet_string_free`].
///
/// # Safety
/// `report` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clustnet_report_to_json(
    report: *const ClustnetReport,
    out: *mut *mut c_char,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let rep = unsafe { borrow(report, "report") }?;
        let s = CString::new(report::to_json(&rep.0)?).map_err(|e| Fail(ClustnetStatus::Parse, e.to_string()))?;
        write_out(out, s.into_raw())
    })
}

/// # Safety
/// `report` must be null or a report handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clustnet_report_free(report: *mut ClustnetReport) {
    if !report.is_null() {
        // SAFETY: allocated by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Choose a cluster count for a row-major feature matrix by BIC over
/// `1..=c_max`; `c_max = 0` uses the default cap.
///
/// # Safety
/// `features` must point to `n_rows * n_cols` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn clustnet_select_clusters(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    c_max: usize,
    seed: u64,
    out: *mut usize,
) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let x = unsafe { matrix(features, n_rows, n_cols) }?;
        let cfg = BicConfig {
            c_max: (c_max > 0).then_some(c_max),
            seed,
            ..Default::default()
        };
        write_out(out, select_clusters_with(x, &cfg)?.selected)
    })
}

/// Min-max scale a row-major matrix in place onto `[0.1, 0.9]` per column.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn clustnet_normalize(values: *mut f64, n_rows: usize, n_cols: usize) -> ClustnetStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let x = unsafe { matrix(values, n_rows, n_cols) }?;
        let ds = Dataset::new(x.to_owned(), None)?;
        let (norm, _) = data::normalize_minmax(&ds);
        let len = n_rows * n_cols;
        // SAFETY: same region, now written.
        let dst = unsafe { std::slice::from_raw_parts_mut(values, len) };
        for (d, s) in dst.iter_mut().zip(norm.samples().iter()) {
            *d = *s;
        }
        Ok(())
    })
}
