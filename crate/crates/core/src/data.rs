//! Dataset ingestion, min-max scaling and synthetic generators.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Lower end of the scaled feature range.
pub const SCALE_LOW: f64 = 0.1;
/// Upper end of the scaled feature range.
pub const SCALE_HIGH: f64 = 0.9;
/// Value assigned to every cell of a constant feature.
pub const SCALE_MID: f64 = 0.5;

/// An `N x d` sample matrix with optional class labels.
///
/// Rows are samples. Labels, when present, are contiguous ids `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
    labels: Option<Vec<usize>>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(samples: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = samples.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if let Some((idx, _)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::shape(format!("{} labels for {} samples", labels.len(), n)));
            }
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; k];
            for &l in labels {
                seen[l] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::invalid("label ids must be contiguous from 0"));
            }
        }
        Ok(Self {
            samples,
            labels,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(Error::shape(format!(
                "{} feature names for {} features",
                names.len(),
                self.n_features()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.samples.ncols()
    }

    /// Number of distinct classes, if labelled.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Vec<usize>>) {
        (self.samples, self.labels)
    }

    /// Write as CSV with a header line; labels, if any, go to a final
    /// `label` column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// [`Dataset::write_csv`] into any writer.
    pub fn write_csv_to(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) => names.clone(),
            None => (0..self.n_features()).map(|i| format!("x{i}")).collect(),
        };
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.samples.outer_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Per-feature extrema recorded by [`normalize_minmax`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub per_feature_min: Vec<f64>,
    pub per_feature_max: Vec<f64>,
}

impl NormalizationParams {
    /// Scale one value of feature `i`.
    pub fn scale(&self, i: usize, x: f64) -> f64 {
        let (lo, hi) = (self.per_feature_min[i], self.per_feature_max[i]);
        if hi > lo {
            (SCALE_HIGH - SCALE_LOW) / (hi - lo) * (x - lo) + SCALE_LOW
        } else {
            SCALE_MID
        }
    }

    /// Apply the stored scaling to a matrix with matching column count.
    pub fn apply(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if samples.ncols() != self.per_feature_min.len() {
            return Err(Error::shape(format!(
                "expected {} columns, got {}",
                self.per_feature_min.len(),
                samples.ncols()
            )));
        }
        let mut out = samples.to_owned();
        for (i, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|x| self.scale(i, x));
        }
        Ok(out)
    }
}

/// Map every feature affinely onto `[0.1, 0.9]`; constant features map to 0.5.
pub fn normalize_minmax(ds: &Dataset) -> (Dataset, NormalizationParams) {
    let x = ds.samples();
    let per_feature_min: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let per_feature_max: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let params = NormalizationParams {
        per_feature_min,
        per_feature_max,
    };
    let scaled = params.apply(x).expect("column count matches by construction");
    let out = Dataset {
        samples: scaled,
        labels: ds.labels.clone(),
        feature_names: ds.feature_names.clone(),
    };
    (out, params)
}

/// Load a comma-separated file. Rows are samples.
///
/// Empty cells are imputed with 0. When `label_column` is given, that column
/// is parsed as integer class ids and remapped, in ascending order, onto
/// contiguous ids starting at 0.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header, label_column)
}

/// [`load_csv`] over any reader.
pub fn read_csv(
    input: impl std::io::Read,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header: Option<Vec<String>> = if has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        // A lone blank line is not a sample.
        if record.len() == 1 && record[0].is_empty() && width != Some(1) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        if let Some(lc) = label_column {
            if lc >= expected {
                return Err(Error::invalid(format!(
                    "label column {lc} out of range for {expected} columns"
                )));
            }
        }
        for (column, cell) in record.iter().enumerate() {
            if Some(column) == label_column {
                raw_labels.push(parse_label(row, cell)?);
                continue;
            }
            let v = if cell.is_empty() {
                0.0
            } else {
                cell.parse::<f64>().map_err(|_| Error::BadCell {
                    row,
                    column,
                    value: cell.to_owned(),
                })?
            };
            if !v.is_finite() {
                return Err(Error::BadCell {
                    row,
                    column,
                    value: cell.to_owned(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }

    let width = width.unwrap_or(0);
    let d = width.saturating_sub(usize::from(label_column.is_some()));
    let samples = Array2::from_shape_vec((rows, d), values)
        .map_err(|e| Error::shape(e.to_string()))?;

    let labels = label_column.map(|_| remap_labels(&raw_labels));
    let mut ds = Dataset::new(samples, labels)?;
    if let Some(mut names) = header {
        if let Some(lc) = label_column {
            names.remove(lc);
        }
        ds = ds.with_feature_names(names)?;
    }
    Ok(ds)
}

fn parse_label(row: usize, cell: &str) -> Result<i64> {
    let bad = || Error::BadLabel {
        row,
        value: cell.to_owned(),
    };
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    let v: f64 = cell.parse().map_err(|_| bad())?;
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 {
        Ok(v as i64)
    } else {
        Err(bad())
    }
}

fn remap_labels(raw: &[i64]) -> Vec<usize> {
    let mut ids = BTreeMap::new();
    for &r in raw {
        ids.insert(r, 0usize);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    raw.iter().map(|r| ids[r]).collect()
}

const IRIS_CSV: &str = include_str!("../data/iris.csv");
const WINE_CSV: &str = include_str!("../data/wine.csv");

/// Names accepted by [`builtin`].
pub const BUILTIN_DATASETS: [&str; 2] = ["iris", "wine"];

/// A bundled labelled table: `iris` (150 x 4, 3 classes) or `wine`
/// (178 x 13, 3 classes).
pub fn builtin(name: &str) -> Result<Dataset> {
    let text = match name {
        "iris" => IRIS_CSV,
        "wine" => WINE_CSV,
        _ => {
            return Err(Error::invalid(format!(
                "unknown built-in dataset {name:?} (expected one of {BUILTIN_DATASETS:?})"
            )))
        }
    };
    let width = text.lines().next().map_or(0, |h| h.split(',').count());
    read_csv(text.as_bytes(), true, Some(width - 1))
}

fn labelled(samples: Array2<f64>, n_per_class: usize) -> Dataset {
    let labels = (0..2 * n_per_class).map(|i| i / n_per_class).collect();
    Dataset::new(samples, Some(labels))
        .expect("generators emit finite, labelled, non-empty data")
        .with_feature_names(vec!["x".into(), "y".into()])
        .expect("two names for two features")
}

/// Two interleaved half circles with isotropic Gaussian jitter of scale `noise`.
///
/// Class 0 is the upper arc `(cos t, sin t)`, class 1 the lower arc
/// `(1 - cos t, 0.5 - sin t)`, with `t` evenly spaced over `[0, pi]`.
pub fn gen_moons(n_per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = seed::stream(seed, "moons", 0);
    let jitter = Normal::new(0.0, noise).expect("noise validated above");
    let step = if n_per_class > 1 {
        PI / (n_per_class - 1) as f64
    } else {
        0.0
    };
    let mut x = Array2::zeros((2 * n_per_class, 2));
    for i in 0..n_per_class {
        let t = step * i as f64;
        x[[i, 0]] = t.cos();
        x[[i, 1]] = t.sin();
        x[[n_per_class + i, 0]] = 1.0 - t.cos();
        x[[n_per_class + i, 1]] = 0.5 - t.sin();
    }
    if noise > 0.0 {
        x.mapv_inplace(|v| v + jitter.sample(&mut rng));
    }
    Ok(labelled(x, n_per_class))
}

/// Flame-like pattern: a thick arc (class 0) draped over a compact
/// elliptical Gaussian blob (class 1) so that the two classes are not
/// linearly separable.
pub fn gen_flame(n_per_class: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    let mut rng = seed::stream(seed, "flame", 0);
    let radial = Normal::new(0.0, 0.08).expect("constant sd");
    let std = Normal::new(0.0, 1.0).expect("constant sd");
    let mut x = Array2::zeros((2 * n_per_class, 2));
    for i in 0..n_per_class {
        let t = rng.random_range(0.08 * PI..0.92 * PI);
        let r = 1.0 + radial.sample(&mut rng);
        x[[i, 0]] = r * t.cos();
        x[[i, 1]] = r * t.sin();
    }
    for i in n_per_class..2 * n_per_class {
        x[[i, 0]] = 0.22 * std.sample(&mut rng);
        x[[i, 1]] = 0.25 + 0.1 * std.sample(&mut rng);
    }
    Ok(labelled(x, n_per_class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::io::Write;

    fn column(values: &[f64]) -> Dataset {
        let x = Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap();
        Dataset::new(x, None).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn bundled_tables() {
        let iris = builtin("iris").unwrap();
        assert_eq!((iris.n_samples(), iris.n_features(), iris.n_classes()), (150, 4, Some(3)));
        let wine = builtin("wine").unwrap();
        assert_eq!((wine.n_samples(), wine.n_features(), wine.n_classes()), (178, 13, Some(3)));
        assert!(builtin("glass").is_err());
    }

    #[test]
    fn minmax_endpoints_and_midpoint() {
        let (out, params) = normalize_minmax(&column(&[2.0, 4.0, 6.0]));
        assert_abs_diff_eq!(out.samples()[[0, 0]], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(out.samples()[[1, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.samples()[[2, 0]], 0.9, epsilon = 1e-15);
        assert_eq!(params.per_feature_min, vec![2.0]);
        assert_eq!(params.per_feature_max, vec![6.0]);
    }

    #[test]
    fn minmax_constant_feature() {
        let (out, _) = normalize_minmax(&column(&[7.0, 7.0, 7.0]));
        assert!(out.samples().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn minmax_hand_value() {
        // 0.8 / 3 * 1 + 0.1
        let (out, _) = normalize_minmax(&column(&[0.0, 1.0, 3.0]));
        assert_abs_diff_eq!(out.samples()[[1, 0]], 0.366_666_666_666_666_7, epsilon = 1e-12);
    }

    #[test]
    fn dataset_rejects_gappy_labels() {
        let x = array![[1.0], [2.0]];
        assert!(Dataset::new(x.clone(), Some(vec![0, 2])).is_err());
        assert!(Dataset::new(x, Some(vec![1, 0])).is_ok());
        assert!(Dataset::new(Array2::zeros((0, 2)), None).is_err());
    }

    #[test]
    fn csv_minimal() {
        let f = write_tmp("0.5\n");
        let ds = load_csv(f.path(), false, None).unwrap();
        assert_eq!((ds.n_samples(), ds.n_features()), (1, 1));
        assert!(ds.labels().is_none());
        assert_eq!(ds.samples()[[0, 0]], 0.5);
    }

    #[test]
    fn csv_blank_cell_is_zero() {
        let f = write_tmp("a,b,c\n1,,3\n4,5,6\n");
        let ds = load_csv(f.path(), true, None).unwrap();
        assert_eq!(ds.samples()[[0, 1]], 0.0);
        assert_eq!(ds.feature_names().unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn csv_labels_are_remapped() {
        let f = write_tmp("1,3\n2,1\n3,2\n4,3\n");
        let ds = load_csv(f.path(), false, Some(1)).unwrap();
        assert_eq!(ds.labels().unwrap(), [2, 0, 1, 2]);
        assert_eq!(ds.n_features(), 1);
        assert_eq!(ds.n_classes(), Some(3));
    }

    #[test]
    fn csv_errors() {
        let ragged = write_tmp("1,2\n3\n");
        assert!(matches!(
            load_csv(ragged.path(), false, None),
            Err(Error::RaggedRow { row: 1, .. })
        ));
        let bad_label = write_tmp("1,a\n");
        assert!(matches!(
            load_csv(bad_label.path(), false, Some(1)),
            Err(Error::BadLabel { .. })
        ));
        let frac_label = write_tmp("1,0.5\n");
        assert!(load_csv(frac_label.path(), false, Some(1)).is_err());
        let bad_cell = write_tmp("1,x\n");
        assert!(matches!(
            load_csv(bad_cell.path(), false, None),
            Err(Error::BadCell { column: 1, .. })
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", false, None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_round_trip_through_writer() {
        let ds = gen_moons(5, 0.1, 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(f.path()).unwrap();
        let back = load_csv(f.path(), true, Some(2)).unwrap();
        assert_eq!(back.samples(), ds.samples());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn generators_shapes() {
        let flame = gen_flame(300, 1).unwrap();
        assert_eq!((flame.n_samples(), flame.n_features()), (600, 2));
        assert_eq!(flame.n_classes(), Some(2));
        assert_eq!(gen_flame(1, 1).unwrap().n_samples(), 2);

        let moons = gen_moons(150, 0.05, 1).unwrap();
        assert_eq!((moons.n_samples(), moons.n_features()), (300, 2));
        assert_eq!(moons.n_classes(), Some(2));
        assert!(gen_moons(0, 0.1, 1).is_err());
        assert!(gen_moons(3, -1.0, 1).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_flame(50, 9).unwrap(), gen_flame(50, 9).unwrap());
        assert_eq!(gen_moons(50, 0.1, 9).unwrap(), gen_moons(50, 0.1, 9).unwrap());
        assert_ne!(gen_moons(50, 0.1, 9).unwrap(), gen_moons(50, 0.1, 10).unwrap());
    }

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let ds = gen_moons(40, 0.0, 0).unwrap();
        let x = ds.samples();
        for (i, &label) in ds.labels().unwrap().iter().enumerate() {
            let (cx, cy) = if label == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((x[[i, 0]] - cx).powi(2) + (x[[i, 1]] - cy).powi(2)).sqrt();
            assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
            // upper arc for class 0, lower arc for class 1
            if label == 0 {
                assert!(x[[i, 1]] >= -1e-12);
            } else {
                assert!(x[[i, 1]] <= 0.5 + 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix() -> impl Strategy<Value = Array2<f64>> {
            (1usize..12, 1usize..5).prop_flat_map(|(n, d)| {
                proptest::collection::vec(-1.0e6f64..1.0e6, n * d)
                    .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn scaled_values_stay_in_range(x in matrix()) {
                let (out, _) = normalize_minmax(&Dataset::new(x, None).unwrap());
                for &v in out.samples() {
                    prop_assert!((SCALE_LOW - 1e-12..=SCALE_HIGH + 1e-12).contains(&v));
                }
            }

            #[test]
            fn scaling_is_idempotent(x in matrix()) {
                let (once, _) = normalize_minmax(&Dataset::new(x, None).unwrap());
                let (twice, _) = normalize_minmax(&once);
                for (a, b) in once.samples().iter().zip(twice.samples()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
