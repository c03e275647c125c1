#ifndef CLUSTNET_H
#define CLUSTNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ClustnetStatus {
  CLUSTNET_STATUS_OK = 0,
  CLUSTNET_STATUS_NULL_POINTER = 1,
  CLUSTNET_STATUS_INVALID_ARGUMENT = 2,
  CLUSTNET_STATUS_SHAPE_MISMATCH = 3,
  CLUSTNET_STATUS_IO = 4,
  CLUSTNET_STATUS_PARSE = 5,
  CLUSTNET_STATUS_NUMERICAL = 6,
  CLUSTNET_STATUS_CONFIG = 7,
  /**
   * A pipeline finished but at least one run was aborted.
   */
  CLUSTNET_STATUS_RUN_FAILED = 8,
  CLUSTNET_STATUS_OUT_OF_RANGE = 9,
  CLUSTNET_STATUS_PANIC = 10,
} ClustnetStatus;

/**
 * Opaque pipeline configuration handle.
 */
typedef struct ClustnetConfig ClustnetConfig;

/**
 * Opaque dataset handle.
 */
typedef struct ClustnetDataset ClustnetDataset;

/**
 * Opaque pipeline result handle.
 */
typedef struct ClustnetReport ClustnetReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *clustnet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *clustnet_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void clustnet_string_free(char *s);

/**
 * Copy a row-major `n_rows x n_cols` matrix into a new dataset. `labels`
 * may be null; otherwise it holds `n_rows` class ids.
 *
 * # Safety
 * `values` must point to `n_rows * n_cols` doubles, `labels` to `n_rows`
 * entries when non-null, and `out` to writable storage for one pointer.
 */
enum ClustnetStatus clustnet_dataset_from_rows(const double *values,
                                               size_t n_rows,
                                               size_t n_cols,
                                               const size_t *labels,
                                               struct ClustnetDataset **out);

/**
 * Load a bundled table (`iris`, `wine`), a generator (`moons`, `flame`,
 * seeded from `config`) or a CSV path. `config` may be null for defaults.
 *
 * # Safety
 * `config` must be null or a live config handle, `source` a NUL-terminated
 * string and `out` writable storage for one pointer.
 */
enum ClustnetStatus clustnet_dataset_load(const struct ClustnetConfig *config,
                                          const char *source,
                                          struct ClustnetDataset **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t clustnet_dataset_n_samples(const struct ClustnetDataset *ds);

/**
 * Number of columns, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t clustnet_dataset_n_features(const struct ClustnetDataset *ds);

/**
 * # Safety
 * `ds` must be null or a dataset handle not yet freed.
 */
void clustnet_dataset_free(struct ClustnetDataset *ds);

/**
 * A configuration holding every default.
 */
struct ClustnetConfig *clustnet_config_new(void);

/**
 * Parse a flat TOML configuration.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` writable storage for one pointer.
 */
enum ClustnetStatus clustnet_config_from_toml(const char *text, struct ClustnetConfig **out);

/**
 * Set one field by name using TOML value syntax, e.g. `("layers", "[20, 5]")`
 * or `("mapping", "\"majority\"")`.
 *
 * # Safety
 * `config` must be a live config handle; `key` and `value` NUL-terminated.
 */
enum ClustnetStatus clustnet_config_set(struct ClustnetConfig *config,
                                        const char *key,
                                        const char *value);

/**
 * Serialise as TOML; free the result with [`clustnet_string_free`].
 *
 * # Safety
 * `config` must be a live config handle and `out` writable storage.
 */
enum ClustnetStatus clustnet_config_to_toml(const struct ClustnetConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a config handle not yet freed.
 */
void clustnet_config_free(struct ClustnetConfig *config);

/**
 * Run the full pipeline on `ds`. A report is produced even when some
 * runs abort; the status is then [`ClustnetStatus::RunFailed`].
 *
 * # Safety
 * `ds` and `config` must be live handles; `out` writable storage.
 */
enum ClustnetStatus clustnet_cluster(const struct ClustnetDataset *ds,
                                     const struct ClustnetConfig *config,
                                     struct ClustnetReport **out);

/**
 * Number of runs in the report, or 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live report handle.
 */
size_t clustnet_report_n_runs(const struct ClustnetReport *report);

/**
 * Cluster count chosen in `run`.
 *
 * # Safety
 * `report` must be a live report handle and `out` writable.
 */
enum ClustnetStatus clustnet_report_n_clusters(const struct ClustnetReport *report,
                                               size_t run,
                                               size_t *out);

/**
 * Accuracy of `run`; needs a labelled dataset.
 *
 * # Safety
 * `report` must be a live report handle and `out` writable.
 */
enum ClustnetStatus clustnet_report_accuracy(const struct ClustnetReport *report,
                                             size_t run,
                                             double *out);

/**
 * Copy the assignments of `run` into `buf`, which holds `len` entries.
 * `len` must equal the number of samples.
 *
 * # Safety
 * `report` must be a live report handle and `buf` writable for `len`
 * entries.
 */
enum ClustnetStatus clustnet_report_assignments(const struct ClustnetReport *report,
                                                size_t run,
                                                size_t *buf,
                                                size_t len);

/**
 * Full report as pretty JSON; free with [`clustnet_string_free`].
 *
 * # Safety
 * `report` must be a live report handle and `out` writable.
 */
enum ClustnetStatus clustnet_report_to_json(const struct ClustnetReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a report handle not yet freed.
 */
void clustnet_report_free(struct ClustnetReport *report);

/**
 * Choose a cluster count for a row-major feature matrix by BIC over
 * `1..=c_max`; `c_max = 0` uses the default cap.
 *
 * # Safety
 * `features` must point to `n_rows * n_cols` doubles and `out` be writable.
 */
enum ClustnetStatus clustnet_select_clusters(const double *features,
                                             size_t n_rows,
                                             size_t n_cols,
                                             size_t c_max,
                                             uint64_t seed,
                                             size_t *out);

/**
 * Min-max scale a row-major matrix in place onto `[0.1, 0.9]` per column.
 *
 * # Safety
 * `values` must point to `n_rows * n_cols` writable doubles.
 */
enum ClustnetStatus clustnet_normalize(double *values, size_t n_rows, size_t n_cols);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLUSTNET_H */
