#ifndef THEFTNET_H
#define THEFTNET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum TnStatus {
  TN_STATUS_OK = 0,
  TN_STATUS_NULL_POINTER = 1,
  TN_STATUS_INVALID_ARGUMENT = 2,
  TN_STATUS_SHAPE = 3,
  TN_STATUS_PARSE = 4,
  TN_STATUS_IO = 5,
  TN_STATUS_MODEL_FORMAT = 6,
  TN_STATUS_IMPUTATION = 7,
  TN_STATUS_STANDARDIZATION = 8,
  TN_STATUS_AUC_UNDEFINED = 9,
  TN_STATUS_PANIC = 10,
} TnStatus;

/**
 * A random forest or gradient-boosting model restored from its text file.
 */
typedef struct TnBaseline TnBaseline;

/**
 * A trained neural network restored from a checkpoint.
 */
typedef struct TnNetwork TnNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length of every series, in days.
 */
size_t tn_series_len(void);

/**
 * Length of the handcrafted feature vector.
 */
size_t tn_feature_count(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tn_version(void);

/**
 * Message for the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *tn_last_error(void);

/**
 * Fills missing days of one series by local barycentric interpolation.
 *
 * # Safety
 * `series` and `out` must each point to 365 doubles.
 */
enum TnStatus tn_impute(const double *series, double *out);

/**
 * Imputes then standardizes one series to zero mean and unit variance.
 *
 * # Safety
 * `series` and `out` must each point to 365 doubles.
 */
enum TnStatus tn_preprocess(const double *series, double *out);

/**
 * Standardizes one complete series; fails on `NaN` entries.
 *
 * # Safety
 * `series` and `out` must each point to 365 doubles.
 */
enum TnStatus tn_zscore(const double *series, double *out);

/**
 * Handcrafted features of one series after imputation.
 *
 * # Safety
 * `series` must point to 365 doubles and `out` to `tn_feature_count()` doubles.
 * `divergence_undefined` may be null.
 */
enum TnStatus tn_extract_features(const double *series, double *out, bool *divergence_undefined);

/**
 * ROC AUC of `scores` against 0/1 `labels`.
 *
 * # Safety
 * `scores` and `labels` must point to `n` elements; `out` to one double.
 */
enum TnStatus tn_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Mean clipped binary cross entropy of probabilities `p` against `labels`.
 *
 * # Safety
 * `p` and `labels` must point to `n` elements; `out` to one double.
 */
enum TnStatus tn_logloss(const double *p, const uint8_t *labels, size_t n, double *out);

/**
 * Loads a network checkpoint written by `theftnet train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TnStatus tn_network_load(const char *path, struct TnNetwork **out);

/**
 * Theft probabilities for `rows` raw series (imputed and standardized here).
 *
 * # Safety
 * `net` must come from [`tn_network_load`]; `series` must point to
 * `rows * 365` doubles and `out` to `rows` doubles.
 */
enum TnStatus tn_network_predict(const struct TnNetwork *net,
                                 const double *series,
                                 size_t rows,
                                 double *out);

/**
 * Theft probabilities for `rows` series that are already standardized.
 *
 * # Safety
 * As for [`tn_network_predict`]; the input must not contain `NaN`.
 */
enum TnStatus tn_network_predict_standardized(const struct TnNetwork *net,
                                              const double *series,
                                              size_t rows,
                                              double *out);

/**
 * Releases a network handle; null is ignored.
 *
 * # Safety
 * `net` must come from [`tn_network_load`] and not be used afterwards.
 */
void tn_network_free(struct TnNetwork *net);

/**
 * Loads a forest or boosting model file written by `theftnet train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TnStatus tn_baseline_load(const char *path, struct TnBaseline **out);

/**
 * Theft probabilities for `rows` raw series (imputed and featurized here).
 *
 * # Safety
 * `model` must come from [`tn_baseline_load`]; `series` must point to
 * `rows * 365` doubles and `out` to `rows` doubles.
 */
enum TnStatus tn_baseline_predict(const struct TnBaseline *model,
                                  const double *series,
                                  size_t rows,
                                  double *out);

/**
 * Theft probabilities for `rows` precomputed feature vectors.
 *
 * # Safety
 * `features` must point to `rows * tn_feature_count()` doubles and `out` to
 * `rows` doubles.
 */
enum TnStatus tn_baseline_predict_features(const struct TnBaseline *model,
                                           const double *features,
                                           size_t rows,
                                           double *out);

/**
 * Releases a baseline handle; null is ignored.
 *
 * # Safety
 * `model` must come from [`tn_baseline_load`] and not be used afterwards.
 */
void tn_baseline_free(struct TnBaseline *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THEFTNET_H */
