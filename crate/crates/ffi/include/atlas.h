#ifndef ATLAS_H
#define ATLAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AtlasStatus {
  ATLAS_STATUS_OK = 0,
  ATLAS_STATUS_NULL_POINTER = 1,
  ATLAS_STATUS_INVALID_ARGUMENT = 2,
  ATLAS_STATUS_IO = 3,
  ATLAS_STATUS_PARSE = 4,
  ATLAS_STATUS_DIMENSION_MISMATCH = 5,
  ATLAS_STATUS_EMPTY = 6,
  ATLAS_STATUS_MODEL_FORMAT = 7,
  ATLAS_STATUS_UNDEFINED = 8,
  ATLAS_STATUS_PANIC = 9,
} AtlasStatus;

/**
 * Opaque trained classifier.
 */
typedef struct AtlasModel AtlasModel;

/**
 * Opaque ESRI ASCII raster.
 */
typedef struct AtlasRaster AtlasRaster;

/**
 * Indicator values of one assemblage. Missing values are NaN (reals) or -1
 * (`most_critical`).
 */
typedef struct AtlasIndicators {
  /**
   * Rank 0..4 of the most critical status (LC..CR).
   */
  int32_t most_critical;
  /**
   * Status-weighted proportions indexed by rank.
   */
  double proportions[5];
  double threat;
  double shannon;
  /**
   * Members without a status.
   */
  size_t missing_status;
} AtlasIndicators;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * call into the library from the same thread.
 */
const char *atlas_last_error(void);

void atlas_clear_error(void);

/**
 * Loads a model file written by `atlas train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AtlasStatus atlas_model_load(const char *path, struct AtlasModel **out_model);

/**
 * # Safety
 * `model` must come from [`atlas_model_load`] and not be used afterwards. NULL is ignored.
 */
void atlas_model_free(struct AtlasModel *model);

/**
 * # Safety
 * `model` must be a live handle; the out pointers must be writable.
 */
enum AtlasStatus atlas_model_dims(const struct AtlasModel *model,
                                  size_t *n_features,
                                  size_t *n_classes);

/**
 * Writes the `n_classes` class probabilities for one feature vector.
 *
 * # Safety
 * `x` must hold `n_features` values and `probs` room for `n_classes`.
 */
enum AtlasStatus atlas_model_predict_proba(const struct AtlasModel *model,
                                           const double *x,
                                           size_t n_features,
                                           double *probs,
                                           size_t n_classes);

/**
 * Fraction of `true_probs` strictly below `lambda`.
 *
 * # Safety
 * `true_probs` must hold `n` values.
 */
enum AtlasStatus atlas_error_rate(const double *true_probs, size_t n, double lambda, double *rate);

/**
 * Largest threshold whose empirical miss rate stays within `epsilon`.
 *
 * # Safety
 * `true_probs` must hold `n` values; out pointers must be writable.
 */
enum AtlasStatus atlas_calibrate(const double *true_probs,
                                 size_t n,
                                 double epsilon,
                                 double *lambda,
                                 double *empirical_error);

/**
 * Thresholds a probability vector. `weights[k]` receives `eta[k]` for kept
 * species and 0 otherwise; `size` the number kept.
 *
 * # Safety
 * `eta` and `weights` must hold `n` values.
 */
enum AtlasStatus atlas_predict_set(const double *eta,
                                   size_t n,
                                   double lambda,
                                   double *weights,
                                   size_t *size);

/**
 * Indicators over an assemblage given as one weight per species (0 = absent)
 * and one status rank per species (-1 = no status). Weights are used as given;
 * pass a renormalized assemblage.
 *
 * # Safety
 * `weights` and `status_ranks` must hold `n` values; `result` must be writable.
 */
enum AtlasStatus atlas_indicators(const double *weights,
                                  const int32_t *status_ranks,
                                  size_t n,
                                  struct AtlasIndicators *result);

/**
 * Shannon entropy (natural log) of the weights; NaN for an empty assemblage.
 *
 * # Safety
 * `weights` must hold `n` values.
 */
enum AtlasStatus atlas_shannon(const double *weights, size_t n, double *h);

/**
 * Spearman rank correlation with a two-sided p-value.
 *
 * # Safety
 * `x` and `y` must hold `n` values.
 */
enum AtlasStatus atlas_spearman(const double *x,
                                const double *y,
                                size_t n,
                                double *rho,
                                double *p_value);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out_raster` must be writable.
 */
enum AtlasStatus atlas_raster_read(const char *path, struct AtlasRaster **out_raster);

/**
 * Rows, columns and nodata value.
 *
 * # Safety
 * `raster` must be a live handle; out pointers must be writable.
 */
enum AtlasStatus atlas_raster_dims(const struct AtlasRaster *raster,
                                   size_t *nrows,
                                   size_t *ncols,
                                   double *nodata);

/**
 * Row-major cell values, north row first; valid while the handle lives.
 *
 * # Safety
 * `raster` must be a live handle or NULL.
 */
const double *atlas_raster_data(const struct AtlasRaster *raster);

/**
 * # Safety
 * `raster` must come from [`atlas_raster_read`] and not be used afterwards. NULL is ignored.
 */
void atlas_raster_free(struct AtlasRaster *raster);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATLAS_H */
