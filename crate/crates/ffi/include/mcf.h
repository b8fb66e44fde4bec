#ifndef MCF_H
#define MCF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MCF_STATUS_OK = 0,
  MCF_STATUS_NULL_POINTER = 1,
  MCF_STATUS_INVALID_ARGUMENT = 2,
  MCF_STATUS_DATA = 3,
  MCF_STATUS_NUMERICAL = 4,
  MCF_STATUS_IO = 5,
  MCF_STATUS_PANIC = 6,
} McfStatus;

/**
 * A fitted forest with its effect estimates.
 */
typedef struct McfResult McfResult;

/**
 * An estimation sample: outcome, treatment arm and covariates.
 */
typedef struct McfSample McfSample;

typedef struct {
  size_t n_trees;
  uint64_t seed;
  double subsample_fraction;
  size_t min_leaf_per_arm;
  /**
   * 0 selects ceil(sqrt(p)).
   */
  size_t mtry;
  /**
   * Inverse arm-share weights when aggregating.
   */
  bool share_weights;
  /**
   * Minimum estimated arm probability; 0 or less skips the check.
   */
  double support_threshold;
} McfOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *mcf_last_error(void);

McfOptions mcf_options_default(void);

/**
 * Build a sample from row-major covariates `x` (`n` × `p`), outcomes `y`
 * and arm codes `d` (0..=3). `unordered` (nullable) flags categorical
 * columns; `z` (nullable, `n_z` entries) lists heterogeneity columns.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
McfStatus mcf_sample_from_arrays(const double *y,
                                 const uint8_t *d,
                                 const double *x,
                                 size_t n,
                                 size_t p,
                                 const bool *unordered,
                                 const size_t *z,
                                 size_t n_z,
                                 McfSample **out);

/**
 * Draw a synthetic sample. `preset` is one of "validation",
 * "income_slope", "flat", "placebo"; `n` = 0 keeps the preset size.
 *
 * # Safety
 * `preset` must be a NUL-terminated string.
 */
McfStatus mcf_sample_simulate(const char *preset, uint64_t seed, size_t n, McfSample **out);

/**
 * Number of rows, 0 for a null handle.
 *
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t mcf_sample_len(const McfSample *sample);

/**
 * # Safety
 * `sample` must be null or a handle not freed before.
 */
void mcf_sample_free(McfSample *sample);

/**
 * Common support check, honest forest and effect estimation.
 *
 * # Safety
 * `sample` must be a live handle; `options` null or valid.
 */
McfStatus mcf_estimate(const McfSample *sample, const McfOptions *options, McfResult **out);

/**
 * Average effect of arm `treated` against arm `control`.
 *
 * # Safety
 * `result` must be a live handle; outputs null or writable.
 */
McfStatus mcf_result_effect(const McfResult *result,
                            size_t treated,
                            size_t control,
                            double *estimate,
                            double *se,
                            double *p_value);

/**
 * Potential outcome level of `arm`.
 *
 * # Safety
 * `result` must be a live handle; outputs null or writable.
 */
McfStatus mcf_result_potential_outcome(const McfResult *result,
                                       size_t arm,
                                       double *estimate,
                                       double *se);

/**
 * Rows kept after the support check (the length of IATE vectors).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t mcf_result_len(const McfResult *result);

/**
 * Original row index of every kept row into `out` (`len` entries).
 *
 * # Safety
 * `out` must hold `len` values.
 */
McfStatus mcf_result_kept_rows(const McfResult *result, size_t *out, size_t len);

/**
 * Individual effects of `treated` vs `control` per kept row; NaN where a
 * row has no support.
 *
 * # Safety
 * `out` must hold `len` values.
 */
McfStatus mcf_result_iates(const McfResult *result,
                           size_t treated,
                           size_t control,
                           double *out,
                           size_t len);

/**
 * Effect table as JSON; free with [`mcf_string_free`].
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
McfStatus mcf_result_to_json(const McfResult *result, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void mcf_string_free(char *s);

/**
 * # Safety
 * `result` must be null or a handle not freed before.
 */
void mcf_result_free(McfResult *result);

/**
 * `100 * effect / baseline`.
 *
 * # Safety
 * `out` must be writable.
 */
McfStatus mcf_relative_effect(double effect, double baseline, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCF_H */
