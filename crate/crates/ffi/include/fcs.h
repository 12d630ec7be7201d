#ifndef FCS_H
#define FCS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcsStatus {
  FCS_STATUS_OK = 0,
  FCS_STATUS_NULL_POINTER = 1,
  FCS_STATUS_INVALID_ARGUMENT = 2,
  FCS_STATUS_DOMAIN_ERROR = 3,
  FCS_STATUS_DEGENERATE_WEIGHTS = 4,
  FCS_STATUS_NUMERIC_ERROR = 5,
  FCS_STATUS_UNSUPPORTED = 6,
  FCS_STATUS_IO_ERROR = 7,
  FCS_STATUS_PANIC = 8,
} FcsStatus;

/**
 * Opaque landscape handle.
 */
typedef struct FcsLandscape FcsLandscape;

/**
 * Opaque randomized staircase set.
 */
typedef struct FcsStaircase FcsStaircase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fcs_last_error_message(void);

/**
 * Weighted `beta`-quantile of `len` atoms with nonnegative weights.
 *
 * # Safety
 * `support` and `weights` must point to `len` doubles; `out` must be writable.
 */
enum FcsStatus fcs_weighted_quantile(const double *support,
                                     const double *weights,
                                     uintptr_t len,
                                     double beta,
                                     double *out);

/**
 * Lower bound of the weighted `beta`-quantile; may be `-inf`.
 *
 * # Safety
 * As for [`fcs_weighted_quantile`].
 */
enum FcsStatus fcs_weighted_quantile_lower_bound(const double *support,
                                                 const double *weights,
                                                 uintptr_t len,
                                                 double beta,
                                                 double *out);

/**
 * Randomized quantile driven by the caller's uniform `u` in `[0, 1]`.
 *
 * # Safety
 * As for [`fcs_weighted_quantile`].
 */
enum FcsStatus fcs_randomized_quantile(const double *support,
                                       const double *weights,
                                       uintptr_t len,
                                       double beta,
                                       double u,
                                       double *out);

/**
 * Synthetic landscape featurized with interactions up to `feature_order`.
 *
 * # Safety
 * `coeff_sd` must point to `max_order` doubles; `out` must be writable.
 */
enum FcsStatus fcs_landscape_synthetic(uintptr_t length,
                                       uintptr_t max_order,
                                       const double *coeff_sd,
                                       double noise_sd,
                                       uint64_t seed,
                                       uintptr_t feature_order,
                                       struct FcsLandscape **out);

/**
 * Loads a landscape CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FcsStatus fcs_landscape_load(const char *path,
                                  uintptr_t feature_order,
                                  struct FcsLandscape **out);

/**
 * Number of sequences, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a live landscape handle.
 */
uintptr_t fcs_landscape_size(const struct FcsLandscape *handle);

/**
 * # Safety
 * `handle` must be a live landscape handle; `out` must be writable.
 */
enum FcsStatus fcs_landscape_fitness(const struct FcsLandscape *handle,
                                     uintptr_t index,
                                     double *out);

/**
 * # Safety
 * `handle` must be null or a handle not yet freed.
 */
void fcs_landscape_free(struct FcsLandscape *handle);

/**
 * Number of points on the grid `lo:hi:step`, or 0 if the grid is invalid.
 */
uintptr_t fcs_grid_len(double lo, double hi, double step);

/**
 * Full conformal set for ridge regression under a Boltzmann design, with
 * training and test inputs given as landscape indices. Writes one flag per
 * grid point (see [`fcs_grid_len`]).
 *
 * # Safety
 * `train_ids` and `train_labels` must point to `n` values; `flags` must
 * point to `flags_len` writable bytes.
 */
enum FcsStatus fcs_full_conformal_ridge(const struct FcsLandscape *landscape,
                                        const uintptr_t *train_ids,
                                        const double *train_labels,
                                        uintptr_t n,
                                        uintptr_t test_id,
                                        double grid_lo,
                                        double grid_hi,
                                        double grid_step,
                                        double alpha,
                                        double gamma,
                                        double lambda,
                                        uint8_t *flags,
                                        uintptr_t flags_len);

/**
 * Samples a randomized staircase set from precomputed calibration scores
 * and log likelihood ratios, centred at `prediction` with scale `scale`.
 *
 * # Safety
 * `scores` and `log_ratios` must point to `m` doubles; `out` must be writable.
 */
enum FcsStatus fcs_staircase_sample(const double *scores,
                                    const double *log_ratios,
                                    uintptr_t m,
                                    double test_log_ratio,
                                    double alpha,
                                    double prediction,
                                    double scale,
                                    uint64_t seed,
                                    struct FcsStaircase **out);

/**
 * Number of disjoint intervals, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a live staircase handle.
 */
uintptr_t fcs_staircase_interval_count(const struct FcsStaircase *handle);

/**
 * Bounds of interval `index`; bounds may be infinite.
 *
 * # Safety
 * `handle` must be a live staircase handle; `lo` and `hi` must be writable.
 */
enum FcsStatus fcs_staircase_interval(const struct FcsStaircase *handle,
                                      uintptr_t index,
                                      double *lo,
                                      double *hi);

/**
 * Writes 1 to `out` when `y` lies in the set and 0 otherwise.
 *
 * # Safety
 * `handle` must be a live staircase handle; `out` must be writable.
 */
enum FcsStatus fcs_staircase_contains(const struct FcsStaircase *handle, double y, uint8_t *out);

/**
 * # Safety
 * `handle` must be null or a handle not yet freed.
 */
void fcs_staircase_free(struct FcsStaircase *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FCS_H */
