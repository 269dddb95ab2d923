#ifndef PATHMED_H
#define PATHMED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Nonzero codes from 2 to 5 match the command-line exit codes.
 */
typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_CONFIG = 2,
  PM_STATUS_DATA = 3,
  PM_STATUS_NUMERIC = 4,
  PM_STATUS_IO = 5,
  PM_STATUS_PANIC = 6,
} PmStatus;

/**
 * Opaque dataset handle.
 */
typedef struct PmDataset PmDataset;

/**
 * Estimation options. Obtain defaults from [`pm_options_default`].
 */
typedef struct PmOptions {
  /**
   * Method name (`eif2`, `eif1`, `tmle`, `ri`, ...); null means `eif2`.
   */
  const char *method;
  /**
   * Learner for every nuisance (`glm`, `glm2`, `boost`, `stack`, `saturated`); null means `glm`.
   */
  const char *learner;
  /**
   * Cross-fitting folds; 0 or 1 disables cross-fitting.
   */
  uint32_t folds;
  uint64_t seed;
  double clip;
} PmOptions;

/**
 * One effect estimate. `se`, `ci_low` and `ci_high` are NaN when the method
 * has no influence function.
 */
typedef struct PmEffect {
  double point;
  double se;
  double ci_low;
  double ci_high;
  double theta_comparison;
  double theta_baseline;
} PmEffect;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pm_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *pm_last_error(void);

struct PmOptions pm_options_default(void);

/**
 * Builds a dataset from row-major arrays.
 *
 * `x` is `n × p` (may be null when `p == 0`), `a` and `y` have length `n`,
 * `m` is `n × k` with one univariate mediator per column in causal order
 * (may be null when `k == 0`). `discrete` is null or `k` flags.
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes.
 */
enum PmStatus pm_dataset_new(size_t n,
                             size_t p,
                             size_t k,
                             const double *x,
                             const double *a,
                             const double *m,
                             const uint8_t *discrete,
                             const double *y,
                             struct PmDataset **out);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must come from [`pm_dataset_new`] and not be freed twice.
 */
void pm_dataset_free(struct PmDataset *ds);

/**
 * Number of units, or 0 for null.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t pm_dataset_n(const struct PmDataset *ds);

/**
 * Number of mediator blocks, or 0 for null.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t pm_dataset_k(const struct PmDataset *ds);

/**
 * Estimates `θ` for the regime `regime[0..len]` (entries 0 or 1, `len = K + 1`).
 * `se` receives NaN when the method has no influence function; it may be null.
 *
 * # Safety
 * `ds` must be a live handle; `regime` must hold `len` bytes.
 */
enum PmStatus pm_estimate_theta(const struct PmDataset *ds,
                                const uint8_t *regime,
                                size_t len,
                                const struct PmOptions *opts,
                                double *theta,
                                double *se);

/**
 * Estimates a named effect (`NDE`, `cPSE_M2`, ...) or a regime pair `011-001`.
 *
 * # Safety
 * `ds` must be a live handle, `effect` a NUL-terminated string and `out` writable.
 */
enum PmStatus pm_estimate_effect(const struct PmDataset *ds,
                                 const char *effect,
                                 const struct PmOptions *opts,
                                 struct PmEffect *out);

/**
 * Decomposes the ATE into `K + 1` components in the default order (direct
 * path first). `components` must have room for `capacity` entries; the
 * number written is stored in `written`.
 *
 * # Safety
 * `ds` must be a live handle; output pointers must be writable.
 */
enum PmStatus pm_decompose(const struct PmDataset *ds,
                           const struct PmOptions *opts,
                           struct PmEffect *components,
                           size_t capacity,
                           size_t *written,
                           struct PmEffect *ate);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PATHMED_H */
