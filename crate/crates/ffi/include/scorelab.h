#ifndef SCORELAB_H
#define SCORELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScorelabStatus {
  SCORELAB_STATUS_OK = 0,
  SCORELAB_STATUS_NULL_POINTER = 1,
  SCORELAB_STATUS_INVALID_INPUT = 2,
  SCORELAB_STATUS_DOMAIN = 3,
  SCORELAB_STATUS_UNSUPPORTED = 4,
  SCORELAB_STATUS_QUADRATURE = 5,
  SCORELAB_STATUS_CONFIG = 6,
  SCORELAB_STATUS_DIVERGED = 7,
  SCORELAB_STATUS_IO = 8,
  SCORELAB_STATUS_PANIC = 9,
} ScorelabStatus;

/**
 * Opaque density handle.
 */
typedef struct ScorelabDensity ScorelabDensity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after success.
 * The pointer stays valid until the next scorelab call on this thread.
 */
const char *scorelab_last_error(void);

/**
 * Parse a density spec (TOML text) into a new handle.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ScorelabStatus scorelab_density_from_spec(const char *spec, struct ScorelabDensity **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `d` must come from `scorelab_density_from_spec` and not be used after.
 */
void scorelab_density_free(struct ScorelabDensity *d);

/**
 * # Safety
 * `d` must be a live handle and `out` a valid pointer.
 */
enum ScorelabStatus scorelab_density_dim(const struct ScorelabDensity *d, size_t *out);

/**
 * Unnormalized log density at `x`; −∞ outside the support.
 *
 * # Safety
 * `x` must hold `len` doubles and `out` be a valid pointer.
 */
enum ScorelabStatus scorelab_log_density(const struct ScorelabDensity *d,
                                         const double *x,
                                         size_t len,
                                         double *out);

/**
 * Score s(t, x) written to `out` (`len` doubles).
 *
 * # Safety
 * `x` and `out` must each hold `len` doubles.
 */
enum ScorelabStatus scorelab_score(const struct ScorelabDensity *d,
                                   double t,
                                   const double *x,
                                   size_t len,
                                   double *out);

/**
 * Jacobian ∇s(t, x), row-major, written to `out` (`len * len` doubles).
 *
 * # Safety
 * `x` must hold `len` doubles and `out` `len * len`.
 */
enum ScorelabStatus scorelab_score_jacobian(const struct ScorelabDensity *d,
                                            double t,
                                            const double *x,
                                            size_t len,
                                            double *out);

/**
 * Ascending eigenvalues of a symmetric row-major `n × n` matrix.
 *
 * # Safety
 * `m` must hold `n * n` doubles and `values` `n`.
 */
enum ScorelabStatus scorelab_sym_eigs(const double *m, size_t n, double *values);

/**
 * Empirical W₂ between two 1D samples.
 *
 * # Safety
 * `a` must hold `na` doubles, `b` `nb`, and `out` be a valid pointer.
 */
enum ScorelabStatus scorelab_wasserstein2_1d(const double *a,
                                             size_t na,
                                             const double *b,
                                             size_t nb,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCORELAB_H */
