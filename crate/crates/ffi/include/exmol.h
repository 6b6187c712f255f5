#ifndef EXMOL_H
#define EXMOL_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExmolStatus {
  EXMOL_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an unknown enum value.
   */
  EXMOL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Parameters, mesh or configuration rejected.
   */
  EXMOL_STATUS_INVALID_INPUT = 2,
  /**
   * The numerical solver failed.
   */
  EXMOL_STATUS_SOLVER_FAILURE = 3,
  /**
   * `q1 = 0`: no finite exercise boundary.
   */
  EXMOL_STATUS_NO_EARLY_EXERCISE = 4,
  /**
   * Internal panic caught at the boundary.
   */
  EXMOL_STATUS_PANIC = 5,
} ExmolStatus;

typedef enum ExmolStyle {
  EXMOL_STYLE_EUROPEAN = 0,
  EXMOL_STYLE_AMERICAN = 1,
} ExmolStyle;

typedef enum ExmolBoundaryCondition {
  EXMOL_BOUNDARY_CONDITION_STANDARD_VEGA = 0,
  EXMOL_BOUNDARY_CONDITION_VENTTSEL_FULL = 1,
  EXMOL_BOUNDARY_CONDITION_VENTTSEL_CONSTANT_VOL = 2,
} ExmolBoundaryCondition;

/**
 * Opaque model parameter set.
 */
typedef struct ExmolParams ExmolParams;

/**
 * Opaque solved price surface.
 */
typedef struct ExmolSolution ExmolSolution;

/**
 * Discretization. A null `segments` selects the reference `s` axis.
 */
typedef struct ExmolMeshSpec {
  size_t n_time;
  size_t m_var;
  double v_max;
  /**
   * `start:end:intervals,...`
   */
  const char *segments;
} ExmolMeshSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *exmol_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *exmol_version(void);

/**
 * Reference parameter set. Never null.
 */
struct ExmolParams *exmol_params_reference(void);

/**
 * Parses flat `key = value` text; every model key is required, unknown keys are rejected.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum ExmolStatus exmol_params_parse(const char *text, struct ExmolParams **out);

/**
 * # Safety
 * `params` must come from this library and not be used afterwards; null is ignored.
 */
void exmol_params_free(struct ExmolParams *params);

/**
 * # Safety
 * `params` must be a live handle and `key` a NUL-terminated string.
 */
enum ExmolStatus exmol_params_set(struct ExmolParams *params, const char *key, double value);

/**
 * # Safety
 * `params` must be a live handle, `key` a NUL-terminated string and `out` writable.
 */
enum ExmolStatus exmol_params_get(const struct ExmolParams *params, const char *key, double *out);

/**
 * `Ok` when every model constraint holds, `InvalidInput` with the violations otherwise.
 *
 * # Safety
 * `params` must be a live handle.
 */
enum ExmolStatus exmol_params_validate(const struct ExmolParams *params);

/**
 * Exercise boundary at maturity, `A(0+, v)`, in yield-ratio units.
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum ExmolStatus exmol_boundary_limit(const struct ExmolParams *params, double *out);

/**
 * Closed-form constant-volatility price at ratio `s` and time to maturity `tau`.
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum ExmolStatus exmol_margrabe_price(const struct ExmolParams *params,
                                      double s,
                                      double tau,
                                      double *out);

/**
 * Solves the pricing problem on the given mesh.
 *
 * # Safety
 * `params` must be a live handle, `mesh` readable (its `segments` null or
 * NUL-terminated) and `out` writable.
 */
enum ExmolStatus exmol_solve(const struct ExmolParams *params,
                             const struct ExmolMeshSpec *mesh,
                             enum ExmolStyle style,
                             enum ExmolBoundaryCondition bc,
                             struct ExmolSolution **out);

/**
 * # Safety
 * `solution` must come from [`exmol_solve`] and not be used afterwards; null is ignored.
 */
void exmol_solution_free(struct ExmolSolution *solution);

/**
 * Price at `t = 0` for ratio `s` and variance `v`.
 *
 * # Safety
 * `solution` must be a live handle and `out` writable.
 */
enum ExmolStatus exmol_solution_price(const struct ExmolSolution *solution,
                                      double s,
                                      double v,
                                      double *out);

/**
 * Delta `dV/ds` at `t = 0`.
 *
 * # Safety
 * `solution` must be a live handle and `out` writable.
 */
enum ExmolStatus exmol_solution_delta(const struct ExmolSolution *solution,
                                      double s,
                                      double v,
                                      double *out);

/**
 * Early exercise boundary `A(0, v)`; `NoEarlyExercise` for a European solution.
 *
 * # Safety
 * `solution` must be a live handle and `out` writable.
 */
enum ExmolStatus exmol_solution_boundary(const struct ExmolSolution *solution,
                                         double v,
                                         double *out);

/**
 * Least-squares Monte Carlo American price with default basis and antithetics.
 *
 * # Safety
 * `params` must be a live handle; `price` and `std_error` writable.
 */
enum ExmolStatus exmol_lsmc_price(const struct ExmolParams *params,
                                  double s0,
                                  double v0,
                                  size_t paths,
                                  size_t steps,
                                  uint64_t seed,
                                  double *price,
                                  double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXMOL_H */
