#ifndef FPT_JOINT_H
#define FPT_JOINT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FptBoundaryKind {
  FPT_BOUNDARY_KIND_CONSTANT = 0,
  FPT_BOUNDARY_KIND_COSINE = 1,
} FptBoundaryKind;

typedef enum FptProcessKind {
  FPT_PROCESS_KIND_STANDARD_BROWNIAN = 0,
  FPT_PROCESS_KIND_SCALED_BROWNIAN = 1,
  FPT_PROCESS_KIND_GEOMETRIC_BROWNIAN = 2,
  FPT_PROCESS_KIND_ORNSTEIN_UHLENBECK = 3,
} FptProcessKind;

typedef enum FptRepresentation {
  FPT_REPRESENTATION_ITO_MC_KEAN = 0,
  FPT_REPRESENTATION_FORTET = 1,
} FptRepresentation;

typedef enum FptStatus {
  FPT_STATUS_OK = 0,
  FPT_STATUS_NULL_POINTER = 1,
  FPT_STATUS_DOMAIN = 2,
  FPT_STATUS_INVALID_STRIP = 3,
  FPT_STATUS_NUMERICAL = 4,
  FPT_STATUS_PANIC = 5,
} FptStatus;

/**
 * Opaque strip problem.
 */
typedef struct FptProblem FptProblem;

/**
 * Opaque sub-density arrays.
 */
typedef struct FptSubDensities FptSubDensities;

/**
 * Process description; fields a kind does not use are ignored.
 */
typedef struct FptProcessParams {
  enum FptProcessKind kind;
  double x0;
  double t0;
  double sigma;
  double theta;
  double mu;
} FptProcessParams;

/**
 * `c` for a constant boundary, `c + amplitude·cos(angular_frequency·t + phase)`
 * for a cosine one.
 */
typedef struct FptBoundarySpec {
  enum FptBoundaryKind kind;
  double c;
  double amplitude;
  double angular_frequency;
  double phase;
} FptBoundarySpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *fpt_last_error_message(void);

/**
 * Build a strip problem. On success `*out` owns a handle for
 * [`fpt_problem_free`].
 *
 * # Safety
 * Non-null pointers must be valid for reads (inputs) or writes (`out`).
 */
enum FptStatus fpt_problem_new(const struct FptProcessParams *process,
                               const struct FptBoundarySpec *lower,
                               const struct FptBoundarySpec *upper,
                               struct FptProblem **out);

/**
 * # Safety
 * `problem` must come from [`fpt_problem_new`] and not be freed twice.
 */
void fpt_problem_free(struct FptProblem *problem);

/**
 * Euler solution on the knots `t0 + i·h`, `i = 1..=n`.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be valid for writes.
 */
enum FptStatus fpt_solve_two_boundary(const struct FptProblem *problem,
                                      double h,
                                      size_t n,
                                      struct FptSubDensities **out);

/**
 * Sub-densities by numerical Laplace inversion with default controls.
 * Standard Brownian motion and constant boundaries only.
 *
 * # Safety
 * As [`fpt_solve_two_boundary`].
 */
enum FptStatus fpt_laplace_sub_densities(const struct FptProblem *problem,
                                         enum FptRepresentation representation,
                                         double h,
                                         size_t n,
                                         struct FptSubDensities **out);

/**
 * Number of knots, or 0 for a null handle.
 *
 * # Safety
 * `sub` must be null or a live handle.
 */
size_t fpt_subdensities_len(const struct FptSubDensities *sub);

/**
 * Copy `len` values into each non-null buffer; `clamped` receives 0 or 1.
 *
 * # Safety
 * Each non-null buffer must hold `len` elements.
 */
enum FptStatus fpt_subdensities_copy(const struct FptSubDensities *sub,
                                     double *lower,
                                     double *upper,
                                     uint8_t *clamped,
                                     size_t len);

/**
 * `h·Σ g_lower` and `h·Σ g_upper`.
 *
 * # Safety
 * `sub` must be a live handle; outputs must be valid for writes.
 */
enum FptStatus fpt_subdensities_mass(const struct FptSubDensities *sub,
                                     double *lower,
                                     double *upper);

/**
 * # Safety
 * `sub` must come from this library and not be freed twice.
 */
void fpt_subdensities_free(struct FptSubDensities *sub);

/**
 * Image-series sub-densities of a standard Brownian motion in `(a, b)` after
 * `elapsed` time units, summing `|k| ≤ max_terms`.
 *
 * # Safety
 * Outputs must be valid for writes.
 */
enum FptStatus fpt_bm_sub_density(double elapsed,
                                  double x0,
                                  double a,
                                  double b,
                                  size_t max_terms,
                                  double *lower,
                                  double *upper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPT_JOINT_H */
