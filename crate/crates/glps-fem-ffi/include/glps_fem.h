#ifndef GLPS_FEM_H
#define GLPS_FEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GlpsStatus {
  /**
   * The call succeeded.
   */
  GLPS_STATUS_OK = 0,
  /**
   * An argument was null, out of range, or otherwise invalid.
   */
  GLPS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The computation itself failed (singular system, I/O error, ...).
   */
  GLPS_STATUS_FAILURE = 2,
  /**
   * A panic was caught at the language boundary.
   */
  GLPS_STATUS_PANIC = 3,
} GlpsStatus;

/**
 * Problem selector.
 */
typedef enum GlpsProblem {
  GLPS_PROBLEM_DARCY = 0,
  GLPS_PROBLEM_STOKES = 1,
} GlpsProblem;

/**
 * Error-norm column of a convergence study.
 */
typedef enum GlpsColumn {
  GLPS_COLUMN_VELOCITY_L2 = 0,
  GLPS_COLUMN_VELOCITY_H1 = 1,
  GLPS_COLUMN_PRESSURE_L2 = 2,
  GLPS_COLUMN_TRIPLE = 3,
} GlpsColumn;

/**
 * Discrete solution on one mesh (opaque).
 */
typedef struct GlpsSolution GlpsSolution;

/**
 * Completed convergence study (opaque).
 */
typedef struct GlpsStudy GlpsStudy;

/**
 * One row of a convergence study: error norms of one refinement level.
 */
typedef struct GlpsErrorRow {
  size_t level;
  size_t cells;
  double h_max;
  double err_u_l2;
  double err_u_h1;
  double err_p_l2;
  double err_triple;
} GlpsErrorRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of this library as a NUL-terminated static string.
 */
const char *glps_version(void);

/**
 * Message of the most recent failure on this thread, as a NUL-terminated
 * string. Empty after a success. The pointer stays valid until the next
 * glps call on the same thread.
 */
const char *glps_last_error_message(void);

/**
 * Runs a mesh-refinement study against the built-in manufactured solution
 * and returns an opaque handle to the resulting error table.
 *
 * `levels` is the number of refinement levels (1 to 8), `initial_n` the
 * number of squares per side of the level-0 criss-cross mesh, `beta` the
 * interior stabilization strength, `zeta` the boundary penalty (Stokes
 * only), and `quad_degree` the quadrature degree (1 to 8). With `perturb`
 * set, interior vertices of every level are displaced pseudo-randomly
 * from `perturb_seed`, reproducibly.
 *
 * # Safety
 * `out_study` must be a valid, writable pointer. On success it receives a
 * handle that must be released with [`glps_study_free`].
 */
enum GlpsStatus glps_study_run(enum GlpsProblem problem,
                               size_t levels,
                               size_t initial_n,
                               double beta,
                               double zeta,
                               size_t quad_degree,
                               bool perturb,
                               uint64_t perturb_seed,
                               struct GlpsStudy **out_study);

/**
 * Number of rows (refinement levels) in the study, 0 for a null handle.
 *
 * # Safety
 * `study` must be null or a live handle from [`glps_study_run`].
 */
size_t glps_study_rows(const struct GlpsStudy *study);

/**
 * Copies row `index` of the study into `out_row`.
 *
 * # Safety
 * `study` must be a live handle from [`glps_study_run`] and `out_row` a
 * valid, writable pointer.
 */
enum GlpsStatus glps_study_row(const struct GlpsStudy *study,
                               size_t index,
                               struct GlpsErrorRow *out_row);

/**
 * Least-squares slope of log error against log h for one error column.
 * Fails on studies with fewer than two rows or non-positive errors.
 *
 * # Safety
 * `study` must be a live handle and `out_order` a valid, writable pointer.
 */
enum GlpsStatus glps_study_fitted_order(const struct GlpsStudy *study,
                                        enum GlpsColumn column,
                                        double *out_order);

/**
 * Releases a study handle. A null handle is ignored.
 *
 * # Safety
 * `study` must be null or a handle from [`glps_study_run`] that has not
 * been freed already.
 */
void glps_study_free(struct GlpsStudy *study);

/**
 * Assembles and solves one problem on the criss-cross mesh with `n`
 * squares per side, returning an opaque solution handle.
 *
 * # Safety
 * `out_solution` must be a valid, writable pointer. On success it
 * receives a handle that must be released with [`glps_solution_free`].
 */
enum GlpsStatus glps_solve(enum GlpsProblem problem,
                           size_t n,
                           double beta,
                           double zeta,
                           size_t quad_degree,
                           struct GlpsSolution **out_solution);

/**
 * Writes the coefficient counts of the solution: `out_velocity` receives
 * the number of velocity dofs (two per vertex), `out_pressure` the number
 * of pressure dofs (one per vertex). Either output may be null to skip it.
 *
 * # Safety
 * `solution` must be a live handle from [`glps_solve`]; non-null outputs
 * must be valid, writable pointers.
 */
enum GlpsStatus glps_solution_dofs(const struct GlpsSolution *solution,
                                   size_t *out_velocity,
                                   size_t *out_pressure);

/**
 * Relative residual of the solved linear system, NaN for a null handle.
 *
 * # Safety
 * `solution` must be null or a live handle from [`glps_solve`].
 */
double glps_solution_residual(const struct GlpsSolution *solution);

/**
 * Evaluates the discrete fields at a point of the unit square.
 * `out_velocity` receives two components, `out_pressure` one; either may
 * be null to skip it. Points outside the mesh are rejected.
 *
 * # Safety
 * `solution` must be a live handle; a non-null `out_velocity` must point
 * to at least two writable doubles, a non-null `out_pressure` to one.
 */
enum GlpsStatus glps_solution_eval(const struct GlpsSolution *solution,
                                   double x,
                                   double y,
                                   double *out_velocity,
                                   double *out_pressure);

/**
 * Writes the solution as a legacy ASCII VTK file at `path`.
 *
 * # Safety
 * `solution` must be a live handle and `path` a NUL-terminated string.
 */
enum GlpsStatus glps_solution_write_vtk(const struct GlpsSolution *solution, const char *path);

/**
 * Releases a solution handle. A null handle is ignored.
 *
 * # Safety
 * `solution` must be null or a handle from [`glps_solve`] that has not
 * been freed already.
 */
void glps_solution_free(struct GlpsSolution *solution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLPS_FEM_H */
