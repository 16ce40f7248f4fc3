#ifndef ADJOINT_LAB_H
#define ADJOINT_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum AdjlStatus {
  ADJL_STATUS_OK = 0,
  ADJL_STATUS_NULL_POINTER = 1,
  ADJL_STATUS_INVALID_ARGUMENT = 2,
  ADJL_STATUS_UNKNOWN_NAME = 3,
  ADJL_STATUS_DIMENSION = 4,
  ADJL_STATUS_SOLVER = 5,
  ADJL_STATUS_CONFIG = 6,
  ADJL_STATUS_IO = 7,
  ADJL_STATUS_PANIC = 8,
} AdjlStatus;

// Gradient pipelines.
typedef enum AdjlMethod {
  // Adjoint ODE integrated backward, gradient by quadrature.
  ADJL_METHOD_CONTINUOUS_ADJOINT = 0,
  // Overwriting resets with the weighted interval sum.
  ADJL_METHOD_CONTINUOUS_ADJOINT_HARD_RESET = 1,
  // Exact transpose of the forward discretization.
  ADJL_METHOD_DISCRETE_ADJOINT = 2,
  // Reverse accumulation through the recorded steps.
  ADJL_METHOD_BACKPROP = 3,
  // Central finite differences of the discrete loss.
  ADJL_METHOD_FINITE_DIFFERENCE = 4,
  // One tangent solve per parameter.
  ADJL_METHOD_TANGENT = 5,
} AdjlMethod;

// A problem: field, loss, parameters and initial state.
typedef struct AdjlProblem AdjlProblem;

// A forward solution with its step records.
typedef struct AdjlTrajectory AdjlTrajectory;

// Message for the last failed call on this thread, or null. Valid until
// the next `adjl_` call on the same thread.
const char *adjl_last_error(void);

// Loads a named problem from the zoo with its nominal parameters.
enum AdjlStatus adjl_problem_from_zoo(const char *name, struct AdjlProblem **out);

void adjl_problem_free(struct AdjlProblem *problem);

// State dimension `N` and parameter dimension `P`.
enum AdjlStatus adjl_problem_dims(const struct AdjlProblem *problem,
                                  size_t *n_state,
                                  size_t *n_param);

enum AdjlStatus adjl_problem_set_theta(struct AdjlProblem *problem,
                                       const double *theta,
                                       size_t len);

enum AdjlStatus adjl_problem_set_z0(struct AdjlProblem *problem, const double *z0, size_t len);

// Solves forward over `[t0, T]` in `n_steps` uniform steps with the named
// scheme (`euler`, `heun`, `rk4`, `ab2`).
enum AdjlStatus adjl_solve_forward(const struct AdjlProblem *problem,
                                   const char *scheme,
                                   size_t n_steps,
                                   struct AdjlTrajectory **out);

void adjl_trajectory_free(struct AdjlTrajectory *traj);

// Copies `z(T)` into `out` (length `N`).
enum AdjlStatus adjl_trajectory_final_state(const struct AdjlTrajectory *traj,
                                            double *out,
                                            size_t len);

// `dL/dθ` by `method` into `out` (length `P`). `backward_scheme` applies
// to the continuous methods only and may be null to reuse the forward
// scheme; it must be null for the others. The trajectory must come from
// this problem with its current parameters and initial state.
enum AdjlStatus adjl_gradient(const struct AdjlProblem *problem,
                              const struct AdjlTrajectory *traj,
                              enum AdjlMethod method,
                              const char *backward_scheme,
                              double *out,
                              size_t len);

// Runs a suite given as TOML text and writes reports under `out_dir`.
// `passed` receives 1 if every assertion held, else 0.
enum AdjlStatus adjl_run_suite(const char *config_toml, const char *out_dir, int *passed);

#endif  /* ADJOINT_LAB_H */
