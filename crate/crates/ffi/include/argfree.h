#ifndef ARGFREE_H
#define ARGFREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ArgfreeStatus {
  ARGFREE_STATUS_OK = 0,
  ARGFREE_STATUS_NULL_POINTER = 1,
  ARGFREE_STATUS_INVALID_ARGUMENT = 2,
  ARGFREE_STATUS_CONFIG_ERROR = 3,
  ARGFREE_STATUS_NUMERICAL_ABORT = 4,
  ARGFREE_STATUS_PANIC = 5,
} ArgfreeStatus;

typedef enum ArgfreeAlgorithm {
  ARGFREE_ALGORITHM_ARGFREE = 0,
  ARGFREE_ALGORITHM_ARGFREE_EM = 1,
  ARGFREE_ALGORITHM_EXACT_GRADIENT_BASELINE = 2,
} ArgfreeAlgorithm;

/**
 * Per-row statistics exposed by [`argfree_result_series`].
 */
typedef enum ArgfreeSeries {
  ARGFREE_SERIES_RELATIVE_LOSS = 0,
  ARGFREE_SERIES_GRAD_NORM = 1,
  ARGFREE_SERIES_THETA1 = 2,
  ARGFREE_SERIES_THETA2 = 3,
  ARGFREE_SERIES_THETA3 = 4,
  ARGFREE_SERIES_THETA4 = 5,
  ARGFREE_SERIES_THETA5 = 6,
} ArgfreeSeries;

/**
 * An experiment configuration.
 */
typedef struct ArgfreeExperiment ArgfreeExperiment;

/**
 * Aggregated statistics and per-replica traces of a finished experiment.
 */
typedef struct ArgfreeResult ArgfreeResult;

/**
 * A single replica advanced step by step.
 */
typedef struct ArgfreeSolver ArgfreeSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *argfree_last_error(void);

/**
 * Parse a JSON experiment configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ArgfreeStatus argfree_experiment_from_json(const char *json, struct ArgfreeExperiment **out);

/**
 * The formation benchmark with its reference parameters.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArgfreeStatus argfree_experiment_benchmark_defaults(enum ArgfreeAlgorithm algorithm,
                                                         size_t k_max,
                                                         uint64_t seed,
                                                         struct ArgfreeExperiment **out);

/**
 * Serialize the configuration; release the string with [`argfree_string_free`].
 *
 * # Safety
 * `exp` must come from this library; `out` must be writable.
 */
enum ArgfreeStatus argfree_experiment_to_json(const struct ArgfreeExperiment *exp, char **out);

/**
 * # Safety
 * `exp` must be null or come from this library, and not be used afterwards.
 */
void argfree_experiment_free(struct ArgfreeExperiment *exp);

/**
 * Convergence certificate as a JSON string; release it with
 * [`argfree_string_free`].
 *
 * # Safety
 * `exp` must come from this library; `out` must be writable.
 */
enum ArgfreeStatus argfree_certify_json(const struct ArgfreeExperiment *exp, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void argfree_string_free(char *s);

/**
 * Run all Monte Carlo replicas.
 *
 * # Safety
 * `exp` must come from this library; `out` must be writable.
 */
enum ArgfreeStatus argfree_experiment_run(const struct ArgfreeExperiment *exp,
                                          struct ArgfreeResult **out);

/**
 * Number of recorded rows (0 for a null handle).
 *
 * # Safety
 * `res` must be null or come from this library.
 */
size_t argfree_result_len(const struct ArgfreeResult *res);

/**
 * Number of replicas (0 for a null handle).
 *
 * # Safety
 * `res` must be null or come from this library.
 */
size_t argfree_result_runs(const struct ArgfreeResult *res);

/**
 * Copy the recorded iteration indices into `k` (`len` entries).
 *
 * # Safety
 * `k` must have room for `len` values.
 */
enum ArgfreeStatus argfree_result_iterations(const struct ArgfreeResult *res,
                                             size_t *k,
                                             size_t len);

/**
 * Copy the per-row mean and population standard deviation of one series.
 * Undefined entries are NaN.
 *
 * # Safety
 * `mean` and `std` must each have room for `len` values.
 */
enum ArgfreeStatus argfree_result_series(const struct ArgfreeResult *res,
                                         enum ArgfreeSeries series,
                                         double *mean,
                                         double *std,
                                         size_t len);

/**
 * # Safety
 * `res` must be null or come from this library, and not be used afterwards.
 */
void argfree_result_free(struct ArgfreeResult *res);

/**
 * Initialize replica `replica` of an experiment (seed `solver.seed + replica`).
 *
 * # Safety
 * `exp` must come from this library; `out` must be writable.
 */
enum ArgfreeStatus argfree_solver_new(const struct ArgfreeExperiment *exp,
                                      uint64_t replica,
                                      struct ArgfreeSolver **out);

/**
 * Advance `n_steps` rounds.
 *
 * # Safety
 * `solver` must come from this library.
 */
enum ArgfreeStatus argfree_solver_step(struct ArgfreeSolver *solver, size_t n_steps);

/**
 * Rounds completed so far (0 for a null handle).
 *
 * # Safety
 * `solver` must be null or come from this library.
 */
size_t argfree_solver_iteration(const struct ArgfreeSolver *solver);

/**
 * Stacked decision dimension `n` (0 for a null handle).
 *
 * # Safety
 * `solver` must be null or come from this library.
 */
size_t argfree_solver_dim(const struct ArgfreeSolver *solver);

/**
 * Copy the stacked iterate into `x` (`len` must equal the dimension).
 *
 * # Safety
 * `x` must have room for `len` values.
 */
enum ArgfreeStatus argfree_solver_state(const struct ArgfreeSolver *solver, double *x, size_t len);

/**
 * Lyapunov components `θ₁…θ₅` of the current state (NaN where undefined).
 *
 * # Safety
 * `theta` must have room for 5 values.
 */
enum ArgfreeStatus argfree_solver_theta(const struct ArgfreeSolver *solver, double *theta);

/**
 * # Safety
 * `solver` must be null or come from this library, and not be used afterwards.
 */
void argfree_solver_free(struct ArgfreeSolver *solver);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARGFREE_H */
