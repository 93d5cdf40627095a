#ifndef SCTEP_H
#define SCTEP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Objective of a solve or metric of a game.
 */
typedef enum SctepMetric {
  /**
   * Load curtailment; game values are avoided curtailment, MW.
   */
  SCTEP_METRIC_CURTAILMENT = 0,
  /**
   * Expected cost; game values are cost reductions, EUR/h.
   */
  SCTEP_METRIC_COST = 1,
} SctepMetric;

/**
 * Solver outcome as an integer.
 */
typedef enum SctepSolveStatus {
  SCTEP_SOLVE_STATUS_OPTIMAL = 0,
  SCTEP_SOLVE_STATUS_ITERATION_LIMIT = 1,
  SCTEP_SOLVE_STATUS_INFEASIBLE = 2,
  SCTEP_SOLVE_STATUS_NUMERICAL_FAILURE = 3,
} SctepSolveStatus;

/**
 * Result code of every fallible call.
 */
typedef enum SctepStatus {
  SCTEP_STATUS_OK = 0,
  SCTEP_STATUS_NULL_POINTER = 1,
  SCTEP_STATUS_INVALID_UTF8 = 2,
  SCTEP_STATUS_IO = 3,
  SCTEP_STATUS_PARSE = 4,
  SCTEP_STATUS_VALIDATION = 5,
  SCTEP_STATUS_INVALID_ARGUMENT = 6,
  SCTEP_STATUS_SOLVER = 7,
  SCTEP_STATUS_GAME = 8,
  SCTEP_STATUS_BUFFER_TOO_SMALL = 9,
  SCTEP_STATUS_PANIC = 10,
} SctepStatus;

/**
 * A validated planning case.
 */
typedef struct SctepCase SctepCase;

/**
 * Result of a game evaluation.
 */
typedef struct SctepGame SctepGame;

/**
 * Result of one planning solve.
 */
typedef struct SctepSolution SctepSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sctep_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *sctep_last_error(void);

/**
 * Frees a string returned by the library. Null is ignored.
 */
void sctep_string_free(char *s);

/**
 * Loads and validates a case JSON file.
 */
enum SctepStatus sctep_case_load(const char *path, struct SctepCase **out);

/**
 * Parses and validates a case from JSON text.
 */
enum SctepStatus sctep_case_from_json(const char *json, struct SctepCase **out);

/**
 * The bundled five-bus case.
 */
enum SctepStatus sctep_case_bundled(struct SctepCase **out);

void sctep_case_free(struct SctepCase *case_);

/**
 * Investment option ids in catalogue order. `needed` (nullable) receives
 * the count even when `len` is too small.
 */
enum SctepStatus sctep_case_option_ids(const struct SctepCase *case_,
                                       uint32_t *buf,
                                       uintptr_t len,
                                       uintptr_t *needed);

/**
 * Solves from the flat start with the options in `enabled` available.
 * `settings_json` may be null for defaults. A non-optimal solve still
 * returns `Ok`; query [`sctep_solution_status`].
 */
enum SctepStatus sctep_solve(const struct SctepCase *case_,
                             enum SctepMetric objective,
                             const uint32_t *enabled,
                             uintptr_t n_enabled,
                             const char *settings_json,
                             struct SctepSolution **out);

enum SctepStatus sctep_solution_status(const struct SctepSolution *sol, enum SctepSolveStatus *out);

/**
 * Objective in MW (curtailment) or EUR/h (cost).
 */
enum SctepStatus sctep_solution_objective(const struct SctepSolution *sol, double *out);

void sctep_solution_free(struct SctepSolution *sol);

/**
 * Evaluates the game over `players` (option ids). `samples == 0` runs the
 * exact game; otherwise Shapley values are estimated from `samples`
 * orderings drawn with `seed`. `workers == 0` uses the default count.
 */
enum SctepStatus sctep_game_run(const struct SctepCase *case_,
                                enum SctepMetric metric,
                                const uint32_t *players,
                                uintptr_t n_players,
                                uintptr_t samples,
                                uint64_t seed,
                                uintptr_t workers,
                                const char *settings_json,
                                struct SctepGame **out);

/**
 * Shapley values in player order.
 */
enum SctepStatus sctep_game_shapley(const struct SctepGame *g,
                                    double *buf,
                                    uintptr_t len,
                                    uintptr_t *needed);

/**
 * The game result as JSON; free with [`sctep_string_free`].
 */
enum SctepStatus sctep_game_to_json(const struct SctepGame *g, char **out);

void sctep_game_free(struct SctepGame *g);

/**
 * Exact Shapley values of an `n`-player game given as `2^n` values indexed
 * by coalition bitmask. Writes `n` values to `out`.
 */
enum SctepStatus sctep_shapley_table(uintptr_t n,
                                     const double *values,
                                     uintptr_t n_values,
                                     double *out);

/**
 * Marginal contribution `v(S ∪ {i}) − v(S)` in a table game.
 */
enum SctepStatus sctep_marginal_contribution(uintptr_t n,
                                             const double *values,
                                             uintptr_t n_values,
                                             uintptr_t player,
                                             uint64_t coalition,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCTEP_H */
