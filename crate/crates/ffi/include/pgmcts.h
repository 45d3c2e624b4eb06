#ifndef PGMCTS_H
#define PGMCTS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PgmctsStatus {
  PGMCTS_STATUS_OK = 0,
  PGMCTS_STATUS_INVALID_ARGUMENT = 1,
  PGMCTS_STATUS_NUMERIC = 2,
  PGMCTS_STATUS_TOO_LARGE = 3,
  PGMCTS_STATUS_CONFIG = 4,
  PGMCTS_STATUS_IO = 5,
  PGMCTS_STATUS_INTERNAL = 6,
  PGMCTS_STATUS_NULL_POINTER = 7,
  PGMCTS_STATUS_PANIC = 8,
} PgmctsStatus;

/**
 * A single learner trained step by step.
 */
typedef struct PgmctsAgent PgmctsAgent;

/**
 * A multi-run experiment described by a configuration text.
 */
typedef struct PgmctsExperiment PgmctsExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pgmcts_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pgmcts_version(void);

/**
 * Parses `config_text` (`key = value` lines) into a new experiment.
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PgmctsStatus pgmcts_experiment_new(const char *config_text, struct PgmctsExperiment **out);

/**
 * Redirects the experiment's output files.
 *
 * # Safety
 * `exp` must come from `pgmcts_experiment_new`; `dir` must be NUL-terminated.
 */
enum PgmctsStatus pgmcts_experiment_set_output(struct PgmctsExperiment *exp, const char *dir);

/**
 * Runs every seed on `workers` threads and reports the final aggregate point.
 *
 * # Safety
 * `exp` must come from `pgmcts_experiment_new`; outputs must be valid pointers.
 */
enum PgmctsStatus pgmcts_experiment_run(struct PgmctsExperiment *exp,
                                        size_t workers,
                                        double *final_mean,
                                        double *final_stderr);

/**
 * # Safety
 * `exp` must come from `pgmcts_experiment_new` or be null.
 */
void pgmcts_experiment_free(struct PgmctsExperiment *exp);

/**
 * Builds run `run_id` of the configuration as a trainable agent.
 *
 * # Safety
 * `config_text` must be NUL-terminated and `out` a valid pointer.
 */
enum PgmctsStatus pgmcts_agent_new(const char *config_text,
                                   size_t run_id,
                                   struct PgmctsAgent **out);

/**
 * # Safety
 * `agent` must come from `pgmcts_agent_new`.
 */
enum PgmctsStatus pgmcts_agent_train(struct PgmctsAgent *agent, uint64_t episodes);

/**
 * Mean evaluation metric over `episodes` episodes without learning.
 *
 * # Safety
 * `agent` must come from `pgmcts_agent_new`; `out` must be valid.
 */
enum PgmctsStatus pgmcts_agent_evaluate(struct PgmctsAgent *agent, size_t episodes, double *out);

/**
 * Number of training episodes so far.
 *
 * # Safety
 * `agent` must come from `pgmcts_agent_new`; `out` must be valid.
 */
enum PgmctsStatus pgmcts_agent_episodes(const struct PgmctsAgent *agent, uint64_t *out);

/**
 * # Safety
 * `agent` must come from `pgmcts_agent_new` or be null.
 */
void pgmcts_agent_free(struct PgmctsAgent *agent);

/**
 * Floored importance weight of a parametric-policy step.
 *
 * # Safety
 * `out` must be valid.
 */
enum PgmctsStatus pgmcts_importance_weight(double pg_prob,
                                           double mix_prob,
                                           double lambda,
                                           double floor,
                                           double *out);

/**
 * `(1 - lambda) pg + lambda tree`, elementwise over `n` actions.
 *
 * # Safety
 * All arrays must hold `n` doubles.
 */
enum PgmctsStatus pgmcts_mixture_probs(const double *pg,
                                       const double *tree,
                                       size_t n,
                                       double lambda,
                                       double *out);

/**
 * Numerically stable softmax of `n` logits.
 *
 * # Safety
 * Both arrays must hold `n` doubles.
 */
enum PgmctsStatus pgmcts_softmax(const double *logits, size_t n, double *out);

/**
 * Step sizes at episode `n >= 1`. With `convergent` nonzero the parametric rate
 * is `alpha0 / (1 + c n ln(1 + n))`, otherwise the constant `alpha0`.
 *
 * # Safety
 * Outputs must be valid.
 */
enum PgmctsStatus pgmcts_schedule_rates(int32_t convergent,
                                        double alpha0,
                                        double c,
                                        uint64_t n,
                                        double *alpha,
                                        double *beta);

/**
 * Exact optimal value and uniform-policy value of a tabular instance.
 *
 * # Safety
 * `table_text` must be NUL-terminated; outputs must be valid.
 */
enum PgmctsStatus pgmcts_oracle_solve(const char *table_text, double *optimal, double *uniform);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PGMCTS_H */
