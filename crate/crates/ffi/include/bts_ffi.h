#ifndef BTS_FFI_H
#define BTS_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum BtsUpdateMethod {
  BTS_UPDATE_METHOD_SUMMATION = 0,
  BTS_UPDATE_METHOD_NORMALIZATION = 1,
} BtsUpdateMethod;

/**
 * Result of every fallible call.
 */
typedef enum BtsStatus {
  BTS_STATUS_OK = 0,
  BTS_STATUS_NULL_POINTER = 1,
  BTS_STATUS_INVALID_CONFIG = 2,
  BTS_STATUS_INVALID_INPUT = 3,
  BTS_STATUS_IO = 4,
  BTS_STATUS_INTERNAL = 5,
  BTS_STATUS_PANIC = 6,
} BtsStatus;

/**
 * Online batched Thompson sampler: select and record events, then close the
 * batch to fold them into the posteriors.
 */
typedef struct BtsBandit BtsBandit;

/**
 * A validated corpus of articles.
 */
typedef struct BtsCorpus BtsCorpus;

/**
 * Simulation settings, all durations in minutes.
 */
typedef struct BtsSimConfig {
  uint32_t update_interval;
  uint32_t horizon;
  uint32_t testing_period;
  enum BtsUpdateMethod update_method;
  uint64_t master_seed;
} BtsSimConfig;

/**
 * Corpus totals from one simulation.
 */
typedef struct BtsCorpusTotals {
  uint64_t impressions;
  uint64_t clicks;
  uint64_t post_horizon_impressions;
} BtsCorpusTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *bts_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bts_version(void);

/**
 * Defaults: 5-minute batches, 48-hour horizon, 60-minute testing period,
 * summation update, seed 0.
 */
struct BtsSimConfig bts_sim_config_default(void);

/**
 * New bandit with `arm_count` Beta(1, 1) arms.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BtsStatus bts_bandit_new(size_t arm_count,
                              enum BtsUpdateMethod method,
                              uint64_t seed,
                              struct BtsBandit **out);

/**
 * # Safety
 * `bandit` must come from `bts_bandit_new` and not be used afterwards. NULL is a no-op.
 */
void bts_bandit_free(struct BtsBandit *bandit);

/**
 * # Safety
 * `bandit` must be a live handle and `out` writable.
 */
enum BtsStatus bts_bandit_arm_count(const struct BtsBandit *bandit, size_t *out);

/**
 * Draw an arm from the posteriors frozen at the last batch boundary.
 *
 * # Safety
 * `bandit` must be a live handle and `out` writable.
 */
enum BtsStatus bts_bandit_select(struct BtsBandit *bandit, size_t *out);

/**
 * Tally one response for `arm` in the current batch.
 *
 * # Safety
 * `bandit` must be a live handle.
 */
enum BtsStatus bts_bandit_record(struct BtsBandit *bandit, size_t arm, bool clicked);

/**
 * Fold the current batch into the posteriors and start a new batch.
 *
 * # Safety
 * `bandit` must be a live handle.
 */
enum BtsStatus bts_bandit_end_batch(struct BtsBandit *bandit);

/**
 * Current Beta parameters of `arm`.
 *
 * # Safety
 * `bandit` must be a live handle; `alpha` and `beta` writable.
 */
enum BtsStatus bts_bandit_posterior(const struct BtsBandit *bandit,
                                    size_t arm,
                                    double *alpha,
                                    double *beta);

/**
 * Load a JSON-lines corpus.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum BtsStatus bts_corpus_load(const char *path, struct BtsCorpus **out);

/**
 * Generate a synthetic corpus from `key=value,...` parameters ("" for defaults).
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` writable.
 */
enum BtsStatus bts_corpus_synthetic(const char *spec, uint64_t seed, struct BtsCorpus **out);

/**
 * # Safety
 * `corpus` must be a live handle and `out` writable.
 */
enum BtsStatus bts_corpus_len(const struct BtsCorpus *corpus, size_t *out);

/**
 * # Safety
 * `corpus` must come from a corpus constructor and not be used afterwards. NULL is a no-op.
 */
void bts_corpus_free(struct BtsCorpus *corpus);

/**
 * Run the bandit over every article and sum the outcome.
 *
 * # Safety
 * `corpus` and `config` must be valid and `out` writable.
 */
enum BtsStatus bts_corpus_simulate(const struct BtsCorpus *corpus,
                                   const struct BtsSimConfig *config,
                                   struct BtsCorpusTotals *out);

/**
 * Run a full experiment described by a JSON config (the `config` object of a
 * `bts` manifest) and write its artifacts to `out_dir`.
 *
 * # Safety
 * `config_json` and `out_dir` must be NUL-terminated strings.
 */
enum BtsStatus bts_run_experiment(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BTS_FFI_H */
