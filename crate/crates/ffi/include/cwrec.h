#ifndef CWREC_H
#define CWREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_POINTER = 1,
  CW_STATUS_INVALID_ARGUMENT = 2,
  CW_STATUS_CONFIG_INVALID = 3,
  CW_STATUS_DATA_EMPTY = 4,
  CW_STATUS_DATA_MALFORMED = 5,
  CW_STATUS_NONFINITE = 6,
  CW_STATUS_CHECKPOINT_INVALID = 7,
  CW_STATUS_IO_ERROR = 8,
  CW_STATUS_INTERNAL = 9,
  CW_STATUS_PANIC = 10,
} CwStatus;

/**
 * Experiment configuration (`key = value` settings).
 */
typedef struct CwConfig CwConfig;

/**
 * Indexed interactions with their train/validation/test split.
 */
typedef struct CwDataset CwDataset;

/**
 * A trained or loaded model with cached inference scores.
 */
typedef struct CwModel CwModel;

/**
 * Test metrics at one cutoff.
 */
typedef struct CwMetrics {
  double recall;
  double ndcg;
  size_t users_evaluated;
} CwMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *cw_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *cw_version(void);

/**
 * New configuration holding the defaults.
 */
struct CwConfig *cw_config_new(void);

/**
 * Reads a `key = value` config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CwStatus cw_config_load(const char *path, struct CwConfig **out);

/**
 * Sets one key, e.g. `("loss.kind", "CW")`.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum CwStatus cw_config_set(struct CwConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library or be NULL; it must not be used again.
 */
void cw_config_free(struct CwConfig *cfg);

/**
 * Loads, filters and splits the data named by `data.path`.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum CwStatus cw_dataset_prepare(const struct CwConfig *cfg, struct CwDataset **out);

/**
 * # Safety
 * `ds` must come from this library.
 */
size_t cw_dataset_num_users(const struct CwDataset *ds);

/**
 * # Safety
 * `ds` must come from this library.
 */
size_t cw_dataset_num_items(const struct CwDataset *ds);

/**
 * Pair counts of the three views. Any output pointer may be NULL.
 *
 * # Safety
 * `ds` must come from this library; non-NULL outputs must be writable.
 */
enum CwStatus cw_dataset_split_sizes(const struct CwDataset *ds,
                                     size_t *train,
                                     size_t *validation,
                                     size_t *test);

/**
 * # Safety
 * `ds` must come from this library or be NULL; it must not be used again.
 */
void cw_dataset_free(struct CwDataset *ds);

/**
 * Trains with the configuration's backbone, loss, sampler, optimizer and
 * schedule; the returned model is the best by validation NDCG.
 *
 * # Safety
 * `cfg` and `ds` must come from this library; `out` must be valid.
 */
enum CwStatus cw_model_train(const struct CwConfig *cfg,
                             const struct CwDataset *ds,
                             struct CwModel **out);

/**
 * Writes `len` scores for `user` into `scores`; `len` must equal the number
 * of items.
 *
 * # Safety
 * `model` must come from this library and `scores` must hold `len` doubles.
 */
enum CwStatus cw_model_score_user(const struct CwModel *model,
                                  size_t user,
                                  double *scores,
                                  size_t len);

/**
 * Saves the base embeddings; `binary` selects the binary layout.
 *
 * # Safety
 * `model` must come from this library and `path` must be NUL-terminated.
 */
enum CwStatus cw_model_save(const struct CwModel *model, const char *path, int binary);

/**
 * Loads a checkpoint; `ds` supplies the training graph and must have the
 * checkpoint's shape.
 *
 * # Safety
 * `path` must be NUL-terminated, `ds` must come from this library and `out`
 * must be valid.
 */
enum CwStatus cw_model_load(const char *path, const struct CwDataset *ds, struct CwModel **out);

/**
 * Recall@k and NDCG@k on the test view, masking train and validation.
 *
 * # Safety
 * `model` and `ds` must come from this library and `out` must be valid.
 */
enum CwStatus cw_model_evaluate(const struct CwModel *model,
                                const struct CwDataset *ds,
                                size_t k,
                                struct CwMetrics *out);

/**
 * # Safety
 * `model` must come from this library or be NULL; it must not be used again.
 */
void cw_model_free(struct CwModel *model);

/**
 * Loss of one row under the configuration's `loss.*` settings, from the
 * anchor score, `n` negative scores and `m` extra positive scores.
 * `grad_negs` (length `n`) and `grad_extra` (length `m`) may be NULL;
 * otherwise they receive the derivatives with respect to those scores.
 *
 * # Safety
 * `cfg` must come from this library; the arrays must hold the stated
 * number of doubles and `value` must be writable.
 */
enum CwStatus cw_row_loss(const struct CwConfig *cfg,
                          double r_ui,
                          const double *r_uj,
                          size_t n,
                          const double *r_uik,
                          size_t m,
                          double tau_plus,
                          double *value,
                          double *grad_negs,
                          double *grad_extra);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CWREC_H */
