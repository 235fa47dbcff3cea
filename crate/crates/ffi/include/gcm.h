#ifndef GCM_H
#define GCM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GcmStatus {
  GCM_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or a length that does not match.
   */
  GCM_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Parameter out of range or unusable configuration.
   */
  GCM_STATUS_CONFIG = 2,
  /**
   * Malformed, inconsistent or dimension-mismatched data.
   */
  GCM_STATUS_DATA = 3,
  /**
   * The solver produced non-finite values.
   */
  GCM_STATUS_NUMERICAL = 4,
  /**
   * File could not be read or written.
   */
  GCM_STATUS_IO = 5,
  /**
   * Internal error; the library state is unaffected.
   */
  GCM_STATUS_PANIC = 6,
} GcmStatus;

typedef enum GcmAlgorithm {
  GCM_ALGORITHM_GCM = 0,
  GCM_ALGORITHM_GCM_NO_GROUP = 1,
  GCM_ALGORITHM_SVM = 2,
  GCM_ALGORITHM_MI_SVM = 3,
} GcmAlgorithm;

/**
 * Opaque dataset handle.
 */
typedef struct GcmDataset GcmDataset;

/**
 * Opaque model handle: weights plus the preprocessing stored with them.
 */
typedef struct GcmModel GcmModel;

typedef struct GcmHyperparams {
  double lambda;
  double epsilon;
  double delta;
} GcmHyperparams;

typedef struct GcmEvalSummary {
  double candidate_auc;
  double group_auc;
} GcmEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *gcm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gcm_version(void);

struct GcmHyperparams gcm_default_hyperparams(void);

/**
 * Loads a text or binary dataset file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum GcmStatus gcm_dataset_load(const char *path, struct GcmDataset **out);

/**
 * Builds a dataset from column arrays of `n_rows` entries; `features` is
 * row-major with `dim` values per row. Labels are +1 or -1, key flags 0 or 1.
 *
 * # Safety
 * Every array must hold the stated number of elements and `out` be writable.
 */
enum GcmStatus gcm_dataset_from_arrays(size_t n_rows,
                                       size_t dim,
                                       const uint64_t *group_ids,
                                       const int8_t *labels,
                                       const uint8_t *is_key,
                                       const double *features,
                                       struct GcmDataset **out);

/**
 * # Safety
 * `data` must come from this library and not be used afterwards; null is
 * ignored.
 */
void gcm_dataset_free(struct GcmDataset *data);

/**
 * # Safety
 * `data` must be a live dataset handle; outputs may be null.
 */
enum GcmStatus gcm_dataset_shape(const struct GcmDataset *data,
                                 size_t *n_rows,
                                 size_t *dim,
                                 size_t *n_groups);

/**
 * Trains `algorithm` on `data` with `threads` workers (0 means 1).
 *
 * # Safety
 * `data` and `hp` must be valid, `out` writable.
 */
enum GcmStatus gcm_train(const struct GcmDataset *data,
                         enum GcmAlgorithm algorithm,
                         const struct GcmHyperparams *hp,
                         size_t threads,
                         struct GcmModel **out);

/**
 * # Safety
 * `model` must be live and `path` NUL-terminated.
 */
enum GcmStatus gcm_model_save(const struct GcmModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum GcmStatus gcm_model_load(const char *path, struct GcmModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards; null is
 * ignored.
 */
void gcm_model_free(struct GcmModel *model);

/**
 * Raw input width the model expects.
 *
 * # Safety
 * `model` must be live and `out` writable.
 */
enum GcmStatus gcm_model_input_dim(const struct GcmModel *model, size_t *out);

/**
 * Length of the weight vector (feature count after expansion).
 *
 * # Safety
 * `model` must be live and `out` writable.
 */
enum GcmStatus gcm_model_feature_dim(const struct GcmModel *model, size_t *out);

/**
 * Copies the weight vector into `weights` (`len` must equal the model's
 * feature count after expansion) and the bias into `bias`.
 *
 * # Safety
 * `weights` must hold `len` doubles; `bias` must be writable.
 */
enum GcmStatus gcm_model_weights(const struct GcmModel *model,
                                 double *weights,
                                 size_t len,
                                 double *bias);

/**
 * Score of one raw input row of `len` features.
 *
 * # Safety
 * `x` must hold `len` doubles and `out` be writable.
 */
enum GcmStatus gcm_model_score(const struct GcmModel *model,
                               const double *x,
                               size_t len,
                               double *out);

/**
 * Candidate- and group-level AUC of `model` on `data`.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum GcmStatus gcm_evaluate(const struct GcmModel *model,
                            const struct GcmDataset *data,
                            struct GcmEvalSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCM_H */
