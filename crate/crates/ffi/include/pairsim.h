#ifndef PAIRSIM_H
#define PAIRSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The first four match the command-line exit codes.
 */
typedef enum PairsimStatus {
  PAIRSIM_STATUS_OK = 0,
  PAIRSIM_STATUS_CONFIG_ERROR = 1,
  PAIRSIM_STATUS_DATA_ERROR = 2,
  PAIRSIM_STATUS_NUMERIC_ERROR = 3,
  PAIRSIM_STATUS_NULL_ARGUMENT = 4,
  PAIRSIM_STATUS_INVALID_UTF8 = 5,
  PAIRSIM_STATUS_WRONG_TASK = 6,
  PAIRSIM_STATUS_PANIC = 7,
} PairsimStatus;

/**
 * A loaded model together with its embedding tables.
 */
typedef struct PairsimModel PairsimModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint using the embeddings and dimensions named in a
 * configuration file. On success `*out` receives a handle owned by the
 * caller.
 *
 * # Safety
 * `config_path` and `checkpoint_path` must be NUL-terminated strings and
 * `out` a valid pointer to writable storage.
 */
enum PairsimStatus pairsim_model_load(const char *config_path,
                                      const char *checkpoint_path,
                                      struct PairsimModel **out);

/**
 * Releases a handle. Null is accepted.
 *
 * # Safety
 * `model` must be null or a handle from [`pairsim_model_load`] that has not
 * been freed.
 */
void pairsim_model_free(struct PairsimModel *model);

/**
 * Similarity score of a sentence pair in the dataset's native range.
 * Fails with `WrongTask` for classification models.
 *
 * # Safety
 * `model` must be a live handle, `s1`/`s2` NUL-terminated strings and
 * `out_score` a valid pointer.
 */
enum PairsimStatus pairsim_score(const struct PairsimModel *model,
                                 const char *s1,
                                 const char *s2,
                                 double *out_score);

/**
 * Predicted class index of a sentence pair. The label name is written to
 * `*out_name` when it is non-null; the string is static.
 * Fails with `WrongTask` for similarity models.
 *
 * # Safety
 * `model` must be a live handle, `s1`/`s2` NUL-terminated strings,
 * `out_label` a valid pointer and `out_name` null or valid.
 */
enum PairsimStatus pairsim_label(const struct PairsimModel *model,
                                 const char *s1,
                                 const char *s2,
                                 int32_t *out_label,
                                 const char **out_name);

/**
 * Pearson correlation of two arrays of length `n`.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles and `out` be valid.
 */
enum PairsimStatus pairsim_pearson(const double *x, const double *y, size_t n, double *out);

/**
 * Message of the last failure on this thread, or an empty string. Valid
 * until the next call into this library from the same thread.
 */
const char *pairsim_last_error(void);

/**
 * Library version as a static string.
 */
const char *pairsim_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAIRSIM_H */
