#ifndef ERANK_H
#define ERANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum ErankStatus {
  ERANK_STATUS_OK = 0,
  ERANK_STATUS_NULL_POINTER = 1,
  /**
   * Arguments outside the function's domain, or invalid data.
   */
  ERANK_STATUS_INVALID_ARGUMENT = 2,
  ERANK_STATUS_FORMAT = 3,
  ERANK_STATUS_NOT_FOUND = 4,
  ERANK_STATUS_CORRUPTION = 5,
  ERANK_STATUS_NUMERICAL = 6,
  ERANK_STATUS_IO = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  ERANK_STATUS_PANIC = 8,
} ErankStatus;

/**
 * The vectors of one record.
 */
typedef struct ErankEmbeddingSet ErankEmbeddingSet;

/**
 * An indexed embedding file held in memory.
 */
typedef struct ErankEmbeddingStore ErankEmbeddingStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *erank_last_error(void);

/**
 * Effective rank of a singular-value spectrum in any order.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out_rank` to a writable one.
 */
enum ErankStatus erank_effective_rank_from_spectrum(const double *values,
                                                    size_t len,
                                                    double *out_rank);

/**
 * Effective rank of `rows` vectors of length `cols`.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles.
 */
enum ErankStatus erank_effective_rank(const double *data,
                                      size_t rows,
                                      size_t cols,
                                      double *out_rank);

/**
 * Eigenscore of `rows >= 2` vectors of length `cols` with regulariser `alpha > 0`.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles.
 */
enum ErankStatus erank_eigenscore(const double *data,
                                  size_t rows,
                                  size_t cols,
                                  double alpha,
                                  double *out_score);

/**
 * AUROC of `scores` against `labels` (non-zero = hallucination).
 *
 * # Safety
 * Both arrays must hold `len` elements.
 */
enum ErankStatus erank_auroc(const double *scores,
                             const uint8_t *labels,
                             size_t len,
                             double *out_auroc);

/**
 * ROUGE-L F1 between two UTF-8 strings.
 *
 * # Safety
 * Both strings must be NUL-terminated.
 */
enum ErankStatus erank_rouge_l(const char *candidate, const char *reference, double *out_score);

/**
 * Reads and indexes an embedding file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out_store` must be writable.
 */
enum ErankStatus erank_store_open(const char *path, struct ErankEmbeddingStore **out_store);

/**
 * Number of blocks in the store.
 *
 * # Safety
 * `store` must come from [`erank_store_open`].
 */
enum ErankStatus erank_store_len(const struct ErankEmbeddingStore *store, size_t *out_len);

/**
 * Loads the block stored under `record_id`.
 *
 * # Safety
 * `store` must come from [`erank_store_open`]; `record_id` must be
 * NUL-terminated.
 */
enum ErankStatus erank_store_get(const struct ErankEmbeddingStore *store,
                                 const char *record_id,
                                 struct ErankEmbeddingSet **out_set);

/**
 * Releases a store. NULL is ignored.
 *
 * # Safety
 * `store` must come from [`erank_store_open`] and not be used afterwards.
 */
void erank_store_free(struct ErankEmbeddingStore *store);

/**
 * Shape of a set: `m1` responses, `m2` layers each, dimension `n`.
 *
 * # Safety
 * `set` must come from [`erank_store_get`]; out pointers must be writable.
 */
enum ErankStatus erank_set_shape(const struct ErankEmbeddingSet *set,
                                 size_t *out_m1,
                                 size_t *out_m2,
                                 size_t *out_n);

/**
 * Pointer to the `m1 * m2 * n` row-major values, owned by the set.
 *
 * # Safety
 * `set` must come from [`erank_store_get`].
 */
enum ErankStatus erank_set_data(const struct ErankEmbeddingSet *set, const float **out_data);

/**
 * Effective rank of all vectors in the set.
 *
 * # Safety
 * `set` must come from [`erank_store_get`].
 */
enum ErankStatus erank_set_effective_rank(const struct ErankEmbeddingSet *set, double *out_rank);

/**
 * Eigenscore of all vectors in the set.
 *
 * # Safety
 * `set` must come from [`erank_store_get`].
 */
enum ErankStatus erank_set_eigenscore(const struct ErankEmbeddingSet *set,
                                      double alpha,
                                      double *out_score);

/**
 * Releases a set. NULL is ignored.
 *
 * # Safety
 * `set` must come from [`erank_store_get`] and not be used afterwards.
 */
void erank_set_free(struct ErankEmbeddingSet *set);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERANK_H */
