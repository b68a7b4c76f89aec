#ifndef ICR_H
#define ICR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IcrFusionMode {
  ICR_FUSION_MODE_PRRF = 0,
  ICR_FUSION_MODE_RRF = 1,
  ICR_FUSION_MODE_FINAL_ONLY = 2,
} IcrFusionMode;

typedef enum IcrStatus {
  ICR_STATUS_OK = 0,
  ICR_STATUS_NULL_POINTER = 1,
  ICR_STATUS_INVALID_UTF8 = 2,
  ICR_STATUS_INVALID_ARGUMENT = 3,
  ICR_STATUS_IO = 4,
  ICR_STATUS_MALFORMED_INPUT = 5,
  ICR_STATUS_NOT_FOUND = 6,
  ICR_STATUS_PROVIDER = 7,
  ICR_STATUS_PANIC = 8,
} IcrStatus;

/**
 * Ranked list plus NUL-terminated copies of its ids, index-aligned.
 */
typedef struct IcrRankedList IcrRankedList;

typedef struct IcrSparseIndex IcrSparseIndex;

typedef struct IcrTrajectory IcrTrajectory;

/**
 * Binary-relevance metrics of one ranked list.
 */
typedef struct IcrMetrics {
  double mrr;
  double ndcg3;
  double recall10;
  double recall100;
} IcrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *icr_version(void);

/**
 * Message of the last failed call on this thread, or null if it succeeded.
 * Valid until the next call into this library on the same thread.
 */
const char *icr_last_error(void);

/**
 * # Safety
 * `s` is null or was returned by this library as `*mut c_char`.
 */
void icr_string_free(char *s);

/**
 * Writes the BM25 parameters of a named profile (`topiocqa` or `qrecc`).
 *
 * # Safety
 * `name` is a NUL-terminated string; `k1` and `b` are writable.
 */
enum IcrStatus icr_bm25_profile(const char *name, double *k1, double *b);

/**
 * Builds a BM25 index over a TSV or JSONL collection (format from the extension).
 *
 * # Safety
 * `collection_path` is a NUL-terminated string; `out` is writable.
 */
enum IcrStatus icr_sparse_index_build(const char *collection_path,
                                      double k1,
                                      double b,
                                      struct IcrSparseIndex **out);

/**
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum IcrStatus icr_sparse_index_load(const char *path, struct IcrSparseIndex **out);

/**
 * # Safety
 * `index` is a live handle; `path` is a NUL-terminated string.
 */
enum IcrStatus icr_sparse_index_save(const struct IcrSparseIndex *index, const char *path);

/**
 * Number of indexed passages; 0 for a null handle.
 *
 * # Safety
 * `index` is null or a live handle.
 */
size_t icr_sparse_index_doc_count(const struct IcrSparseIndex *index);

/**
 * Top-`k` BM25 search.
 *
 * # Safety
 * `index` is a live handle; `query` is a NUL-terminated string; `out` is writable.
 */
enum IcrStatus icr_sparse_index_search(const struct IcrSparseIndex *index,
                                       const char *query,
                                       size_t k,
                                       struct IcrRankedList **out);

/**
 * # Safety
 * `index` is null or a handle not yet freed.
 */
void icr_sparse_index_free(struct IcrSparseIndex *index);

/**
 * Empty list to be filled in rank order with [`icr_ranked_list_push`].
 *
 * # Safety
 * `query_tag` is a NUL-terminated string; `out` is writable.
 */
enum IcrStatus icr_ranked_list_new(const char *query_tag, struct IcrRankedList **out);

/**
 * Appends a hit at the next rank. Ids must be unique within the list.
 *
 * # Safety
 * `list` is a live handle; `passage_id` is a NUL-terminated string.
 */
enum IcrStatus icr_ranked_list_push(struct IcrRankedList *list,
                                    const char *passage_id,
                                    double score);

/**
 * # Safety
 * `list` is null or a live handle.
 */
size_t icr_ranked_list_len(const struct IcrRankedList *list);

/**
 * Hit at 0-based position `i`. `passage_id` borrows from the list.
 *
 * # Safety
 * `list` is a live handle; `passage_id` and `score` are writable.
 */
enum IcrStatus icr_ranked_list_get(const struct IcrRankedList *list,
                                   size_t i,
                                   const char **passage_id,
                                   double *score);

/**
 * # Safety
 * `list` is null or a handle not yet freed.
 */
void icr_ranked_list_free(struct IcrRankedList *list);

/**
 * Fuses `n` lists given in iteration order; list i (1-based) weighs i under PRRF.
 *
 * # Safety
 * `lists` points to `n` live handles; `out` is writable.
 */
enum IcrStatus icr_fuse(const struct IcrRankedList *const *lists,
                        size_t n,
                        enum IcrFusionMode mode,
                        double k,
                        size_t depth,
                        struct IcrRankedList **out);

/**
 * MRR, NDCG@3, R@10 and R@100 against `n_relevant` relevant passage ids.
 *
 * # Safety
 * `list` is a live handle; `relevant` points to `n_relevant` NUL-terminated
 * strings; `out` is writable.
 */
enum IcrStatus icr_metrics(const struct IcrRankedList *list,
                           const char *const *relevant,
                           size_t n_relevant,
                           struct IcrMetrics *out);

/**
 * Parses `[Clarification] c [Rewrite] r ...` text. Malformed segments are
 * dropped and counted by [`icr_trajectory_warnings`].
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` is writable.
 */
enum IcrStatus icr_trajectory_parse(const char *text, struct IcrTrajectory **out);

/**
 * # Safety
 * `t` is null or a live handle.
 */
size_t icr_trajectory_len(const struct IcrTrajectory *t);

/**
 * # Safety
 * `t` is null or a live handle.
 */
size_t icr_trajectory_warnings(const struct IcrTrajectory *t);

/**
 * Step `i` (0-based). Both strings borrow from the trajectory.
 *
 * # Safety
 * `t` is a live handle; `clarification` and `rewrite` are writable.
 */
enum IcrStatus icr_trajectory_step(const struct IcrTrajectory *t,
                                   size_t i,
                                   const char **clarification,
                                   const char **rewrite);

/**
 * Canonical serialization; free the result with [`icr_string_free`].
 *
 * # Safety
 * `t` is a live handle; `out` is writable.
 */
enum IcrStatus icr_trajectory_serialize(const struct IcrTrajectory *t, char **out);

/**
 * # Safety
 * `t` is null or a handle not yet freed.
 */
void icr_trajectory_free(struct IcrTrajectory *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICR_H */
