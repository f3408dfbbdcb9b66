#ifndef NUMANCHOR_H
#define NUMANCHOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  NA_STATUS_OK = 0,
  NA_STATUS_NULL_POINTER = 1,
  NA_STATUS_INVALID_UTF8 = 2,
  NA_STATUS_INVALID_ARGUMENT = 3,
  NA_STATUS_CONFIG = 4,
  NA_STATUS_VALIDATION = 5,
  NA_STATUS_DEPENDENCY = 6,
  NA_STATUS_STALE = 7,
  NA_STATUS_IO = 8,
  NA_STATUS_FORMAT = 9,
  NA_STATUS_DOMAIN = 10,
  NA_STATUS_RUNTIME = 11,
  NA_STATUS_BUFFER_TOO_SMALL = 12,
  NA_STATUS_PANIC = 13,
} NaStatus;

typedef enum {
  NA_SPACE_LINEAR = 0,
  NA_SPACE_LOG = 1,
} NaSpace;

typedef enum {
  /**
   * Anchor is smaller than the numeral.
   */
  NA_DIRECTION_LEFT = 0,
  /**
   * Anchor is larger than the numeral.
   */
  NA_DIRECTION_RIGHT = 1,
  NA_DIRECTION_EXACT = 2,
} NaDirection;

/**
 * Opaque anchor table.
 */
typedef struct NaAnchorTable NaAnchorTable;

/**
 * Opaque trained encoder checkpoint.
 */
typedef struct NaCheckpoint NaCheckpoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *na_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *na_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void na_string_free(char *s);

/**
 * Parses one numeral surface form ("1,234.5").
 *
 * # Safety
 * `surface` must be a nul-terminated string; `out` must be writable.
 */
NaStatus na_parse_numeral(const char *surface, double *out);

/**
 * Fits a K-component mixture to positive-or-zero numeral values and
 * returns its anchor table. In log space the values are given as-is and
 * transformed internally; non-positive values are skipped.
 *
 * # Safety
 * `values` must point to `n` doubles; `out` must be writable.
 */
NaStatus na_anchor_table_fit(const double *values,
                             size_t n,
                             size_t k,
                             NaSpace space,
                             size_t restarts,
                             uint64_t seed,
                             NaAnchorTable **out);

/**
 * Reads an anchor table file written by the `anchors` stage.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
NaStatus na_anchor_table_read(const char *path, NaAnchorTable **out);

/**
 * # Safety
 * `table` must be null or a live handle from this library.
 */
void na_anchor_table_free(NaAnchorTable *table);

/**
 * Number of anchors, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t na_anchor_table_len(const NaAnchorTable *table);

/**
 * # Safety
 * `table` must be null or a live handle.
 */
NaSpace na_anchor_table_space(const NaAnchorTable *table);

/**
 * Copies up to `cap` anchors (ascending, in the table's space) into `buf`
 * and stores the total count in `len`.
 *
 * # Safety
 * `buf` must have room for `cap` doubles; `len` must be writable.
 */
NaStatus na_anchor_table_anchors(const NaAnchorTable *table, double *buf, size_t cap, size_t *len);

/**
 * Nearest anchor to `value`, in the table's space, with its direction.
 *
 * # Safety
 * `table` must be a live handle; `anchor` and `direction` must be writable.
 */
NaStatus na_anchor_table_nearest(const NaAnchorTable *table,
                                 double value,
                                 double *anchor,
                                 NaDirection *direction);

/**
 * Tokenizes `text` and inserts priming groups under `strategy`
 * ("anchors", "ln-anchors", "anchors-dir", "ln-anchors-dir"). The result
 * is space-joined and must be released with `na_string_free`.
 *
 * # Safety
 * String arguments must be nul-terminated; `out` must be writable.
 */
NaStatus na_augment_text(const NaAnchorTable *table,
                         const char *strategy,
                         const char *text,
                         char **out);

/**
 * Removes priming groups from a space-separated augmented token stream.
 *
 * # Safety
 * `text` must be nul-terminated; `out` must be writable.
 */
NaStatus na_strip_text(const char *text, char **out);

/**
 * Loads a checkpoint written by the `train` stage.
 *
 * # Safety
 * `path` must be nul-terminated; `out` must be writable.
 */
NaStatus na_checkpoint_load(const char *path, NaCheckpoint **out);

/**
 * # Safety
 * `ckpt` must be null or a live handle from this library.
 */
void na_checkpoint_free(NaCheckpoint *ckpt);

/**
 * Embedding width, or 0 for a null handle.
 *
 * # Safety
 * `ckpt` must be null or a live handle.
 */
size_t na_checkpoint_dim(const NaCheckpoint *ckpt);

/**
 * Embeds `value` with the fixed template; out-of-vocabulary numerals use
 * the neighbour-mean fallback. `buf` must hold `na_checkpoint_dim` doubles.
 *
 * # Safety
 * `ckpt` must be a live handle; `buf` must have room for `cap` doubles.
 */
NaStatus na_checkpoint_embed(const NaCheckpoint *ckpt, double value, double *buf, size_t cap);

/**
 * Runs one pipeline stage ("extract" ... "report", or "run-all") for the
 * config at `config_path`.
 *
 * # Safety
 * String arguments must be nul-terminated.
 */
NaStatus na_pipeline_run(const char *config_path, const char *stage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NUMANCHOR_H */
