#ifndef GAPDECOMP_H
#define GAPDECOMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GdStatus {
  GD_STATUS_OK = 0,
  GD_STATUS_NULL_POINTER = 1,
  GD_STATUS_INVALID_ARGUMENT = 2,
  GD_STATUS_DATA = 3,
  GD_STATUS_SUPPORT = 4,
  GD_STATUS_MODEL = 5,
  GD_STATUS_DECOMPOSE = 6,
  GD_STATUS_SYNTH = 7,
  GD_STATUS_CONFIG = 8,
  GD_STATUS_IO = 9,
  GD_STATUS_NOT_FOUND = 10,
  GD_STATUS_PANIC = 11,
} GdStatus;

/**
 * Opaque result of `gd_decompose`.
 */
typedef struct GdDecomposition GdDecomposition;

/**
 * Opaque observation table.
 */
typedef struct GdTable GdTable;

/**
 * The four unmatched/matched weighted shares of a partition.
 */
typedef struct GdMasses {
  /**
   * Share of W's weight inside B's support.
   */
  double w_in;
  /**
   * Share of W's weight outside B's support.
   */
  double w_out;
  double b_in;
  double b_out;
} GdMasses;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gd_version(void);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next `gd_*` call on the same thread.
 */
const char *gd_last_error_message(void);

/**
 * Loads a CSV file. `mapping_json` is a column mapping such as
 * `{"outcome": "y", "group": "group", "covariates": [{"name": "x", "kind": "continuous"}]}`.
 *
 * # Safety
 * `path` and `mapping_json` must be NUL-terminated strings; `out` must be a
 * valid pointer.
 */
enum GdStatus gd_table_from_csv(const char *path, const char *mapping_json, struct GdTable **out);

/**
 * Draws a table from a synthetic DGP spec given as JSON.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum GdStatus gd_table_simulate(const char *spec_json, struct GdTable **out);

/**
 * # Safety
 * `table` must come from a `gd_table_*` constructor, or be null.
 */
void gd_table_free(struct GdTable *table);

/**
 * Row count, or 0 for a null handle.
 *
 * # Safety
 * `table` must be a live handle or null.
 */
size_t gd_table_num_rows(const struct GdTable *table);

/**
 * Runs the configured analyses. `config_json` may be null for defaults;
 * otherwise it has the shape of the CLI config's `analysis` object.
 *
 * # Safety
 * `table` must be a live handle; `config_json` a NUL-terminated string or
 * null; `out` a valid pointer.
 */
enum GdStatus gd_decompose(const struct GdTable *table,
                           const char *config_json,
                           struct GdDecomposition **out);

/**
 * # Safety
 * `d` must come from `gd_decompose`, or be null.
 */
void gd_decomposition_free(struct GdDecomposition *d);

/**
 * Number of grid points, or 0 for a null handle.
 *
 * # Safety
 * `d` must be a live handle or null.
 */
size_t gd_decomposition_grid_len(const struct GdDecomposition *d);

/**
 * Copies the named series (`grid`, `delta`, `delta_x`, `delta_0`,
 * `delta_w`, `delta_b`, `delta_empirical`, the `_os` conventional series,
 * `share_*`, `h0_dfl`) into `buf`, which must hold `len` values and `len`
 * must equal the grid length.
 *
 * # Safety
 * `d` must be a live handle, `name` a NUL-terminated string and `buf` valid
 * for `len` writes.
 */
enum GdStatus gd_decomposition_series(const struct GdDecomposition *d,
                                      const char *name,
                                      double *buf,
                                      size_t len);

/**
 * # Safety
 * `d` must be a live handle and `out` a valid pointer.
 */
enum GdStatus gd_decomposition_masses(const struct GdDecomposition *d, struct GdMasses *out);

/**
 * Every result as one JSON document. Release with `gd_string_free`.
 *
 * # Safety
 * `d` must be a live handle and `out` a valid pointer.
 */
enum GdStatus gd_decomposition_to_json(const struct GdDecomposition *d, char **out);

/**
 * # Safety
 * `s` must come from a `gd_*` function documented to need this, or be null.
 */
void gd_string_free(char *s);

/**
 * Weighted share of `values` at or below `y`.
 *
 * # Safety
 * `values` and `weights` must be valid for `n` reads; `out` for one write.
 */
enum GdStatus gd_weighted_cdf(const double *values,
                              const double *weights,
                              size_t n,
                              double y,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAPDECOMP_H */
