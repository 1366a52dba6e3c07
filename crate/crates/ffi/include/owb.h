#ifndef OWB_H
#define OWB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OwbStatus {
  OWB_STATUS_OK = 0,
  OWB_STATUS_NULL_POINTER = 1,
  OWB_STATUS_INVALID_ARGUMENT = 2,
  OWB_STATUS_EMPTY_PETAL = 3,
  OWB_STATUS_NO_DATA_ANYWHERE = 4,
  OWB_STATUS_NON_POSITIVE_VARIANCE = 5,
  OWB_STATUS_IO = 6,
  OWB_STATUS_PARSE = 7,
  OWB_STATUS_INTERNAL = 8,
  OWB_STATUS_PANIC = 9,
} OwbStatus;

// Opaque panel: a ragged vote tensor plus its cluster map.
typedef struct OwbPanel OwbPanel;

// Hierarchical pooling hyperparameters.
typedef struct OwbPoolingConfig {
  double prior_strength_persona;
  double prior_strength_cluster;
  double variance_floor;
} OwbPoolingConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default pooling configuration (m₀ = m₁ = 5, floor 1e-12).
struct OwbPoolingConfig owb_pooling_config_default(void);

// Builds a panel from a flat buffer.
//
// `rounds[p]` is the number of rounds of persona `p`. `values` holds
// `sum(rounds) * n_petals` entries ordered persona, round, petal; NaN or
// infinite entries are missing. `clusters` holds one contiguous cluster id
// per persona, or is null for a single cluster.
//
// # Safety
// Pointers must be valid for the lengths above; `out` must be writable.
enum OwbStatus owb_panel_new(size_t n_personas,
                             size_t n_petals,
                             const size_t *rounds,
                             const double *values,
                             const size_t *clusters,
                             struct OwbPanel **out);

// Reads a long-format votes CSV
// (`persona_id,cluster_id,round,petal_id,value`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum OwbStatus owb_panel_from_csv(const char *path, struct OwbPanel **out);

// # Safety
// `panel` must come from this library and not be used afterwards. Null is a no-op.
void owb_panel_free(struct OwbPanel *panel);

// # Safety
// `panel` must be a live handle or null (returns 0).
size_t owb_panel_n_personas(const struct OwbPanel *panel);

// # Safety
// `panel` must be a live handle or null (returns 0).
size_t owb_panel_n_petals(const struct OwbPanel *panel);

// Number of cells, observed or not: `sum(rounds) * n_petals`.
//
// # Safety
// `panel` must be a live handle or null (returns 0).
size_t owb_panel_total_cells(const struct OwbPanel *panel);

// Normalized inverse-variance weights.
//
// # Safety
// `variances` and `out_weights` must hold `n` doubles.
enum OwbStatus owb_precision_weights(const double *variances, size_t n, double *out_weights);

// Point estimate with pooled feasible weights.
//
// `out_mu` holds `n_petals` doubles; `out_weights` holds `n_personas`
// doubles or is null. A null `cfg` uses the defaults.
//
// # Safety
// Pointers must be valid for the sizes above.
enum OwbStatus owb_estimate(const struct OwbPanel *panel,
                            const struct OwbPoolingConfig *cfg,
                            double *out_mu,
                            double *out_weights);

// Point estimate plus weighted-bootstrap percentile interval.
//
// `out_mu`, `out_lower` and `out_upper` hold `n_petals` doubles each.
//
// # Safety
// Pointers must be valid for the sizes above.
enum OwbStatus owb_bootstrap_ci(const struct OwbPanel *panel,
                                const struct OwbPoolingConfig *cfg,
                                size_t replicates,
                                double ci_level,
                                uint64_t seed,
                                double *out_mu,
                                double *out_lower,
                                double *out_upper);

// Fills every missing cell, using default pooling for the donor weights.
//
// `out_values` holds `owb_panel_total_cells` doubles in persona, round,
// petal order; `out_filled`, if not null, receives the number of filled cells.
//
// # Safety
// Pointers must be valid for the sizes above.
enum OwbStatus owb_impute(const struct OwbPanel *panel,
                          uint64_t seed,
                          double *out_values,
                          size_t *out_filled);

// Message for the last failed call on this thread, or null after a
// success. Valid until the next call on the same thread.
const char *owb_last_error_message(void);

// Static name of a status code.
const char *owb_status_str(enum OwbStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OWB_H */
