#ifndef QNAR_H
#define QNAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call. Values are stable.
typedef enum QnarStatus {
  QNAR_STATUS_OK = 0,
  QNAR_STATUS_NULL_ARGUMENT = 1,
  QNAR_STATUS_INVALID_UTF8 = 2,
  // Malformed or invalid input (parse errors, bad parameters).
  QNAR_STATUS_INVALID_INPUT = 3,
  // Non-convergence or a degenerate numerical case.
  QNAR_STATUS_NUMERICAL = 4,
  // Auction protocol violation during replay.
  QNAR_STATUS_PROTOCOL = 5,
  // A bug inside the library; the call had no effect.
  QNAR_STATUS_PANIC = 6,
} QnarStatus;

// Initial stake distribution for [`qnar_simulate`].
typedef enum QnarDistribution {
  // Uniform on [0.5, 1.5].
  QNAR_DISTRIBUTION_UNIFORM = 0,
  // Pareto, shape 2 and mean 1.
  QNAR_DISTRIBUTION_PARETO = 1,
} QnarDistribution;

// Opaque contribution graph built from an event log.
typedef struct QnarGraph QnarGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread; do not free.
const char *qnar_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void qnar_string_free(char *s);

// Parses a JSONL event log and builds its contribution graph. `weights_kv`
// may be null for the default weights.
//
// # Safety
// String arguments must be null or nul-terminated; `out` must be writable.
enum QnarStatus qnar_graph_from_events(const char *events_jsonl,
                                       const char *weights_kv,
                                       struct QnarGraph **out);

// # Safety
// `graph` must be null or a handle from [`qnar_graph_from_events`] not yet freed.
void qnar_graph_free(struct QnarGraph *graph);

// # Safety
// `graph` must be a live handle; `out` must be writable.
enum QnarStatus qnar_graph_node_count(const struct QnarGraph *graph, size_t *out);

// One-step transition probability between two nodes, named `kind:key`
// (for example `courselet:CL0` and `user:alice`).
//
// # Safety
// `graph` must be a live handle; strings nul-terminated; `out` writable.
enum QnarStatus qnar_graph_transition(const struct QnarGraph *graph,
                                      const char *from,
                                      const char *to,
                                      double *out);

// Scores the graph's events over `count` periods of `period` seconds from the
// first event (`count = 0` covers every event) with default scoring
// parameters, and returns the `period,node_id,s_star,s_normalized` CSV.
//
// # Safety
// `graph` must be a live handle; `out_csv` writable.
enum QnarStatus qnar_score(const struct QnarGraph *graph,
                           int64_t period,
                           uint32_t count,
                           char **out_csv);

// Runs the staker simulation with otherwise default settings (endogenous
// outcome, Bernoulli(0.5) votes, 1 token inflation per participant) and
// returns the report CSV with its header.
//
// # Safety
// `out_csv` must be writable.
enum QnarStatus qnar_simulate(size_t n_stakers,
                              uint32_t n_rounds,
                              uint32_t replications,
                              uint64_t seed,
                              enum QnarDistribution distribution,
                              double bid_fraction,
                              char **out_csv);

// Replays an auction journal and returns the printed settlement report.
//
// # Safety
// `journal_jsonl` nul-terminated; `out_report` writable.
enum QnarStatus qnar_auction_replay(const char *journal_jsonl, char **out_report);

// Sealed-bid commitment digest. `vote` is 1 for accept, -1 for deny;
// `amount` is in subunits (1e-9 token).
//
// # Safety
// `staker` nul-terminated; `nonce` 32 readable bytes; `out` 32 writable bytes.
enum QnarStatus qnar_commitment_digest(const char *staker,
                                       uint64_t amount,
                                       int32_t vote,
                                       const uint8_t *nonce,
                                       uint8_t *out);

// `(1 - beta) R / (beta R + alpha)`.
//
// # Safety
// `out` must be writable.
enum QnarStatus qnar_ppv(double beta, double alpha, double r, double *out);

// Per-observation Sharpe ratio (mean over sample standard deviation).
//
// # Safety
// `returns` must point at `len` readable doubles; `out` writable.
enum QnarStatus qnar_sharpe(const double *returns, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QNAR_H */
