#ifndef SGR_H
#define SGR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API function.
 */
typedef enum {
  SgrStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  SgrStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SgrStatus_InvalidUtf8 = 2,
  /**
   * Session log validation failed.
   */
  SgrStatus_ParseError = 3,
  /**
   * Index or step out of range.
   */
  SgrStatus_OutOfRange = 4,
  /**
   * Symbolic grammar rejected the input.
   */
  SgrStatus_GrammarError = 5,
  /**
   * Scoring failed.
   */
  SgrStatus_ScorerError = 6,
  /**
   * Loss computation rejected its inputs.
   */
  SgrStatus_LossError = 7,
  /**
   * Run/qrels evaluation failed.
   */
  SgrStatus_EvalError = 8,
  /**
   * Unexpected internal failure.
   */
  SgrStatus_Internal = 9,
} SgrStatus;

/**
 * Opaque handle over one session graph.
 */
typedef struct SgrGraph SgrGraph;

/**
 * Opaque handle over a parsed session list.
 */
typedef struct SgrSessions SgrSessions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *sgr_version(void);

/**
 * Message for the most recent error on this thread, or null. Free with
 * [`sgr_string_free`].
 */
char *sgr_last_error_message(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library and not yet
 * freed; null is a no-op.
 */
void sgr_string_free(char *s);

/**
 * Parse a session log (one JSON object per line). Strict: the first invalid
 * line fails the whole call with [`SgrStatus::ParseError`].
 *
 * # Safety
 * `jsonl` must be a valid NUL-terminated string; `out` must be a valid
 * pointer. The returned handle is freed with [`sgr_sessions_free`].
 */
SgrStatus sgr_sessions_parse(const char *jsonl, SgrSessions **out);

/**
 * # Safety
 * `handle` must come from [`sgr_sessions_parse`] and not be freed twice.
 */
void sgr_sessions_free(SgrSessions *handle);

/**
 * # Safety
 * `handle` must be a live sessions handle; `out` must be valid.
 */
SgrStatus sgr_sessions_count(const SgrSessions *handle, size_t *out);

/**
 * Corpus statistics as a JSON string.
 *
 * # Safety
 * `handle` must be a live sessions handle; `out` must be valid.
 */
SgrStatus sgr_sessions_stats_json(const SgrSessions *handle, char **out);

/**
 * Build the session graph for `sessions[session_index]` at 1-based `step`.
 *
 * # Safety
 * `handle` must be a live sessions handle; `out` must be valid. The
 * returned graph is freed with [`sgr_graph_free`].
 */
SgrStatus sgr_graph_build(const SgrSessions *handle,
                          size_t session_index,
                          size_t step,
                          SgrGraph **out);

/**
 * # Safety
 * `handle` must come from this library and not be freed twice.
 */
void sgr_graph_free(SgrGraph *handle);

/**
 * # Safety
 * `handle` must be a live graph handle; `out` must be valid.
 */
SgrStatus sgr_graph_node_count(const SgrGraph *handle, size_t *out);

/**
 * # Safety
 * `handle` must be a live graph handle; `out` must be valid.
 */
SgrStatus sgr_graph_edge_count(const SgrGraph *handle, size_t *out);

/**
 * Serialize a graph to symbolic text. `budget < 0` means unlimited;
 * otherwise oldest edges are dropped until the text fits.
 *
 * # Safety
 * `handle` must be a live graph handle; `out` must be valid.
 */
SgrStatus sgr_graph_to_text(const SgrGraph *handle, int64_t budget, char **out);

/**
 * Parse symbolic graph text back into a graph handle.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string; `out` must be valid.
 */
SgrStatus sgr_graph_from_text(const char *text, SgrGraph **out);

/**
 * Graph as a JSON document (nodes + edges with order keys).
 *
 * # Safety
 * `handle` must be a live graph handle; `out` must be valid.
 */
SgrStatus sgr_graph_to_json(const SgrGraph *handle, char **out);

/**
 * Graph as a DOT document for inspection.
 *
 * # Safety
 * `handle` must be a live graph handle; `out` must be valid.
 */
SgrStatus sgr_graph_to_dot(const SgrGraph *handle, char **out);

/**
 * Rank one query's candidates with the deterministic mock scorer and return
 * TREC run lines. `budget < 0` means unlimited graph text.
 *
 * # Safety
 * `handle` must be a live sessions handle; `tag` a valid string; `out`
 * valid.
 */
SgrStatus sgr_rank_mock(const SgrSessions *handle,
                        size_t session_index,
                        size_t step,
                        uint64_t seed,
                        int64_t budget,
                        const char *tag,
                        char **out);

/**
 * Evaluate run text against qrels text; returns the JSON metric report.
 * `ks`/`ks_len` select the NDCG cutoffs.
 *
 * # Safety
 * `run` and `qrels` must be valid strings; `ks` must point to `ks_len`
 * usizes; `out` must be valid.
 */
SgrStatus sgr_evaluate(const char *run,
                       const char *qrels,
                       const size_t *ks,
                       size_t ks_len,
                       char **out);

/**
 * Binary cross entropy of a link probability against label `z` (0 or 1).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
SgrStatus sgr_link_loss(double p, int32_t z, double *out);

/**
 * Negated sum of target-token logprobs.
 *
 * # Safety
 * `logprobs` must point to `len` doubles; `out` must be valid.
 */
SgrStatus sgr_node_loss(const double *logprobs, size_t len, double *out);

/**
 * Bradley-Terry negative log-sigmoid of the with/without history totals.
 *
 * # Safety
 * The two arrays must be valid for their lengths; `out` must be valid.
 */
SgrStatus sgr_contrastive_loss(const double *with_history,
                               size_t with_len,
                               const double *without_history,
                               size_t without_len,
                               double *out);

/**
 * Listwise negative log-likelihood over candidate scores.
 *
 * # Safety
 * `scores` must point to `len` doubles, `positives` to `positives_len`
 * usizes; `out` must be valid.
 */
SgrStatus sgr_rank_loss(const double *scores,
                        size_t len,
                        const size_t *positives,
                        size_t positives_len,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGR_H */
