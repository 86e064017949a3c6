#ifndef VISAGENT_H
#define VISAGENT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum VisagentStatus {
  VISAGENT_STATUS_OK = 0,
  VISAGENT_STATUS_NULL_ARGUMENT = 1,
  VISAGENT_STATUS_INVALID_UTF8 = 2,
  VISAGENT_STATUS_INVALID_INPUT = 3,
  VISAGENT_STATUS_EPISODE_FAILED = 4,
  VISAGENT_STATUS_TRACE_CORRUPT = 5,
  VISAGENT_STATUS_REPLAY_DIVERGENCE = 6,
  VISAGENT_STATUS_PANIC = 7,
} VisagentStatus;

/**
 * Outcome of a finished episode; opaque to C callers.
 */
typedef struct VisagentEpisode VisagentEpisode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library and valid until the next call on the same thread.
 */
const char *visagent_last_error(void);

/**
 * Library version as a static string.
 */
const char *visagent_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `text` must come from this library and not be freed twice.
 */
void visagent_string_free(char *text);

/**
 * Parses one model turn into JSON: `{"ok": true, "turn": {...}}` or
 * `{"ok": false, "reason": "..."}`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out_json` a valid pointer.
 */
enum VisagentStatus visagent_parse_turn(const char *text, char **out_json);

/**
 * Maps an answer onto an option index; writes -1 when nothing matches.
 *
 * # Safety
 * `answer` and `options_json` (a JSON array of strings) must be
 * NUL-terminated strings; `out_index` a valid pointer.
 */
enum VisagentStatus visagent_match_option(const char *answer,
                                          const char *options_json,
                                          int32_t *out_index);

/**
 * Runs one episode against a scripted model and the native tool stubs.
 *
 * `task_json` holds one task in the Blink row format with image paths
 * relative to `image_root`; `script_json` is an array of
 * `{"response", "expect_substring"?}` steps, also used for sub-agent calls.
 * `max_iterations` of 0 keeps the default.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_episode` a valid pointer.
 */
enum VisagentStatus visagent_episode_run_scripted(const char *task_json,
                                                  const char *script_json,
                                                  const char *image_root,
                                                  const char *workdir,
                                                  uint32_t max_iterations,
                                                  struct VisagentEpisode **out_episode);

/**
 * Re-runs a JSONL trace and checks that it reproduces.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_episode` a valid pointer.
 */
enum VisagentStatus visagent_replay(const char *trace_path,
                                    const char *workdir,
                                    struct VisagentEpisode **out_episode);

/**
 * Final answer text; null for a null handle. Free with `visagent_string_free`.
 *
 * # Safety
 * `episode` must be null or a live handle.
 */
char *visagent_episode_answer(const struct VisagentEpisode *episode);

/**
 * Status name: `answered`, `max_iterations` or `backend_failure`.
 *
 * # Safety
 * `episode` must be null or a live handle.
 */
char *visagent_episode_status(const struct VisagentEpisode *episode);

/**
 * Trace as JSONL, one event per line.
 *
 * # Safety
 * `episode` must be null or a live handle.
 */
char *visagent_episode_trace_jsonl(const struct VisagentEpisode *episode);

/**
 * Number of iterations the episode used; 0 for a null handle.
 *
 * # Safety
 * `episode` must be null or a live handle.
 */
uint32_t visagent_episode_iterations(const struct VisagentEpisode *episode);

/**
 * Releases an episode handle. Null is ignored.
 *
 * # Safety
 * `episode` must come from this library and not be freed twice.
 */
void visagent_episode_free(struct VisagentEpisode *episode);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISAGENT_H */
