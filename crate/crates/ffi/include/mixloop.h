#ifndef MIXLOOP_H
#define MIXLOOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MixloopErrorCode {
  MixloopOk = 0,
  MixloopNullPointer = 1,
  MixloopInvalidUtf8 = 2,
  MixloopConfigError = 3,
  MixloopRunError = 4,
  MixloopExportError = 5,
} MixloopErrorCode;

/**
 * Terminal state of a run.
 */
typedef enum MixloopOutcome {
  MixloopTargetReached = 0,
  MixloopTimeout = 2,
} MixloopOutcome;

/**
 * Opaque experiment configuration handle.
 */
typedef struct MixloopConfig MixloopConfig;

/**
 * Opaque handle for a completed run, including the plant layout the run
 * used (needed when exporting its logs).
 */
typedef struct MixloopRunResult MixloopRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Detail message of the last error on this thread, or NULL when no
 * error occurred yet. Free with `mixloop_string_free`.
 */
char *mixloop_last_error_message(void);

/**
 * Frees a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must have been returned by a mixloop function and not freed before.
 */
void mixloop_string_free(char *s);

/**
 * New configuration with all defaults (oracle backend, fault-free
 * scenario, text representation). Free with `mixloop_config_free`.
 */
struct MixloopConfig *mixloop_config_new(void);

/**
 * Parses a configuration from its JSON form. On success `*out` receives
 * a new handle.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid
 * pointer to a pointer slot.
 */
enum MixloopErrorCode mixloop_config_from_json(const char *json, struct MixloopConfig **out);

/**
 * # Safety
 * `config` must be a handle from this library, not freed before. NULL
 * is a no-op.
 */
void mixloop_config_free(struct MixloopConfig *config);

/**
 * Executes the configured closed-loop run. On success `*out` receives a
 * result handle to free with `mixloop_run_result_free`.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer slot.
 */
enum MixloopErrorCode mixloop_run(const struct MixloopConfig *config,
                                  struct MixloopRunResult **out);

/**
 * # Safety
 * `result` must be a live handle from `mixloop_run`. NULL is a no-op.
 */
void mixloop_run_result_free(struct MixloopRunResult *result);

/**
 * # Safety
 * `result` must be a live handle from `mixloop_run`.
 */
enum MixloopOutcome mixloop_run_result_outcome(const struct MixloopRunResult *result);

/**
 * Final collection-tank level in m.
 *
 * # Safety
 * `result` must be a live handle from `mixloop_run`.
 */
double mixloop_run_result_final_level_b204(const struct MixloopRunResult *result);

/**
 * Number of decision points in the run.
 *
 * # Safety
 * `result` must be a live handle from `mixloop_run`.
 */
uintptr_t mixloop_run_result_decision_points(const struct MixloopRunResult *result);

/**
 * Serializes the full run result to JSON. Free the string with
 * `mixloop_string_free`.
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer slot.
 */
enum MixloopErrorCode mixloop_run_result_to_json(const struct MixloopRunResult *result, char **out);

/**
 * Writes the three CSV operation logs of the run into `dir`.
 *
 * # Safety
 * `result` must be a live handle and `dir` a valid NUL-terminated path.
 */
enum MixloopErrorCode mixloop_run_result_export_csv(const struct MixloopRunResult *result,
                                                    const char *dir);

/**
 * Renders the prompt a backend would receive for the configured initial
 * state. Free the string with `mixloop_string_free`.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer slot.
 */
enum MixloopErrorCode mixloop_render_prompt(const struct MixloopConfig *config, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXLOOP_H */
