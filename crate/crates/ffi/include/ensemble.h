#ifndef ENSEMBLE_H
#define ENSEMBLE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  ENSEMBLE_STATUS_OK = 0,
  ENSEMBLE_STATUS_NULL_ARGUMENT = 1,
  ENSEMBLE_STATUS_INVALID_UTF8 = 2,
  ENSEMBLE_STATUS_INVALID_ARGUMENT = 3,
  ENSEMBLE_STATUS_PROVIDER = 4,
  ENSEMBLE_STATUS_IO = 5,
  ENSEMBLE_STATUS_CONFLICT = 6,
  ENSEMBLE_STATUS_PANIC = 99,
} EnsembleStatus;

/**
 * Opaque agent handle.
 */
typedef struct EnsembleAgent EnsembleAgent;

/**
 * Opaque handle that stops a run from another thread.
 */
typedef struct EnsembleInterrupt EnsembleInterrupt;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version; the pointer is static and must not be freed.
 */
const char *ensemble_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next library call on this thread.
 */
const char *ensemble_last_error(void);

void ensemble_string_free(char *s);

/**
 * Agent replaying a transcript fixture (JSON text). `workspace` may be
 * NULL for an agent without tools.
 */
EnsembleStatus ensemble_agent_new_scripted(const char *transcript_json,
                                           const char *workspace,
                                           EnsembleAgent **out);

/**
 * Agent for `provider/name`, credentials taken from the environment.
 * `base_url` and `workspace` may be NULL.
 */
EnsembleStatus ensemble_agent_new(const char *model,
                                  const char *base_url,
                                  const char *workspace,
                                  EnsembleAgent **out);

void ensemble_agent_free(EnsembleAgent *agent);

EnsembleStatus ensemble_agent_set_system_prompt(EnsembleAgent *agent, const char *prompt);

EnsembleStatus ensemble_agent_set_max_iterations(EnsembleAgent *agent, size_t n);

/**
 * Stops runs once the conversation cost exceeds `max_cost` dollars.
 */
EnsembleStatus ensemble_agent_set_budget(EnsembleAgent *agent, double max_cost);

/**
 * Runs the tool loop for `message`. `out_text` receives the final reply
 * and `out_status` (nullable) 0 completed, 1 iteration limit, 2 interrupted.
 */
EnsembleStatus ensemble_agent_run(EnsembleAgent *agent,
                                  const char *message,
                                  char **out_text,
                                  int32_t *out_status);

EnsembleStatus ensemble_agent_total_cost(const EnsembleAgent *agent, double *out);

EnsembleStatus ensemble_agent_message_count(const EnsembleAgent *agent, size_t *out);

/**
 * Removes the last user message and everything after it.
 */
EnsembleStatus ensemble_agent_undo(EnsembleAgent *agent);

/**
 * The conversation in its persisted JSON form.
 */
EnsembleStatus ensemble_agent_context_json(const EnsembleAgent *agent, char **out);

/**
 * Replaces the conversation with a persisted one.
 */
EnsembleStatus ensemble_agent_load_context_json(EnsembleAgent *agent, const char *json);

/**
 * LaTeX fragment of the whole conversation.
 */
EnsembleStatus ensemble_agent_export_latex(const EnsembleAgent *agent, char **out);

EnsembleStatus ensemble_escape_latex(const char *input, char **out);

/**
 * Handle that may be used from any thread while a run is in progress.
 */
EnsembleStatus ensemble_agent_interrupt_handle(const EnsembleAgent *agent, EnsembleInterrupt **out);

EnsembleStatus ensemble_interrupt_trigger(const EnsembleInterrupt *handle);

void ensemble_interrupt_free(EnsembleInterrupt *handle);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ENSEMBLE_H */
