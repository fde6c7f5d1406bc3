#ifndef SSBD_H
#define SSBD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  SSBD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SSBD_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was out of range or malformed.
   */
  SSBD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Model loading or decoding failed; see `ssbd_last_error_message`.
   */
  SSBD_STATUS_ENGINE_ERROR = 3,
  /**
   * The output buffer is too small; the required length was written to
   * the length out-parameter.
   */
  SSBD_STATUS_BUFFER_TOO_SMALL = 4,
} SsbdStatus;

/**
 * Opaque model handle.
 */
typedef struct SsbdModel SsbdModel;

/**
 * Opaque per-stream session handle. Sessions keep the model alive, so the
 * model handle may be freed first.
 */
typedef struct SsbdSession SsbdSession;

/**
 * Counters for one streaming update.
 */
typedef struct {
  /**
   * Draft tokens accepted by verification.
   */
  uint64_t accepted;
  /**
   * Draft length after any trimming.
   */
  uint64_t draft_len;
  /**
   * Model forward calls.
   */
  uint64_t forwards;
  /**
   * Positions computed in multi-position forwards.
   */
  uint64_t prefill_positions;
  /**
   * Single-position decode steps.
   */
  uint64_t decode_steps;
  /**
   * 1 if the output hit the length cap.
   */
  uint8_t truncated;
} SsbdUpdateStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ssbd_last_error_message(void);

/**
 * Load a JSON model file. On success writes a handle to `out`; free it with
 * `ssbd_model_free`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
SsbdStatus ssbd_model_load(const char *path, SsbdModel **out);

/**
 * # Safety
 * `model` must come from `ssbd_model_load` and not be freed twice.
 */
void ssbd_model_free(SsbdModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
SsbdStatus ssbd_model_vocab_size(const SsbdModel *model, size_t *out);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
SsbdStatus ssbd_model_eos_id(const SsbdModel *model, uint32_t *out);

/**
 * Create a streaming session. `mask_mode`: 0 none, 1 trim-draft, 2
 * display-only. `max_new_tokens` 0 means the default cap.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
SsbdStatus ssbd_session_new(const SsbdModel *model,
                            double beta,
                            size_t mask_k,
                            uint32_t mask_mode,
                            size_t max_new_tokens,
                            SsbdSession **out);

/**
 * # Safety
 * `session` must come from `ssbd_session_new` and not be freed twice.
 */
void ssbd_session_free(SsbdSession *session);

/**
 * Re-decode for a new revision of the source. `input` is the full source
 * token sequence so far; `is_final` marks the last revision. On success the
 * committed output is readable with `ssbd_session_output`, and `stats`
 * (optional, may be null) receives the step counters.
 *
 * # Safety
 * `session` must be valid; `input` must point to `input_len` readable ids.
 */
SsbdStatus ssbd_session_update(SsbdSession *session,
                               const uint32_t *input,
                               size_t input_len,
                               bool is_final,
                               SsbdUpdateStats *stats);

/**
 * Copy the last committed output into `out`. Writes the token count to
 * `out_len`; if `capacity` is too small, returns `BufferTooSmall` with the
 * required count in `out_len` and leaves `out` untouched.
 *
 * # Safety
 * `session` and `out_len` must be valid; `out` must hold `capacity` ids.
 */
SsbdStatus ssbd_session_output(const SsbdSession *session,
                               uint32_t *out,
                               size_t capacity,
                               size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSBD_H */
