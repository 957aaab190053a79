#ifndef RESTCN_H
#define RESTCN_H

/* Generated by cbindgen from restcn-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the library's error classes.
 */
typedef enum RestcnStatus {
  RESTCN_STATUS_OK = 0,
  /**
   * Invalid configuration or parameter.
   */
  RESTCN_STATUS_CONFIG = 2,
  /**
   * Bad input data or files.
   */
  RESTCN_STATUS_DATA = 3,
  /**
   * A computation diverged.
   */
  RESTCN_STATUS_NUMERIC = 4,
  /**
   * A required pointer argument was null.
   */
  RESTCN_STATUS_NULL_ARG = 10,
  /**
   * A string argument was not valid UTF-8.
   */
  RESTCN_STATUS_UTF8 = 11,
} RestcnStatus;

/**
 * An opened checkpoint: the model plus its preprocessing state.
 */
typedef struct RestcnCheckpoint RestcnCheckpoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *restcn_last_error(void);

/**
 * Loads a checkpoint directory (as written by `restcn train` / `refine`).
 * On success writes a handle into `out`; free it with
 * `restcn_checkpoint_free`.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum RestcnStatus restcn_checkpoint_load(const char *dir, struct RestcnCheckpoint **out);

/**
 * Releases a checkpoint handle. Null is a no-op.
 *
 * # Safety
 * `handle` must come from `restcn_checkpoint_load` and not be freed twice.
 */
void restcn_checkpoint_free(struct RestcnCheckpoint *handle);

/**
 * Per-frame feature width the model expects.
 *
 * # Safety
 * `handle` must be a live checkpoint handle.
 */
uintptr_t restcn_input_dim(const struct RestcnCheckpoint *handle);

/**
 * Number of output classes.
 *
 * # Safety
 * `handle` must be a live checkpoint handle.
 */
uintptr_t restcn_num_classes(const struct RestcnCheckpoint *handle);

/**
 * 1 when the checkpoint holds the two-stream refined model.
 *
 * # Safety
 * `handle` must be a live checkpoint handle.
 */
int32_t restcn_is_multistream(const struct RestcnCheckpoint *handle);

/**
 * Eval-mode class scores for one sequence. `input` is row-major
 * `num_frames x dim` (already mean-subtracted, like the training inputs);
 * `logits_out` receives `restcn_num_classes` values.
 *
 * # Safety
 * Buffers must be valid for the stated extents.
 */
enum RestcnStatus restcn_predict(const struct RestcnCheckpoint *handle,
                                 const double *input,
                                 uintptr_t num_frames,
                                 uintptr_t dim,
                                 double *logits_out);

/**
 * Runs one recorded forward pass and decodes the activation of `layer`
 * (1..=10) back to skeleton space, mean skeleton restored. `frames_out`
 * receives `num_frames x dim` values. Only single-stream checkpoints
 * decode.
 *
 * # Safety
 * Buffers must be valid for the stated extents.
 */
enum RestcnStatus restcn_decode_layer(const struct RestcnCheckpoint *handle,
                                      const double *input,
                                      uintptr_t num_frames,
                                      uintptr_t dim,
                                      uintptr_t layer,
                                      double *frames_out);

/**
 * Renders first-layer filter `filter_id` as skeleton frames (mean added):
 * `frames_out` receives `first_filter_len x dim` values, and the filter
 * length is written to `frames_len_out`.
 *
 * # Safety
 * `frames_out` must hold `restcn_first_filter_len(handle) * dim` doubles.
 */
enum RestcnStatus restcn_filter_skeleton(const struct RestcnCheckpoint *handle,
                                         uintptr_t filter_id,
                                         double *frames_out,
                                         uintptr_t *frames_len_out);

/**
 * First-layer filter length (frames per filter strip).
 *
 * # Safety
 * `handle` must be a live checkpoint handle.
 */
uintptr_t restcn_first_filter_len(const struct RestcnCheckpoint *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESTCN_H */
