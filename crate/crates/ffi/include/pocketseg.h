#ifndef POCKETSEG_H
#define POCKETSEG_H

#include <stddef.h>
#include <stdint.h>

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_IO = 3,
  PS_STATUS_PARSE = 4,
  PS_STATUS_CHECKPOINT = 5,
  PS_STATUS_SHAPE = 6,
  PS_STATUS_UNDEFINED_METRIC = 7,
  PS_STATUS_PANIC = 8,
  PS_STATUS_OTHER = 9,
} PsStatus;

/**
 * Opaque handle to a loaded single-network model.
 */
typedef struct PsModel PsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ps_last_error_message(char *buf, size_t len);

/**
 * Loads a checkpoint written by the training command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PsStatus ps_model_load(const char *path, struct PsModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`ps_model_load`] and not be used afterwards.
 */
void ps_model_free(struct PsModel *model);

/**
 * Model name such as `BM[T1C]`; valid while the model lives. Null on a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *ps_model_name(const struct PsModel *model);

/**
 * Number of input volumes [`ps_model_predict`] expects. Zero on a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ps_model_input_count(const struct PsModel *model);

/**
 * Sequence name (`T1`, `T2`, `T1C` or `FL`) of input `index`; null when out of range.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *ps_model_input_sequence(const struct PsModel *model, size_t index);

/**
 * Runs sliding-window inference on one preprocessed study.
 *
 * `inputs` holds [`ps_model_input_count`] volumes back to back, each of
 * `dims[0]*dims[1]*dims[2]` voxels, in the order reported by
 * [`ps_model_input_sequence`]. `foreground_prob` (optional) receives the
 * per-voxel foreground probability and `mask` (optional) the argmax label.
 *
 * # Safety
 * `dims` and `spacing_mm` point to three values; buffers hold the sizes above.
 */
enum PsStatus ps_model_predict(const struct PsModel *model,
                               const size_t *dims,
                               const double *spacing_mm,
                               const float *inputs,
                               size_t patch_size,
                               size_t stride,
                               float *foreground_prob,
                               uint8_t *mask);

/**
 * Dice similarity of two binary masks.
 *
 * # Safety
 * Masks hold `dims[0]*dims[1]*dims[2]` bytes of 0/1; `dims`, `spacing_mm` point to three values.
 */
enum PsStatus ps_dice(const uint8_t *pred,
                      const uint8_t *truth,
                      const size_t *dims,
                      const double *spacing_mm,
                      double *out);

/**
 * 95th-percentile symmetric surface distance in millimetres.
 *
 * # Safety
 * As for [`ps_dice`].
 */
enum PsStatus ps_hd95(const uint8_t *pred,
                      const uint8_t *truth,
                      const size_t *dims,
                      const double *spacing_mm,
                      double *out);

/**
 * False-positive error: predicted voxels outside the truth over predicted voxels.
 *
 * # Safety
 * As for [`ps_dice`].
 */
enum PsStatus ps_fpe(const uint8_t *pred,
                     const uint8_t *truth,
                     const size_t *dims,
                     const double *spacing_mm,
                     double *out);

/**
 * False-negative error: missed truth voxels over truth voxels.
 *
 * # Safety
 * As for [`ps_dice`].
 */
enum PsStatus ps_fne(const uint8_t *pred,
                     const uint8_t *truth,
                     const size_t *dims,
                     const double *spacing_mm,
                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POCKETSEG_H */
