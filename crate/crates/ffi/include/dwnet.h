#ifndef DWNET_H
#define DWNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DwnetStatus {
  DWNET_STATUS_OK = 0,
  DWNET_STATUS_NULL_POINTER = 1,
  DWNET_STATUS_INVALID_ARGUMENT = 2,
  DWNET_STATUS_SHAPE = 3,
  DWNET_STATUS_IO = 4,
  DWNET_STATUS_FORMAT = 5,
  DWNET_STATUS_NON_FINITE = 6,
  DWNET_STATUS_DEGENERATE_REFERENCE = 7,
  DWNET_STATUS_BUFFER_TOO_SMALL = 8,
  DWNET_STATUS_PANIC = 9,
  DWNET_STATUS_UNSUPPORTED = 10,
} DwnetStatus;

/**
 * A built or loaded model.
 */
typedef struct DwnetModel DwnetModel;

/**
 * A trajectory read from a `DWTRJ1` file.
 */
typedef struct DwnetTrajectory DwnetTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *dwnet_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dwnet_version(void);

/**
 * Build a model with freshly initialized parameters.
 *
 * `family` is one of `unet_base`, `unet_mod`, `cnunet`, `unet_deep`,
 * `sinenet`, `dwnet`. `waves = 0` selects the family default.
 *
 * # Safety
 * `family` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DwnetStatus dwnet_model_build(const char *family,
                                   uint32_t width,
                                   uint32_t levels,
                                   uint32_t waves,
                                   uint32_t in_channels,
                                   uint32_t out_channels,
                                   bool periodic,
                                   uint64_t seed,
                                   struct DwnetModel **out);

/**
 * Load the model of a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DwnetStatus dwnet_model_load(const char *path, struct DwnetModel **out);

/**
 * Write the model as a checkpoint without optimizer state.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum DwnetStatus dwnet_model_save(const struct DwnetModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. NULL is
 * accepted.
 */
void dwnet_model_free(struct DwnetModel *model);

/**
 * # Safety
 * `model` must come from this library; `out` must be valid.
 */
enum DwnetStatus dwnet_model_param_count(const struct DwnetModel *model, uint64_t *out);

/**
 * Input and output channel counts of a model.
 *
 * # Safety
 * `model` must come from this library; `in_channels` and `out_channels`
 * must be valid.
 */
enum DwnetStatus dwnet_model_channels(const struct DwnetModel *model,
                                      uint32_t *in_channels,
                                      uint32_t *out_channels);

/**
 * One forward pass on an `(n, in_channels, h, w)` row-major batch. Writes
 * `n * out_channels * h * w` values to `output`.
 *
 * # Safety
 * `input` must hold `n * in_channels * h * w` floats and `output` must have
 * room for `output_len` floats.
 */
enum DwnetStatus dwnet_model_forward(const struct DwnetModel *model,
                                     const float *input,
                                     uint32_t n,
                                     uint32_t h,
                                     uint32_t w,
                                     float *output,
                                     size_t output_len);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum DwnetStatus dwnet_trajectory_load(const char *path, struct DwnetTrajectory **out);

/**
 * Writes `[T, M, H, W]` to `dims`.
 *
 * # Safety
 * `traj` must come from this library and `dims` hold four values.
 */
enum DwnetStatus dwnet_trajectory_dims(const struct DwnetTrajectory *traj, uint32_t *dims);

/**
 * Borrow the frame-major data. The pointer lives as long as the handle.
 *
 * # Safety
 * `traj` must come from this library; `data` and `len` must be valid.
 */
enum DwnetStatus dwnet_trajectory_data(const struct DwnetTrajectory *traj,
                                       const float **data,
                                       size_t *len);

/**
 * # Safety
 * `traj` must come from this library and not be used afterwards. NULL is
 * accepted.
 */
void dwnet_trajectory_free(struct DwnetTrajectory *traj);

/**
 * Learning rate of epoch `i` of `n_total`, scaled by `alpha`.
 *
 * # Safety
 * `out` must be valid.
 */
enum DwnetStatus dwnet_lr_schedule(uint64_t i, uint64_t n_total, double alpha, double *out);

/**
 * Field-averaged relative L2 error of one `(fields, H, W)` frame.
 *
 * # Safety
 * `pred` and `truth` must hold `len` floats; `out` must be valid.
 */
enum DwnetStatus dwnet_scaled_l2(const float *pred,
                                 const float *truth,
                                 size_t len,
                                 uint32_t fields,
                                 double *out);

/**
 * Variance-normalized squared deviation of two diagnostic vectors.
 *
 * # Safety
 * `y` and `y_true` must hold `len` values; `out` must be valid.
 */
enum DwnetStatus dwnet_stat_err(const double *y, const double *y_true, size_t len, double *out);

/**
 * Indices of the non-dominated `(cost, error)` points, by ascending cost.
 * `out_len` receives the front size; if it exceeds `capacity` nothing is
 * written and `BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `cost` and `error` must hold `n` values; `out_idx` must have room for
 * `capacity` entries; `out_len` must be valid.
 */
enum DwnetStatus dwnet_pareto_front(const double *cost,
                                    const double *error,
                                    size_t n,
                                    size_t *out_idx,
                                    size_t capacity,
                                    size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DWNET_H */
