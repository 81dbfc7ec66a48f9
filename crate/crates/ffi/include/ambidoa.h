#ifndef AMBIDOA_H
#define AMBIDOA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum AdoaStatus {
  ADOA_STATUS_OK = 0,
  ADOA_STATUS_NULL_POINTER = 1,
  ADOA_STATUS_INVALID_ARGUMENT = 2,
  ADOA_STATUS_SHAPE = 3,
  ADOA_STATUS_IO = 4,
  ADOA_STATUS_FORMAT = 5,
  ADOA_STATUS_AMBIGUOUS = 6,
  ADOA_STATUS_RUNTIME = 7,
  ADOA_STATUS_PANIC = 8,
} AdoaStatus;

/*
 Sphere grid handle.
 */
typedef struct AdoaGrid AdoaGrid;

/*
 Trained model handle.
 */
typedef struct AdoaModel AdoaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *ambidoa_version(void);

/*
 Message of the last failed call on this thread; empty after a success.
 Valid until the next call on the same thread.
 */
const char *ambidoa_last_error(void);

/*
 Writes the four FOA gains (W, X, Y, Z) of a direction into `out`.

 # Safety
 `out` must point to 4 writable doubles.
 */
enum AdoaStatus ambidoa_foa_gains(double azimuth, double elevation, double *out);

/*
 Builds a sphere grid with the given resolution in degrees.

 # Safety
 `out` must be a valid pointer to a handle slot.
 */
enum AdoaStatus ambidoa_grid_new(double resolution_deg, struct AdoaGrid **out);

/*
 Releases a grid; null is ignored.

 # Safety
 `grid` must come from [`ambidoa_grid_new`] and not be used afterwards.
 */
void ambidoa_grid_free(struct AdoaGrid *grid);

/*
 Number of classes, or 0 for a null handle.

 # Safety
 `grid` must be null or a live handle.
 */
uintptr_t ambidoa_grid_len(const struct AdoaGrid *grid);

/*
 Center of class `index`.

 # Safety
 `grid` must be a live handle; `azimuth` and `elevation` writable.
 */
enum AdoaStatus ambidoa_grid_center(const struct AdoaGrid *grid,
                                    uintptr_t index,
                                    double *azimuth,
                                    double *elevation);

/*
 Class nearest to a direction.

 # Safety
 `grid` must be a live handle; `index` writable.
 */
enum AdoaStatus ambidoa_grid_nearest(const struct AdoaGrid *grid,
                                     double azimuth,
                                     double elevation,
                                     uintptr_t *index);

/*
 Intensity features of the first `frames` STFT frames of a planar FOA
 buffer. `out` receives 6 × frames × (window/2 + 1) doubles, row-major.

 # Safety
 `samples` must hold `4 * n_samples` doubles and `out` `out_len` doubles.
 */
enum AdoaStatus ambidoa_features(const double *samples,
                                 uintptr_t n_samples,
                                 uint32_t sample_rate,
                                 uintptr_t window,
                                 uintptr_t hop,
                                 uintptr_t frames,
                                 double *out,
                                 uintptr_t out_len);

/*
 Loads a model checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum AdoaStatus ambidoa_model_load(const char *path, struct AdoaModel **out);

/*
 Releases a model; null is ignored.

 # Safety
 `model` must come from [`ambidoa_model_load`] and not be used afterwards.
 */
void ambidoa_model_free(struct AdoaModel *model);

/*
 Frames and frequency bins the model expects, and its STFT window and hop.

 # Safety
 `model` must be a live handle; outputs writable.
 */
enum AdoaStatus ambidoa_model_input_shape(const struct AdoaModel *model,
                                          uintptr_t *frames,
                                          uintptr_t *bins,
                                          uintptr_t *window,
                                          uintptr_t *hop);

/*
 Direction estimate from a feature tensor of the model's input shape.
 Safe to call from many threads on one model.

 # Safety
 `features` must hold `len` doubles; outputs writable.
 */
enum AdoaStatus ambidoa_model_predict(const struct AdoaModel *model,
                                      const double *features,
                                      uintptr_t len,
                                      double *azimuth,
                                      double *elevation);

/*
 MUSIC estimate over a planar FOA buffer, snapped to a grid class.

 # Safety
 `samples` must hold `4 * n_samples` doubles; outputs writable.
 */
enum AdoaStatus ambidoa_music_estimate(const double *samples,
                                       uintptr_t n_samples,
                                       uint32_t sample_rate,
                                       const struct AdoaGrid *grid,
                                       double *azimuth,
                                       double *elevation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMBIDOA_H */
