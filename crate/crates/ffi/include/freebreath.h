#ifndef FREEBREATH_H
#define FREEBREATH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum FbStatus {
  FB_STATUS_OK = 0,
  FB_STATUS_NULL_POINTER = 1,
  FB_STATUS_INVALID_ARGUMENT = 2,
  FB_STATUS_SHAPE_MISMATCH = 3,
  FB_STATUS_INVALID_CONFIG = 4,
  FB_STATUS_DIVERGENCE = 5,
  FB_STATUS_FORMAT = 6,
  FB_STATUS_IO = 7,
  FB_STATUS_PANIC = 8,
} FbStatus;

// Pipeline configuration.
typedef struct FbConfig FbConfig;

// Complex image, row-major.
typedef struct FbImage FbImage;

// Summary of a finished pipeline run.
typedef struct FbSummary FbSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fb_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated
// when `len` is large enough) and returns the size needed including the NUL.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t fb_last_error(char *buf, size_t len);

// Builds an image from `2 * nx * ny` interleaved (re, im) doubles.
//
// # Safety
// `data` must point to `2 * nx * ny` doubles; `out` must be a valid pointer.
enum FbStatus fb_image_new(size_t nx, size_t ny, const double *data, struct FbImage **out);

// Reads an image dataset file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
enum FbStatus fb_image_read(const char *path, struct FbImage **out);

// Writes an image dataset file.
//
// # Safety
// `img` must be a live handle; `path` a NUL-terminated string.
enum FbStatus fb_image_write(const struct FbImage *img, const char *path);

// # Safety
// `img` must be a live handle; `nx` and `ny` valid pointers.
enum FbStatus fb_image_dims(const struct FbImage *img, size_t *nx, size_t *ny);

// Copies the pixels as interleaved (re, im) doubles; `len` counts doubles
// and must be at least `2 * nx * ny`.
//
// # Safety
// `img` must be a live handle; `out` valid for `len` doubles.
enum FbStatus fb_image_copy_data(const struct FbImage *img, double *out, size_t len);

// # Safety
// `img` must be null or a handle not yet freed.
void fb_image_free(struct FbImage *img);

// PSNR in dB of `test` against `reference`.
//
// # Safety
// Both handles must be live; `out` a valid pointer.
enum FbStatus fb_psnr(const struct FbImage *test, const struct FbImage *reference, double *out);

// SSIM of the magnitudes of `test` and `reference`.
//
// # Safety
// Both handles must be live; `out` a valid pointer.
enum FbStatus fb_ssim(const struct FbImage *test, const struct FbImage *reference, double *out);

// Default pipeline configuration.
//
// # Safety
// `out` must be a valid pointer.
enum FbStatus fb_config_default(struct FbConfig **out);

// Parses and validates a JSON configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
enum FbStatus fb_config_from_json(const char *json, struct FbConfig **out);

// # Safety
// `cfg` must be a live handle.
enum FbStatus fb_config_set_seed(struct FbConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be a live handle; `dir` a NUL-terminated string.
enum FbStatus fb_config_set_output_dir(struct FbConfig *cfg, const char *dir);

// Serializes the configuration as JSON; returns the size needed including the NUL.
//
// # Safety
// `cfg` must be a live handle; `buf` null or valid for `len` bytes.
size_t fb_config_to_json(const struct FbConfig *cfg, char *buf, size_t len);

// # Safety
// `cfg` must be null or a handle not yet freed.
void fb_config_free(struct FbConfig *cfg);

// Runs the full pipeline; artifacts land in the configured output directory.
//
// # Safety
// `cfg` must be a live handle; `out` a valid pointer.
enum FbStatus fb_pipeline_run(const struct FbConfig *cfg, struct FbSummary **out);

// PSNR and SSIM of one method (`mocobel`, `tikhonov`, `rra`, `sos`, `zero_filled`).
//
// # Safety
// `summary` must be a live handle, `method` a NUL-terminated string and the
// outputs valid pointers.
enum FbStatus fb_summary_score(const struct FbSummary *summary,
                               const char *method,
                               double *psnr_db,
                               double *ssim);

// Serializes the summary as JSON; returns the size needed including the NUL.
//
// # Safety
// `summary` must be a live handle; `buf` null or valid for `len` bytes.
size_t fb_summary_to_json(const struct FbSummary *summary, char *buf, size_t len);

// # Safety
// `summary` must be null or a handle not yet freed.
void fb_summary_free(struct FbSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREEBREATH_H */
