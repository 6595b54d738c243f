#ifndef POINTDR_H
#define POINTDR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PdrStatus {
  PDR_STATUS_OK = 0,
  PDR_STATUS_NULL_POINTER = 1,
  PDR_STATUS_IO = 2,
  PDR_STATUS_FORMAT = 3,
  PDR_STATUS_ARGUMENT = 4,
  PDR_STATUS_NUMERIC = 5,
  PDR_STATUS_STATE = 6,
  PDR_STATUS_PANIC = 7,
} PdrStatus;

typedef enum PdrWeather {
  PDR_WEATHER_DENSE_FOG = 0,
  PDR_WEATHER_LIGHT_FOG = 1,
  PDR_WEATHER_RAIN = 2,
  PDR_WEATHER_SNOW = 3,
} PdrWeather;

// Opaque point cloud.
typedef struct PdrCloud PdrCloud;

// Opaque trained model.
typedef struct PdrModel PdrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *pdr_last_error(void);

// Reads a `.bin` scan and, if `label_path` is non-null, its `.label` file
// under the SemanticKITTI label map.
//
// # Safety
// `scan_path` and `label_path` must be null or NUL-terminated strings;
// `out` must be writable.
enum PdrStatus pdr_cloud_read(const char *scan_path, const char *label_path, struct PdrCloud **out);

// Builds a cloud from `n` interleaved `x, y, z, intensity` records and
// optional train-ids.
//
// # Safety
// `xyzi` must hold `4 * n` floats; `labels` must be null or hold `n` bytes.
enum PdrStatus pdr_cloud_from_arrays(const float *xyzi,
                                     size_t n,
                                     const uint8_t *labels,
                                     struct PdrCloud **out);

// Number of points, or 0 for a null handle.
//
// # Safety
// `cloud` must be null or a live handle.
size_t pdr_cloud_len(const struct PdrCloud *cloud);

// Whether the cloud carries labels.
//
// # Safety
// `cloud` must be null or a live handle.
bool pdr_cloud_has_labels(const struct PdrCloud *cloud);

// Copies points as interleaved `x, y, z, intensity` into `out`, which holds
// `capacity` points.
//
// # Safety
// `out` must be writable for `4 * capacity` floats.
enum PdrStatus pdr_cloud_copy_points(const struct PdrCloud *cloud, float *out, size_t capacity);

// Copies train-ids into `out`, which holds `capacity` bytes.
//
// # Safety
// `out` must be writable for `capacity` bytes.
enum PdrStatus pdr_cloud_copy_labels(const struct PdrCloud *cloud, uint8_t *out, size_t capacity);

// # Safety
// `cloud` must be null or a handle not yet freed.
void pdr_cloud_free(struct PdrCloud *cloud);

// Weak view (rotation and scaling) with default settings.
//
// # Safety
// `cloud` must be a live handle; `out` must be writable.
enum PdrStatus pdr_augment_weak(const struct PdrCloud *cloud, uint64_t seed, struct PdrCloud **out);

// Strong view with default settings. Noise points are labeled ignored.
//
// # Safety
// `cloud` must be a live handle; `out` must be writable.
enum PdrStatus pdr_augment_strong(const struct PdrCloud *cloud,
                                  uint64_t seed,
                                  struct PdrCloud **out);

// Applies a weather preset to a labeled cloud. `mode` is a [`PdrWeather`]
// value.
//
// # Safety
// `cloud` must be a live handle; `out` must be writable.
enum PdrStatus pdr_weather_corrupt(const struct PdrCloud *cloud,
                                   uint32_t mode,
                                   uint64_t seed,
                                   struct PdrCloud **out);

// Loads a checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PdrStatus pdr_model_load(const char *path, struct PdrModel **out);

// Number of classes the model predicts, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t pdr_model_num_classes(const struct PdrModel *model);

// Predicts one train-id per point into `out`, which holds `capacity` bytes.
//
// # Safety
// `model` and `cloud` must be live handles; `out` must be writable for
// `capacity` bytes.
enum PdrStatus pdr_model_predict(const struct PdrModel *model,
                                 const struct PdrCloud *cloud,
                                 uint8_t *out,
                                 size_t capacity);

// # Safety
// `model` must be null or a handle not yet freed.
void pdr_model_free(struct PdrModel *model);

// Prototype contrastive loss of `n × d` row-major embeddings against `c × d`
// prototypes. `initialized` (nullable, `c` bytes) marks usable prototypes;
// null means all. `grad` (nullable, `n × d`) receives the gradient wrt the
// embeddings.
//
// # Safety
// Every non-null pointer must be valid for the sizes above.
enum PdrStatus pdr_contrastive_loss(const double *embeddings,
                                    const uint8_t *labels,
                                    size_t n,
                                    size_t d,
                                    const double *prototypes,
                                    const uint8_t *initialized,
                                    size_t c,
                                    double temperature,
                                    double *loss,
                                    double *grad);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POINTDR_H */
