#ifndef GLYPHSPOT_H
#define GLYPHSPOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_ARGUMENT = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_IO = 3,
  GS_STATUS_IMAGE_FORMAT = 4,
  GS_STATUS_MODEL_FORMAT = 5,
  GS_STATUS_CHECKSUM = 6,
  GS_STATUS_VERSION = 7,
  GS_STATUS_DIMENSION = 8,
  GS_STATUS_OUT_OF_RANGE = 9,
  GS_STATUS_INTERNAL = 10,
} GsStatus;

// A grayscale page, intensities in [0, 1].
typedef struct GsImage GsImage;

// A loaded classifier.
typedef struct GsModel GsModel;

// Outcome of spotting one page.
typedef struct GsReport GsReport;

// A box on the page in pixels plus the character probability.
typedef struct GsBox {
  uint32_t x;
  uint32_t y;
  uint32_t width;
  uint32_t height;
  double score;
} GsBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *gs_last_error(void);

// Library version as a static NUL-terminated string.
const char *gs_version(void);

// Loads a model file written by `glyphspot train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GsStatus gs_model_load(const char *path, struct GsModel **out);

// Parses a model from an in-memory copy of a model file.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be valid.
enum GsStatus gs_model_from_bytes(const uint8_t *data, size_t len, struct GsModel **out);

// Stable identifier of the model, e.g. `knn-1a2b3c4d`. Owned by the model.
//
// # Safety
// `model` must be null or a live pointer from `gs_model_load`.
const char *gs_model_id(const struct GsModel *model);

// # Safety
// `model` must be null or a pointer from `gs_model_load` not yet freed.
void gs_model_free(struct GsModel *model);

// Decodes a PNG or PGM page from disk.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GsStatus gs_image_load(const char *path, struct GsImage **out);

// Copies a row-major 8-bit grayscale buffer (0 black, 255 white). Both
// dimensions must be nonzero.
//
// # Safety
// `pixels` must point to `width * height` readable bytes and `out` must be valid.
enum GsStatus gs_image_from_gray8(const uint8_t *pixels,
                                  uint32_t width,
                                  uint32_t height,
                                  struct GsImage **out);

// # Safety
// `image` must be null or a pointer from `gs_image_*` not yet freed.
void gs_image_free(struct GsImage *image);

// Segments `image`, classifies every region with `model` and returns the
// accepted and rejected boxes. `page_id` may be null, meaning `"page"`.
// Segmentation uses the default gap threshold and minimum area.
//
// # Safety
// `model` and `image` must be live handles, `page_id` null or a
// NUL-terminated string, and `out` a valid pointer.
enum GsStatus gs_spot(const struct GsModel *model,
                      const struct GsImage *image,
                      const char *page_id,
                      struct GsReport **out);

// Number of regions classified as characters; 0 for a null report.
//
// # Safety
// `report` must be null or a live pointer from `gs_spot`.
size_t gs_report_accepted_count(const struct GsReport *report);

// Number of regions classified as rejects; 0 for a null report.
//
// # Safety
// `report` must be null or a live pointer from `gs_spot`.
size_t gs_report_rejected_count(const struct GsReport *report);

// Writes accepted box `index` (reading order) to `out`.
//
// # Safety
// `report` must be a live pointer from `gs_spot` and `out` a valid pointer.
enum GsStatus gs_report_accepted(const struct GsReport *report, size_t index, struct GsBox *out);

// Writes rejected box `index` (reading order) to `out`.
//
// # Safety
// `report` must be a live pointer from `gs_spot` and `out` a valid pointer.
enum GsStatus gs_report_rejected(const struct GsReport *report, size_t index, struct GsBox *out);

// The full report as one JSON object, same layout as `glyphspot spot`.
// Owned by the report.
//
// # Safety
// `report` must be null or a live pointer from `gs_spot`.
const char *gs_report_json(const struct GsReport *report);

// # Safety
// `report` must be null or a pointer from `gs_spot` not yet freed.
void gs_report_free(struct GsReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLYPHSPOT_H */
