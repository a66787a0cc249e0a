#ifndef NEUROISP_H
#define NEUROISP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NeuroispStatus {
  NEUROISP_STATUS_OK = 0,
  NEUROISP_STATUS_NULL_POINTER = 1,
  NEUROISP_STATUS_INVALID_ARGUMENT = 2,
  NEUROISP_STATUS_IO = 3,
  NEUROISP_STATUS_CONFIG = 4,
  NEUROISP_STATUS_PIPELINE = 5,
  NEUROISP_STATUS_NETWORK = 6,
  NEUROISP_STATUS_LOOP = 7,
  NEUROISP_STATUS_BUFFER_TOO_SMALL = 8,
  NEUROISP_STATUS_PANIC = 9,
} NeuroispStatus;

typedef enum NeuroispBayer {
  NEUROISP_BAYER_RGGB = 0,
  NEUROISP_BAYER_BGGR = 1,
  NEUROISP_BAYER_GRBG = 2,
  NEUROISP_BAYER_GBRG = 3,
} NeuroispBayer;

// A spiking network loaded from a checkpoint.
typedef struct NeuroispNet NeuroispNet;

// A configured image pipeline for one sensor geometry.
typedef struct NeuroispPipeline NeuroispPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *neuroisp_last_error(void);

// Library version as a static string.
const char *neuroisp_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void neuroisp_string_free(char *s);

// Creates a pipeline. `config_json` is a configuration document as accepted
// by the command line tool, or NULL for the defaults.
//
// # Safety
// `config_json` must be NULL or NUL-terminated; `out` must be writable.
enum NeuroispStatus neuroisp_pipeline_new(const char *config_json,
                                          size_t width,
                                          size_t height,
                                          uint8_t bit_depth,
                                          enum NeuroispBayer pattern,
                                          struct NeuroispPipeline **out);

// # Safety
// `p` must be NULL or a pipeline from [`neuroisp_pipeline_new`], not yet freed.
void neuroisp_pipeline_free(struct NeuroispPipeline *p);

// Samples per output pixel under the current configuration: 1 or 3.
//
// # Safety
// `p` must be a live pipeline and `channels` writable.
enum NeuroispStatus neuroisp_pipeline_output_channels(const struct NeuroispPipeline *p,
                                                      size_t *channels);

// Runs one raster-order Bayer frame of `width * height` samples. Writes
// `width * height * channels` interleaved samples to `output`.
//
// # Safety
// `input` must hold `input_len` samples and `output` room for `output_len`.
enum NeuroispStatus neuroisp_pipeline_run(struct NeuroispPipeline *p,
                                          const uint16_t *input,
                                          size_t input_len,
                                          uint16_t *output,
                                          size_t output_len);

// Statistics of the last frame as JSON. Free with [`neuroisp_string_free`].
//
// # Safety
// `p` must be a live pipeline and `out` writable.
enum NeuroispStatus neuroisp_pipeline_stats_json(const struct NeuroispPipeline *p, char **out);

// Applies a directive such as `{"gamma": 2.4}` from the next frame on. An
// invalid directive changes nothing.
//
// # Safety
// `p` must be a live pipeline and `directive_json` NUL-terminated.
enum NeuroispStatus neuroisp_pipeline_apply_directive(struct NeuroispPipeline *p,
                                                      const char *directive_json);

// Loads a network checkpoint.
//
// # Safety
// `path` must be NUL-terminated and `out` writable.
enum NeuroispStatus neuroisp_net_load(const char *path, struct NeuroispNet **out);

// # Safety
// `net` must be NULL or a network from [`neuroisp_net_load`], not yet freed.
void neuroisp_net_free(struct NeuroispNet *net);

// Classifies one binary voxel grid laid out `[bin][polarity][y][x]` with
// `bins` time bins and the network's input size.
//
// # Safety
// `voxels` must hold `len` bytes and `class_out` be writable.
enum NeuroispStatus neuroisp_net_classify(const struct NeuroispNet *net,
                                          const uint8_t *voxels,
                                          size_t len,
                                          size_t bins,
                                          size_t *class_out);

// Runs a closed-loop scenario file and returns its directive log as JSON
// lines. Free the log with [`neuroisp_string_free`].
//
// # Safety
// `path` must be NUL-terminated and `log_out` writable.
enum NeuroispStatus neuroisp_run_scenario(const char *path, char **log_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUROISP_H */
