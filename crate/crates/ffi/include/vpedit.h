/* C interface for the vpedit multi-view scene-editing library. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Zero means success.
 */
typedef enum VpStatus {
  VP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  VP_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VP_STATUS_UTF8 = 2,
  /**
   * Input data or configuration failed validation.
   */
  VP_STATUS_INVALID_INPUT = 3,
  /**
   * A file or config string could not be parsed.
   */
  VP_STATUS_PARSE = 4,
  /**
   * The operating system reported an I/O failure.
   */
  VP_STATUS_IO = 5,
  /**
   * The computation itself failed.
   */
  VP_STATUS_RUNTIME = 6,
  /**
   * An internal invariant was violated; the library caught a panic.
   */
  VP_STATUS_PANIC = 7,
} VpStatus;

/**
 * Opaque pipeline configuration.
 */
typedef struct VpConfig VpConfig;

/**
 * Opaque result of an edit run: updated scene, edited frames, counters.
 */
typedef struct VpOutput VpOutput;

/**
 * Opaque camera trajectory (cameras plus key-view indices).
 */
typedef struct VpPath VpPath;

/**
 * Opaque colored point scene.
 */
typedef struct VpScene VpScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *vp_version(void);

/**
 * Message of the last failure on the calling thread, or null if none has
 * occurred. The pointer stays valid until the next failing call on this
 * thread; do not free it.
 */
const char *vp_last_error_message(void);

/**
 * Creates a configuration with default values. Never fails.
 * Release with [`vp_config_free`].
 */
struct VpConfig *vp_config_new(void);

/**
 * Sets one configuration key from its text form (the same `key = value`
 * pairs the config file format uses, e.g. `eta`/`0.15`, `steps`/`25`,
 * `editor`/`recolor`, `gain_g`/`0.5`). The full new value set is
 * re-validated, so invalid combinations are rejected atomically.
 *
 * # Safety
 * `cfg` must be a live pointer from [`vp_config_new`]; `key` and `value`
 * must be NUL-terminated strings.
 */
enum VpStatus vp_config_set(struct VpConfig *cfg, const char *key, const char *value);

/**
 * Overrides the sampling seed.
 *
 * # Safety
 * `cfg` must be a live pointer from [`vp_config_new`].
 */
enum VpStatus vp_config_set_seed(struct VpConfig *cfg, uint64_t seed);

/**
 * Releases a configuration. Accepts null.
 *
 * # Safety
 * `cfg` must be null or a pointer returned by [`vp_config_new`] that has
 * not been freed yet.
 */
void vp_config_free(struct VpConfig *cfg);

/**
 * Builds the built-in textured-cube demo scene. Never fails.
 * Release with [`vp_scene_free`].
 */
struct VpScene *vp_scene_demo(void);

/**
 * Loads a point scene from its text format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to writable
 * storage for one pointer.
 */
enum VpStatus vp_scene_load(const char *path, struct VpScene **out);

/**
 * Saves a point scene in its text format.
 *
 * # Safety
 * `scene` must be a live scene handle; `path` a NUL-terminated string.
 */
enum VpStatus vp_scene_save(const struct VpScene *scene, const char *path);

/**
 * Number of points in the scene.
 *
 * # Safety
 * `scene` must be a live scene handle; `out` must be writable.
 */
enum VpStatus vp_scene_point_count(const struct VpScene *scene, uintptr_t *out);

/**
 * Releases a scene. Accepts null.
 *
 * # Safety
 * `scene` must be null or an unfreed scene handle.
 */
void vp_scene_free(struct VpScene *scene);

/**
 * Builds the demo orbit trajectory with `frames` cameras (at least 2).
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum VpStatus vp_path_demo(uintptr_t frames, struct VpPath **out);

/**
 * Loads a trajectory from its text format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VpStatus vp_path_load(const char *path, struct VpPath **out);

/**
 * Saves a trajectory in its text format.
 *
 * # Safety
 * `path` must be a live trajectory handle; `file` a NUL-terminated string.
 */
enum VpStatus vp_path_save(const struct VpPath *path, const char *file);

/**
 * Number of cameras in the trajectory.
 *
 * # Safety
 * `path` must be a live trajectory handle; `out` must be writable.
 */
enum VpStatus vp_path_frame_count(const struct VpPath *path, uintptr_t *out);

/**
 * Releases a trajectory. Accepts null.
 *
 * # Safety
 * `path` must be null or an unfreed trajectory handle.
 */
void vp_path_free(struct VpPath *path);

/**
 * Runs the full editing pipeline: renders the scene along the trajectory,
 * inverts the renders into the diffusion prior once, re-samples them with
 * the configured edit as condition, and updates the scene from the edited
 * frames. The editor configured via `editor`/`gain_*`/`bias_*`/… keys
 * drives both the edit and its stand-in denoiser.
 *
 * # Safety
 * `scene`, `path`, and `cfg` must be live handles; `out` must point to
 * writable storage for one pointer.
 */
enum VpStatus vp_edit_run(const struct VpScene *scene,
                          const struct VpPath *path,
                          const struct VpConfig *cfg,
                          struct VpOutput **out);

/**
 * Number of edited frames.
 *
 * # Safety
 * `output` must be a live output handle; `out` must be writable.
 */
enum VpStatus vp_output_frame_count(const struct VpOutput *output, uintptr_t *out);

/**
 * Pixel dimensions of the edited frames.
 *
 * # Safety
 * `output` must be a live output handle; `height` and `width` writable.
 */
enum VpStatus vp_output_frame_size(const struct VpOutput *output,
                                   uintptr_t *height,
                                   uintptr_t *width);

/**
 * Copies edited frame `index` into `buffer` as row-major H×W×3 floats in
 * [0, 1]. `buffer_len` must equal exactly height·width·3.
 *
 * # Safety
 * `output` must be a live output handle; `buffer` must point to at least
 * `buffer_len` writable floats.
 */
enum VpStatus vp_output_read_frame(const struct VpOutput *output,
                                   uintptr_t index,
                                   float *buffer,
                                   uintptr_t buffer_len);

/**
 * Stage invocation counters for the run, in pipeline order.
 *
 * # Safety
 * `output` must be a live output handle; all four out-pointers writable.
 */
enum VpStatus vp_output_counters(const struct VpOutput *output,
                                 uintptr_t *render,
                                 uintptr_t *invert,
                                 uintptr_t *sample,
                                 uintptr_t *update);

/**
 * First and last loss of the scene-updating stage.
 *
 * # Safety
 * `output` must be a live output handle; both out-pointers writable.
 */
enum VpStatus vp_output_losses(const struct VpOutput *output, double *initial, double *final_);

/**
 * Index of the frame the edit was conditioned on.
 *
 * # Safety
 * `output` must be a live output handle; `out` must be writable.
 */
enum VpStatus vp_output_condition_index(const struct VpOutput *output, uintptr_t *out);

/**
 * Clones the updated scene into a fresh scene handle.
 *
 * # Safety
 * `output` must be a live output handle; `out` must be writable.
 */
enum VpStatus vp_output_updated_scene(const struct VpOutput *output, struct VpScene **out);

/**
 * Releases an output. Accepts null.
 *
 * # Safety
 * `output` must be null or an unfreed output handle.
 */
void vp_output_free(struct VpOutput *output);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
