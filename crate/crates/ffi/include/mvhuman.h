#ifndef MVHUMAN_H
#define MVHUMAN_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum MvhStatus {
  MVH_STATUS_OK = 0,
  MVH_STATUS_NULL_POINTER = 1,
  MVH_STATUS_INVALID_ARGUMENT = 2,
  MVH_STATUS_BUFFER_TOO_SMALL = 3,
  MVH_STATUS_DIMENSION = 4,
  MVH_STATUS_INVARIANT = 5,
  MVH_STATUS_CONFIG = 6,
  MVH_STATUS_FORMAT = 7,
  MVH_STATUS_IO = 8,
  MVH_STATUS_NO_CONSTRAINTS = 9,
  MVH_STATUS_DEGENERATE = 10,
  MVH_STATUS_EMPTY = 11,
  MVH_STATUS_MEASUREMENT = 12,
  MVH_STATUS_PENETRATION = 13,
  MVH_STATUS_PANIC = 14,
} MvhStatus;

/**
 * Result of a multi-view fit.
 */
typedef struct MvhFit MvhFit;

/**
 * Body template (rest mesh, skinning, regressors, shape directions).
 */
typedef struct MvhTemplate MvhTemplate;

/**
 * Sizes of a template's arrays.
 */
typedef struct MvhTemplateDims {
  size_t joints;
  size_t vertices;
  size_t faces;
  size_t keypoints;
  /**
   * Length of a pose vector: 3 axis-angle entries per non-root joint.
   */
  size_t pose_len;
  size_t shape_len;
} MvhTemplateDims;

/**
 * Weak-perspective camera: `x = scale * (R(rotation) X)_xy + translation`.
 */
typedef struct MvhCamera {
  double scale;
  double rotation[3];
  double translation[2];
} MvhCamera;

/**
 * Evaluation scores; `hausdorff_mm` is NaN when not requested.
 */
typedef struct MvhMetrics {
  double mpjpe_mm;
  double pa_mpjpe_mm;
  double pck;
  double auc;
  double hausdorff_mm;
  double measurement_mean_rel_error;
} MvhMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mvh_version(void);

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *mvh_last_error_message(void);

/**
 * Builds the built-in procedural template.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum MvhStatus mvh_template_new_mini(struct MvhTemplate **out);

/**
 * Loads a template file (binary or JSON container).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in `mvh_template_new_mini`.
 */
enum MvhStatus mvh_template_load(const char *path, struct MvhTemplate **out);

/**
 * Saves a template in the binary container format.
 *
 * # Safety
 * `template` must be a live handle; `path` a NUL-terminated string.
 */
enum MvhStatus mvh_template_save(const struct MvhTemplate *template_, const char *path);

/**
 * Releases a template. Null is ignored.
 *
 * # Safety
 * `template` must be null or a handle not yet freed.
 */
void mvh_template_free(struct MvhTemplate *template_);

/**
 * Array sizes of a template.
 *
 * # Safety
 * `template` must be a live handle; `out` writable.
 */
enum MvhStatus mvh_template_dims(const struct MvhTemplate *template_, struct MvhTemplateDims *out);

/**
 * Copies triangle vertex indices (3 per face) into `out`.
 *
 * # Safety
 * `template` must be a live handle; `out` must hold `out_len` elements.
 */
enum MvhStatus mvh_template_faces(const struct MvhTemplate *template_,
                                  uint32_t *out,
                                  size_t out_len);

/**
 * Posed mesh vertices (metres, xyz interleaved) for the given pose and
 * shape vectors.
 *
 * # Safety
 * `template` must be a live handle; every array must hold its stated length.
 */
enum MvhStatus mvh_skin(const struct MvhTemplate *template_,
                        const double *pose,
                        size_t pose_len,
                        const double *shape,
                        size_t shape_len,
                        double *out,
                        size_t out_len);

/**
 * 3D evaluation keypoints (metres, xyz interleaved).
 *
 * # Safety
 * As `mvh_skin`.
 */
enum MvhStatus mvh_keypoints3d(const struct MvhTemplate *template_,
                               const double *pose,
                               size_t pose_len,
                               const double *shape,
                               size_t shape_len,
                               double *out,
                               size_t out_len);

/**
 * Projects `n_points` 3D points (xyz interleaved) to pixels (xy interleaved).
 *
 * # Safety
 * `camera` must be readable; `points` must hold `3 * n_points` values and
 * `out` `out_len` values.
 */
enum MvhStatus mvh_project(const struct MvhCamera *camera,
                           const double *points,
                           size_t n_points,
                           double *out,
                           size_t out_len);

/**
 * Fits body and cameras to `n_views` views of 2D keypoints.
 *
 * `joints2d` holds `n_views * keypoints * 2` pixel coordinates (view-major),
 * `visibility` `n_views * keypoints` flags (non-zero = visible).
 * `config_json` is a JSON fitting configuration; null or `"{}"` selects
 * the defaults. Fewer views than the configured minimum are padded.
 *
 * # Safety
 * `template` must be a live handle; the arrays must hold the lengths above;
 * `config_json` must be null or NUL-terminated; `out` writable.
 */
enum MvhStatus mvh_fit(const struct MvhTemplate *template_,
                       size_t n_views,
                       const double *joints2d,
                       const uint8_t *visibility,
                       const char *config_json,
                       struct MvhFit **out);

/**
 * Releases a fit result. Null is ignored.
 *
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void mvh_fit_free(struct MvhFit *fit);

/**
 * Fitted pose (`pose_len` values) and shape (`shape_len` values).
 *
 * # Safety
 * `fit` must be a live handle; the output arrays must hold their lengths.
 */
enum MvhStatus mvh_fit_body(const struct MvhFit *fit,
                            double *pose,
                            size_t pose_len,
                            double *shape,
                            size_t shape_len);

/**
 * Number of fitted cameras (after padding).
 *
 * # Safety
 * `fit` must be a live handle; `out` writable.
 */
enum MvhStatus mvh_fit_view_count(const struct MvhFit *fit, size_t *out);

/**
 * Fitted camera of one view.
 *
 * # Safety
 * `fit` must be a live handle; `out` writable.
 */
enum MvhStatus mvh_fit_camera(const struct MvhFit *fit, size_t view, struct MvhCamera *out);

/**
 * Mean final per-view loss.
 *
 * # Safety
 * `fit` must be a live handle; `out` writable.
 */
enum MvhStatus mvh_fit_final_loss(const struct MvhFit *fit, double *out);

/**
 * Full fit report as NUL-terminated JSON. `required` receives the buffer
 * size needed including the terminator; a null `buf` with `cap` 0 only
 * queries the size.
 *
 * # Safety
 * `fit` must be a live handle; `buf` must hold `cap` bytes; `required`
 * must be writable.
 */
enum MvhStatus mvh_fit_to_json(const struct MvhFit *fit, char *buf, size_t cap, size_t *required);

/**
 * Scores predicted against ground-truth body parameters with the default
 * evaluation options (similarity alignment, PCK at 150 mm).
 *
 * # Safety
 * `template` must be a live handle; every array must hold its stated
 * length; `out` writable.
 */
enum MvhStatus mvh_evaluate(const struct MvhTemplate *template_,
                            const double *pred_pose,
                            const double *pred_shape,
                            const double *gt_pose,
                            const double *gt_shape,
                            size_t pose_len,
                            size_t shape_len,
                            bool with_hausdorff,
                            struct MvhMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVHUMAN_H */
