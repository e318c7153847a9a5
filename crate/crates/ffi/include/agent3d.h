#ifndef AGENT3D_H
#define AGENT3D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum A3dStatus {
  A3D_STATUS_OK = 0,
  A3D_STATUS_NULL_POINTER = 1,
  A3D_STATUS_INVALID_ARGUMENT = 2,
  A3D_STATUS_IO = 3,
  A3D_STATUS_PARSE = 4,
  A3D_STATUS_OUT_OF_RANGE = 5,
  A3D_STATUS_BUFFER_TOO_SMALL = 6,
  A3D_STATUS_INTERNAL = 7,
} A3dStatus;

typedef enum A3dOrientation {
  A3D_ORIENTATION_FRONT = 0,
  A3D_ORIENTATION_BACK = 1,
  A3D_ORIENTATION_LEFT = 2,
  A3D_ORIENTATION_RIGHT = 3,
} A3dOrientation;

typedef struct A3dCloud A3dCloud;

typedef struct A3dMesh A3dMesh;

typedef struct A3dView A3dView;

/**
 * Pinhole intrinsics in pixels.
 */
typedef struct A3dIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} A3dIntrinsics;

/**
 * Camera-to-world rotation in row-major order and camera center.
 */
typedef struct A3dPose {
  double rotation[9];
  double position[3];
} A3dPose;

typedef struct A3dGrid {
  uint32_t density;
  /**
   * xmin, ymin, xmax, ymax
   */
  double bounds_xy[4];
} A3dGrid;

typedef struct A3dProposal {
  int64_t i;
  int64_t j;
  enum A3dOrientation orientation;
} A3dProposal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *a3d_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *a3d_version(void);

enum A3dStatus a3d_mesh_load_ply(const char *path, struct A3dMesh **out_mesh);

/**
 * Builds a toy room from a JSON spec. `out_cloud` may be null when the
 * labeled ground truth is not wanted.
 */
enum A3dStatus a3d_toy_room_from_json(const char *spec_json,
                                      struct A3dMesh **out_mesh,
                                      struct A3dCloud **out_cloud);

void a3d_mesh_free(struct A3dMesh *mesh);

enum A3dStatus a3d_mesh_counts(const struct A3dMesh *mesh, size_t *out_vertices, size_t *out_faces);

enum A3dStatus a3d_mesh_bounds(const struct A3dMesh *mesh,
                               double (*out_min)[3],
                               double (*out_max)[3]);

size_t a3d_cloud_len(const struct A3dCloud *cloud);

/**
 * `3 * len` coordinates, x y z per point.
 */
const double *a3d_cloud_points(const struct A3dCloud *cloud);

const uint32_t *a3d_cloud_labels(const struct A3dCloud *cloud);

void a3d_cloud_free(struct A3dCloud *cloud);

/**
 * Writes (u, v, depth); `out_in_front` is 0 when the point is behind the camera.
 */
enum A3dStatus a3d_project(const struct A3dIntrinsics *k,
                           const struct A3dPose *pose,
                           const double (*point)[3],
                           double (*out_uvd)[3],
                           uint8_t *out_in_front);

enum A3dStatus a3d_unproject(const struct A3dIntrinsics *k,
                             const struct A3dPose *pose,
                             double u,
                             double v,
                             double depth,
                             double (*out_point)[3]);

enum A3dStatus a3d_render(const struct A3dMesh *mesh,
                          const struct A3dIntrinsics *k,
                          const struct A3dPose *pose,
                          struct A3dView **out_view);

enum A3dStatus a3d_view_size(const struct A3dView *view, uint32_t *out_width, uint32_t *out_height);

/**
 * Row-major RGB bytes, `3 * width * height` long.
 */
const uint8_t *a3d_view_color(const struct A3dView *view);

/**
 * Row-major camera depth, `width * height` floats; background is +inf.
 */
const float *a3d_view_depth(const struct A3dView *view);

void a3d_view_free(struct A3dView *view);

enum A3dStatus a3d_make_grid(const struct A3dMesh *mesh,
                             uint32_t density,
                             struct A3dGrid *out_grid);

enum A3dStatus a3d_grid_to_world(const struct A3dGrid *grid,
                                 int64_t i,
                                 int64_t j,
                                 double *out_x,
                                 double *out_y);

/**
 * Nearest lattice point, clamped into the grid.
 */
enum A3dStatus a3d_world_to_grid(const struct A3dGrid *grid,
                                 double x,
                                 double y,
                                 int64_t *out_i,
                                 int64_t *out_j);

enum A3dStatus a3d_pose_from_proposal(const struct A3dGrid *grid,
                                      const struct A3dProposal *proposal,
                                      double eye_height,
                                      double pitch_down_deg,
                                      double floor_z,
                                      struct A3dPose *out_pose);

/**
 * Parses `(i, j) orientation` proposals. `out_count` always receives the
 * number found; when it exceeds `capacity` nothing is written to `out` and
 * the status is `BufferTooSmall`.
 */
enum A3dStatus a3d_parse_proposals(const char *text,
                                   struct A3dProposal *out_buf,
                                   size_t capacity,
                                   size_t *out_count);

enum A3dStatus a3d_bleu(const char *candidate,
                        const char *const *refs,
                        size_t n_refs,
                        uint32_t max_n,
                        double *out_score);

enum A3dStatus a3d_rouge_l(const char *candidate,
                           const char *const *refs,
                           size_t n_refs,
                           double *out_score);

enum A3dStatus a3d_meteor_lite(const char *candidate,
                               const char *const *refs,
                               size_t n_refs,
                               double *out_score);

enum A3dStatus a3d_exact_match(const char *candidate,
                               const char *const *refs,
                               size_t n_refs,
                               double *out_score);

/**
 * CIDEr-D over `n_items` candidates. References are flattened: item k owns
 * the next `ref_counts[k]` entries of `refs`. Writes `n_items` scores.
 */
enum A3dStatus a3d_cider_d(const char *const *candidates,
                           size_t n_items,
                           const char *const *refs,
                           const size_t *ref_counts,
                           double *out_scores);

/**
 * Mean IoU over classes present in either labeling; labels equal to
 * `num_classes` mean unlabeled.
 */
enum A3dStatus a3d_miou(const uint32_t *pred,
                        const uint32_t *gt,
                        size_t len,
                        size_t num_classes,
                        double *out_miou);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGENT3D_H */
