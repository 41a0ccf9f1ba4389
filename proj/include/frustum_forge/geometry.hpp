#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "frustum_forge/types.hpp"

namespace frustum_forge {

// Oriented 3D box in the lidar frame. `l` is the extent along the heading
// (+x of the box frame), `w` the lateral extent, `h` the vertical one.
// yaw is the heading angle about +z, in [-pi, pi).
struct Box3D {
  Vec3 center{Vec3::Zero()};
  double w{0.0};
  double l{0.0};
  double h{0.0};
  double yaw{0.0};
  int class_id{-1};
  double score{0.0};
};

// Axis-aligned image rectangle, pixel coordinates.
struct Box2D {
  double u_min{0.0};
  double v_min{0.0};
  double u_max{0.0};
  double v_max{0.0};
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<float> intensity;  // empty, or one value per point

  int size() const { return static_cast<int>(points.size()); }
};

// Pinhole camera. `intrinsics` is upper triangular; `extrinsic` maps
// lidar-frame points into the camera frame (+z optical axis).
struct CameraModel {
  std::string camera_id;
  Mat3 intrinsics{Mat3::Identity()};
  Iso3 extrinsic{Iso3::Identity()};
  int image_w{0};
  int image_h{0};
};

struct ImagePoint {
  double u{0.0};
  double v{0.0};
  double depth{0.0};  // camera-frame z
};

// Rotates and translates p into the box frame: R(-yaw) * (p - center).
Vec3 to_local(const Vec3& p, const Box3D& box);

// Membership is inclusive: points exactly on a face count as inside.
bool in_box(const Vec3& p, const Box3D& box);

int count_in_box(const PointCloud& cloud, const Box3D& box);

// BEV footprint corners, counter-clockwise.
std::array<Vec2, 4> bev_corners(const Box3D& box);

// nullopt when the point sits at or behind the image plane (depth <= 1e-6).
std::optional<ImagePoint> project_point(const CameraModel& cam, const Vec3& p);

// Axis-aligned hull of the box corners that project in front of the camera,
// before clamping. nullopt when all eight corners are behind.
std::optional<Box2D> project_box_raw(const CameraModel& cam, const Box3D& box);

// Same hull, clamped to the image bounds. A box entirely outside the image
// collapses to a zero-area rectangle on the border.
std::optional<Box2D> project_box(const CameraModel& cam, const Box3D& box);

double area(const Box2D& b);

// Intersection-over-union of image rectangles; 0 when the union is empty.
double iou_2d(const Box2D& a, const Box2D& b);

// Intersection-over-union of BEV footprints (rotated rectangles).
// Exactly symmetric in its arguments.
double iou_bev(const Box3D& a, const Box3D& b);

// Greedy score-descending suppression. A box survives iff its BEV IoU with
// every higher-ranked survivor is <= iou_threshold. Equal scores keep input
// order.
std::vector<Box3D> nms(const std::vector<Box3D>& boxes, double iou_threshold);

}  // namespace frustum_forge
