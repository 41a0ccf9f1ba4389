#include "support/fixtures.hpp"

#include <cmath>

namespace fixtures {

ff::CameraModel forward_camera(const std::string& id, double focal,
                               int image_w, int image_h, const ff::Vec3& pos) {
  ff::CameraModel cam;
  cam.camera_id = id;
  cam.image_w = image_w;
  cam.image_h = image_h;
  cam.intrinsics = ff::Mat3::Identity();
  cam.intrinsics(0, 0) = focal;
  cam.intrinsics(1, 1) = focal;
  cam.intrinsics(0, 2) = image_w / 2.0;
  cam.intrinsics(1, 2) = image_h / 2.0;
  ff::Mat3 rot;
  rot.row(0) = ff::Vec3(0.0, -1.0, 0.0);  // camera right
  rot.row(1) = ff::Vec3(0.0, 0.0, -1.0);  // camera down
  rot.row(2) = ff::Vec3(1.0, 0.0, 0.0);   // optical axis
  cam.extrinsic = ff::Iso3::Identity();
  cam.extrinsic.linear() = rot;
  cam.extrinsic.translation() = -(rot * pos);
  return cam;
}

ff::CameraModel identity_camera(const std::string& id, double focal, double cu,
                                double cv, int image_w, int image_h) {
  ff::CameraModel cam;
  cam.camera_id = id;
  cam.image_w = image_w;
  cam.image_h = image_h;
  cam.intrinsics = ff::Mat3::Identity();
  cam.intrinsics(0, 0) = focal;
  cam.intrinsics(1, 1) = focal;
  cam.intrinsics(0, 2) = cu;
  cam.intrinsics(1, 2) = cv;
  cam.extrinsic = ff::Iso3::Identity();
  return cam;
}

void fill_box(ff::PointCloud& cloud, const ff::Box3D& box, int n,
              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  for (int i = 0; i < n; ++i) {
    const double lx = unit(rng) * box.l;
    const double ly = unit(rng) * box.w;
    const double lz = unit(rng) * box.h;
    cloud.points.emplace_back(c * lx - s * ly + box.center.x(),
                              s * lx + c * ly + box.center.y(),
                              lz + box.center.z());
  }
}

ff::Box3D grounded_box(double x, double y, double w, double l, double h,
                       double yaw, int class_id, double score) {
  ff::Box3D b;
  b.center = ff::Vec3(x, y, h / 2.0);
  b.w = w;
  b.l = l;
  b.h = h;
  b.yaw = yaw;
  b.class_id = class_id;
  b.score = score;
  return b;
}

}  // namespace fixtures
