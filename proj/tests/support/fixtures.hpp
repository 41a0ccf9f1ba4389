#pragma once

// Shared scene-building helpers for tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "frustum_forge/io.hpp"
#include "frustum_forge/types.hpp"

namespace fixtures {

namespace ff = frustum_forge;

// Camera at `pos` looking along +x of the lidar frame: +u to the right
// (-y), +v down (-z). Identity-free construction mirroring a typical
// forward rig.
ff::CameraModel forward_camera(const std::string& id, double focal,
                               int image_w, int image_h,
                               const ff::Vec3& pos = ff::Vec3::Zero());

// Camera whose frame IS the lidar frame (+z optical axis), for hand
// projection arithmetic.
ff::CameraModel identity_camera(const std::string& id, double focal,
                                double cu, double cv, int image_w,
                                int image_h);

// Uniform random points inside the box (its exact footprint, inclusive z
// slab), appended to the cloud.
void fill_box(ff::PointCloud& cloud, const ff::Box3D& box, int n,
              std::mt19937_64& rng);

// A box resting on z = 0 with its vertical extent matching h.
ff::Box3D grounded_box(double x, double y, double w, double l, double h,
                       double yaw, int class_id, double score = 0.0);

}  // namespace fixtures
