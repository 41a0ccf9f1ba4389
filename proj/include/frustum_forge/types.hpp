#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace frustum_forge {

// Dense aliases, templated on scalar with double-precision defaults.
template <class S> using V2 = Eigen::Matrix<S, 2, 1>;
template <class S> using V3 = Eigen::Matrix<S, 3, 1>;
template <class S> using M3 = Eigen::Matrix<S, 3, 3>;
template <class S> using M4 = Eigen::Matrix<S, 4, 4>;
template <class S> using MX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using VX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Vec2 = V2<double>;
using Vec3 = V3<double>;
using Mat3 = M3<double>;
using Mat4 = M4<double>;
using MatX = MX<double>;
using VecX = VX<double>;
using Iso3 = Eigen::Transform<double, 3, Eigen::Isometry>;

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to [-pi, pi). Exactly pi maps to -pi.
inline double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  return r - kPi;
}

// Smallest absolute difference between two headings, treating a heading and
// its opposite as equal. Result lies in [0, pi/2].
inline double yaw_distance_mod_pi(double a, double b) {
  double d = std::fmod(std::abs(a - b), kPi);
  return std::min(d, kPi - d);
}

}  // namespace frustum_forge
