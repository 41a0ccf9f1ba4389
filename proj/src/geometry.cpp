#include "frustum_forge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace frustum_forge {

namespace {

constexpr double kMinDepth = 1e-6;

template <class S>
S polygon_area(const std::vector<V2<S>>& poly) {
  S twice = S(0);
  const int n = static_cast<int>(poly.size());
  for (int i = 0; i < n; ++i) {
    const V2<S>& a = poly[i];
    const V2<S>& b = poly[(i + 1) % n];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return std::abs(twice) / S(2);
}

template <class S>
S cross2(const V2<S>& o, const V2<S>& a, const V2<S>& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Clips `poly` to the left side of the directed line a -> b. Points exactly
// on the line are kept, so clipping a polygon by itself reproduces it with
// no interpolated vertices.
template <class S>
std::vector<V2<S>> clip_half_plane(const std::vector<V2<S>>& poly,
                                   const V2<S>& a, const V2<S>& b) {
  std::vector<V2<S>> out;
  const int n = static_cast<int>(poly.size());
  out.reserve(n + 1);
  for (int i = 0; i < n; ++i) {
    const V2<S>& cur = poly[i];
    const V2<S>& nxt = poly[(i + 1) % n];
    const S dc = cross2(a, b, cur);
    const S dn = cross2(a, b, nxt);
    if (dc >= S(0)) out.push_back(cur);
    if ((dc > S(0) && dn < S(0)) || (dc < S(0) && dn > S(0))) {
      const S t = dc / (dc - dn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

template <class S>
S convex_intersection_area(const std::array<V2<S>, 4>& pa,
                           const std::array<V2<S>, 4>& pb) {
  std::vector<V2<S>> poly(pa.begin(), pa.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_half_plane(poly, pb[i], pb[(i + 1) % 4]);
  }
  if (poly.size() < 3) return S(0);
  return polygon_area(poly);
}

double bev_area(const Box3D& b) { return b.w * b.l; }

// Deterministic ordering key so iou_bev(a, b) == iou_bev(b, a) bit for bit.
bool bev_less(const Box3D& a, const Box3D& b) {
  if (a.center.x() != b.center.x()) return a.center.x() < b.center.x();
  if (a.center.y() != b.center.y()) return a.center.y() < b.center.y();
  if (a.w != b.w) return a.w < b.w;
  if (a.l != b.l) return a.l < b.l;
  return a.yaw < b.yaw;
}

}  // namespace

Vec3 to_local(const Vec3& p, const Box3D& box) {
  const double c = std::cos(-box.yaw);
  const double s = std::sin(-box.yaw);
  const Vec3 d = p - box.center;
  return Vec3(c * d.x() - s * d.y(), s * d.x() + c * d.y(), d.z());
}

bool in_box(const Vec3& p, const Box3D& box) {
  const Vec3 q = to_local(p, box);
  return std::abs(q.x()) <= box.l / 2.0 && std::abs(q.y()) <= box.w / 2.0 &&
         std::abs(q.z()) <= box.h / 2.0;
}

int count_in_box(const PointCloud& cloud, const Box3D& box) {
  int n = 0;
  for (const Vec3& p : cloud.points) {
    if (in_box(p, box)) ++n;
  }
  return n;
}

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = box.l / 2.0;
  const double hw = box.w / 2.0;
  // Counter-clockwise in the x-right / y-up BEV plane.
  const std::array<Vec2, 4> local = {Vec2(hl, hw), Vec2(-hl, hw),
                                     Vec2(-hl, -hw), Vec2(hl, -hw)};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = Vec2(c * local[i].x() - s * local[i].y() + box.center.x(),
                  s * local[i].x() + c * local[i].y() + box.center.y());
  }
  return out;
}

std::optional<ImagePoint> project_point(const CameraModel& cam, const Vec3& p) {
  const Vec3 pc = cam.extrinsic * p;
  if (pc.z() <= kMinDepth) return std::nullopt;
  const Vec3 uvw = cam.intrinsics * pc;
  return ImagePoint{uvw.x() / pc.z(), uvw.y() / pc.z(), pc.z()};
}

std::optional<Box2D> project_box_raw(const CameraModel& cam, const Box3D& box) {
  const auto bev = bev_corners(box);
  Box2D out{std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max(),
            std::numeric_limits<double>::lowest(),
            std::numeric_limits<double>::lowest()};
  int in_front = 0;
  for (int i = 0; i < 4; ++i) {
    for (double dz : {-box.h / 2.0, box.h / 2.0}) {
      const Vec3 corner(bev[i].x(), bev[i].y(), box.center.z() + dz);
      const auto ip = project_point(cam, corner);
      if (!ip) continue;
      ++in_front;
      out.u_min = std::min(out.u_min, ip->u);
      out.v_min = std::min(out.v_min, ip->v);
      out.u_max = std::max(out.u_max, ip->u);
      out.v_max = std::max(out.v_max, ip->v);
    }
  }
  if (in_front == 0) return std::nullopt;
  return out;
}

std::optional<Box2D> project_box(const CameraModel& cam, const Box3D& box) {
  auto raw = project_box_raw(cam, box);
  if (!raw) return std::nullopt;
  const double w = static_cast<double>(cam.image_w);
  const double h = static_cast<double>(cam.image_h);
  Box2D out;
  out.u_min = std::clamp(raw->u_min, 0.0, w);
  out.u_max = std::clamp(raw->u_max, 0.0, w);
  out.v_min = std::clamp(raw->v_min, 0.0, h);
  out.v_max = std::clamp(raw->v_max, 0.0, h);
  return out;
}

double area(const Box2D& b) {
  return std::max(0.0, b.u_max - b.u_min) * std::max(0.0, b.v_max - b.v_min);
}

double iou_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
  const double ih = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
  const double inter = std::max(0.0, iw) * std::max(0.0, ih);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const Box3D& lo = bev_less(a, b) ? a : b;
  const Box3D& hi = bev_less(a, b) ? b : a;
  const double inter =
      convex_intersection_area<double>(bev_corners(lo), bev_corners(hi));
  const double uni = bev_area(lo) + bev_area(hi) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Box3D> nms(const std::vector<Box3D>& boxes, double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return boxes[i].score > boxes[j].score;
  });
  std::vector<Box3D> kept;
  for (int idx : order) {
    bool suppressed = false;
    for (const Box3D& k : kept) {
      if (iou_bev(boxes[idx], k) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(boxes[idx]);
  }
  return kept;
}

}  // namespace frustum_forge
