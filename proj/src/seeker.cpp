#include "frustum_forge/seeker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

using nlohmann::json;

namespace {

bool inside_box2d(const Box2D& b, double u, double v) {
  return u >= b.u_min && u <= b.u_max && v >= b.v_min && v <= b.v_max;
}

struct ProjectedCloud {
  std::vector<ImagePoint> pts;
  std::vector<char> valid;
};

ProjectedCloud project_all(const CameraModel& cam, const PointCloud& cloud) {
  ProjectedCloud out;
  out.pts.resize(cloud.points.size());
  out.valid.resize(cloud.points.size(), 0);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (auto ip = project_point(cam, cloud.points[i])) {
      out.pts[i] = *ip;
      out.valid[i] = 1;
    }
  }
  return out;
}

std::optional<Frustum> build_from_projections(const ProjectedCloud& proj,
                                              const Detection2D& det,
                                              const SearchSpec& spec) {
  Frustum f;
  f.camera_id = det.camera_id;
  f.detection = det;
  std::vector<double> depths;
  for (std::size_t i = 0; i < proj.pts.size(); ++i) {
    if (!proj.valid[i]) continue;
    if (inside_box2d(det.box, proj.pts[i].u, proj.pts[i].v)) {
      f.member_indices.push_back(static_cast<int>(i));
      depths.push_back(proj.pts[i].depth);
    }
  }
  if (static_cast<int>(f.member_indices.size()) < spec.min_frustum_points) {
    return std::nullopt;
  }
  std::sort(depths.begin(), depths.end());
  f.d_min = quantile_sorted(depths, spec.q_lo);
  f.d_max = quantile_sorted(depths, spec.q_hi);
  return f;
}

// Lidar-frame point on the pixel ray at the given camera depth.
Vec3 backproject(const CameraModel& cam, const Iso3& cam_to_lidar, double u,
                 double v, double depth) {
  const Mat3& K = cam.intrinsics;
  const double yc = (v - K(1, 2)) / K(1, 1);
  const double xc = (u - K(0, 2) - K(0, 1) * yc) / K(0, 0);
  return cam_to_lidar * Vec3(xc * depth, yc * depth, depth);
}

}  // namespace

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const int n = static_cast<int>(sorted.size());
  if (n == 0) throw FormatError("quantile of an empty sequence");
  if (n == 1) return sorted[0];
  const double pos = q * static_cast<double>(n - 1);
  const int lo = std::clamp(static_cast<int>(std::floor(pos)), 0, n - 2);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::optional<Frustum> build_frustum(const Scene& scene, const Detection2D& det,
                                     const SearchSpec& spec) {
  const CameraModel* cam = scene.find_camera(det.camera_id);
  if (cam == nullptr) {
    throw ReferenceError("unknown camera_id '" + det.camera_id + "'");
  }
  return build_from_projections(project_all(*cam, scene.cloud), det, spec);
}

std::vector<Box3D> enumerate_candidates(const Frustum& frustum,
                                        const CameraModel& cam,
                                        const Vec3& anchor_size,
                                        const SearchSpec& spec,
                                        const PointCloud& cloud) {
  const Box2D& det_box = frustum.detection.box;
  const double u0 = (det_box.u_min + det_box.u_max) / 2.0;
  const double v0 = (det_box.v_min + det_box.v_max) / 2.0;
  const Iso3 cam_to_lidar = cam.extrinsic.inverse();

  std::vector<double> member_z;
  member_z.reserve(frustum.member_indices.size());
  for (int idx : frustum.member_indices) {
    member_z.push_back(cloud.points[idx].z());
  }
  double z_med = 0.0;
  const bool have_median = member_z.size() >= 3;
  if (have_median) {
    std::sort(member_z.begin(), member_z.end());
    const std::size_t m = member_z.size() / 2;
    z_med = member_z.size() % 2 == 1 ? member_z[m]
                                     : (member_z[m - 1] + member_z[m]) / 2.0;
  }

  const double d_step = (frustum.d_max - frustum.d_min) / spec.k_d;
  const double yaw_step = kPi / spec.k_o;
  const double s_step = (spec.scale_hi - spec.scale_lo) / spec.k_s;

  std::vector<Box3D> out;
  out.reserve(static_cast<std::size_t>(spec.k_d) * spec.k_o * spec.k_s);
  for (int di = 0; di < spec.k_d; ++di) {
    const double depth = frustum.d_min + (di + 0.5) * d_step;
    const Vec3 on_ray = backproject(cam, cam_to_lidar, u0, v0, depth);
    const double z = have_median ? z_med : on_ray.z();
    for (int yi = 0; yi < spec.k_o; ++yi) {
      const double yaw = wrap_angle((yi + 0.5) * yaw_step);
      for (int si = 0; si < spec.k_s; ++si) {
        const double s = spec.scale_lo + (si + 0.5) * s_step;
        Box3D b;
        b.center = Vec3(on_ray.x(), on_ray.y(), z);
        b.w = anchor_size.x() * s;
        b.l = anchor_size.y() * s;
        b.h = anchor_size.z() * s;
        b.yaw = yaw;
        b.class_id = frustum.detection.class_id;
        b.score = 0.0;
        out.push_back(b);
      }
    }
  }
  return out;
}

SeekResult seek_scene(const Scene& scene, const std::vector<Detection2D>& dets,
                      const AnchorTable& anchors, const SearchSpec& spec) {
  std::map<std::string, ProjectedCloud> projected;
  SeekResult result;
  for (const Detection2D& det : dets) {
    const auto anchor = anchors.sizes.find(det.class_id);
    if (anchor == anchors.sizes.end()) {
      throw MissingAnchor("no anchor for class " + std::to_string(det.class_id));
    }
    const CameraModel* cam = scene.find_camera(det.camera_id);
    if (cam == nullptr) {
      throw ReferenceError("unknown camera_id '" + det.camera_id + "'");
    }
    auto it = projected.find(det.camera_id);
    if (it == projected.end()) {
      it = projected.emplace(det.camera_id, project_all(*cam, scene.cloud)).first;
    }
    auto frustum = build_from_projections(it->second, det, spec);
    if (!frustum) {
      ++result.n_empty_frustums;
      continue;
    }
    CandidateSet set;
    set.candidates =
        enumerate_candidates(*frustum, *cam, anchor->second, spec, scene.cloud);
    set.frustum = std::move(*frustum);
    result.sets.push_back(std::move(set));
  }
  return result;
}

void save_candidates(const std::filesystem::path& path,
                     const std::vector<CandidateSet>& sets) {
  json j = json::array();
  for (const auto& set : sets) {
    json sj;
    sj["camera_id"] = set.frustum.camera_id;
    sj["class_id"] = set.frustum.detection.class_id;
    sj["score"] = set.frustum.detection.score;
    const Box2D& b = set.frustum.detection.box;
    sj["det_box"] = {b.u_min, b.v_min, b.u_max, b.v_max};
    sj["d_min"] = set.frustum.d_min;
    sj["d_max"] = set.frustum.d_max;
    sj["member_count"] = static_cast<int>(set.frustum.member_indices.size());
    json cands = json::array();
    for (const auto& c : set.candidates) {
      json cj;
      cj["center"] = {c.center.x(), c.center.y(), c.center.z()};
      cj["size"] = {c.w, c.l, c.h};
      cj["yaw"] = c.yaw;
      cands.push_back(std::move(cj));
    }
    sj["candidates"] = std::move(cands);
    j.push_back(std::move(sj));
  }
  atomic_write_text(path, j.dump(2) + "\n");
}

std::vector<CandidateSet> load_candidates(const std::filesystem::path& path,
                                          const Scene& scene) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const std::string ctx = path.string();
  if (!j.is_array()) throw FormatError(ctx + ": expected a JSON array");

  std::vector<CandidateSet> out;
  for (const auto& sj : j) {
    CandidateSet set;
    auto get = [&](const char* key) -> const json& {
      auto it = sj.find(key);
      if (it == sj.end()) throw FormatError(ctx + ": missing field '" + std::string(key) + "'");
      return *it;
    };
    set.frustum.camera_id = get("camera_id").get<std::string>();
    if (scene.find_camera(set.frustum.camera_id) == nullptr) {
      throw ReferenceError(ctx + ": unknown camera_id '" + set.frustum.camera_id + "'");
    }
    set.frustum.detection.camera_id = set.frustum.camera_id;
    set.frustum.detection.class_id = get("class_id").get<int>();
    set.frustum.detection.score = get("score").get<double>();
    const auto& db = get("det_box");
    if (!db.is_array() || db.size() != 4) {
      throw FormatError(ctx + ": det_box must hold 4 numbers");
    }
    set.frustum.detection.box =
        Box2D{db[0].get<double>(), db[1].get<double>(), db[2].get<double>(),
              db[3].get<double>()};
    set.frustum.d_min = get("d_min").get<double>();
    set.frustum.d_max = get("d_max").get<double>();
    if (!(set.frustum.d_min <= set.frustum.d_max)) {
      throw FormatError(ctx + ": d_min must be <= d_max");
    }
    for (const auto& cj : get("candidates")) {
      Box3D c;
      const auto& ctr = cj.at("center");
      const auto& size = cj.at("size");
      if (!ctr.is_array() || ctr.size() != 3 || !size.is_array() || size.size() != 3) {
        throw FormatError(ctx + ": candidate center/size must hold 3 numbers");
      }
      c.center = Vec3(ctr[0].get<double>(), ctr[1].get<double>(), ctr[2].get<double>());
      c.w = size[0].get<double>();
      c.l = size[1].get<double>();
      c.h = size[2].get<double>();
      c.yaw = cj.at("yaw").get<double>();
      if (!(c.w > 0.0) || !(c.l > 0.0) || !(c.h > 0.0)) {
        throw FormatError(ctx + ": candidate sizes must be positive");
      }
      c.class_id = set.frustum.detection.class_id;
      set.candidates.push_back(c);
    }
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace frustum_forge
