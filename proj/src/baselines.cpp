#include "frustum_forge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

int logit_fuse(const FusionInput& input) {
  if (input.p_vlm < 0.0 || input.p_vlm > 1.0)
    throw FormatError("logit_fuse: p_vlm outside [0, 1]");
  if (input.gamma_fuse < 0.0 || input.gamma_fuse > 1.0)
    throw FormatError("logit_fuse: gamma outside [0, 1]");
  return input.p_vlm <= input.gamma_fuse ? input.label_3d : input.label_vlm;
}

std::vector<int> dbscan(const MatX& features,
                        const ClusterConfig& cfg) {
  if (cfg.eps <= 0.0) throw FormatError("dbscan: eps must be > 0");
  if (cfg.min_pts < 1) throw FormatError("dbscan: min_pts must be >= 1");
  const int n = static_cast<int>(features.rows());
  const double eps2 = cfg.eps * cfg.eps;

  // -2 unvisited, -1 noise, >= 0 cluster id.
  std::vector<int> labels(n, -2);
  auto region = [&](int i, std::vector<int>& out) {
    out.clear();
    for (int j = 0; j < n; ++j)
      if ((features.row(i) - features.row(j)).squaredNorm() <= eps2)
        out.push_back(j);
  };

  int next_id = 0;
  std::vector<int> seeds, nb;
  for (int i = 0; i < n; ++i) {
    if (labels[i] != -2) continue;
    region(i, nb);
    if (static_cast<int>(nb.size()) < cfg.min_pts) {
      labels[i] = -1;
      continue;
    }
    const int cid = next_id++;
    labels[i] = cid;
    seeds.assign(nb.begin(), nb.end());
    // Standard expansion: core points extend the frontier, border points
    // join the first cluster that reaches them.
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const int j = seeds[k];
      if (labels[j] == -1) labels[j] = cid;
      if (labels[j] != -2) continue;
      labels[j] = cid;
      region(j, nb);
      if (static_cast<int>(nb.size()) >= cfg.min_pts)
        seeds.insert(seeds.end(), nb.begin(), nb.end());
    }
  }
  return labels;
}

namespace {

double cross2d(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) -
         (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; collinear points are dropped so the result is
// strictly convex.
std::vector<Vec2> convex_hull_bev(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2& a, const Vec2& b) {
                          return a.x() == b.x() && a.y() == b.y();
                        }),
            pts.end());
  const int n = static_cast<int>(pts.size());
  if (n < 3) return {};
  std::vector<Vec2> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross2d(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (int i = n - 2, lower = k + 1; i >= 0; --i) {
    while (k >= lower && cross2d(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

Box3D fit_box_from_cluster(const std::vector<Vec3>& points, int class_id) {
  if (points.size() < 3)
    throw DegenerateCluster("box fit needs at least 3 points");
  std::vector<Vec2> bev;
  bev.reserve(points.size());
  for (const Vec3& p : points) bev.emplace_back(p.x(), p.y());
  std::vector<Vec2> hull = convex_hull_bev(std::move(bev));
  if (hull.size() < 3)
    throw DegenerateCluster("BEV footprint is collinear");

  // The minimum-area enclosing rectangle has a side collinear with a hull
  // edge, so scanning edges finds the global optimum. First minimal edge
  // wins, which keeps the result deterministic.
  double best_area = std::numeric_limits<double>::infinity();
  Vec2 best_u(1.0, 0.0);
  double bs_lo = 0, bs_hi = 0, bt_lo = 0, bt_hi = 0;
  const int h = static_cast<int>(hull.size());
  for (int e = 0; e < h; ++e) {
    Vec2 d = hull[(e + 1) % h] - hull[e];
    double len = d.norm();
    if (len <= 0.0) continue;
    Vec2 u = d / len;
    Vec2 nrm(-u.y(), u.x());
    double s_lo = std::numeric_limits<double>::infinity(), s_hi = -s_lo;
    double t_lo = s_lo, t_hi = -s_lo;
    for (const Vec2& p : hull) {
      double s = p.dot(u), t = p.dot(nrm);
      s_lo = std::min(s_lo, s);
      s_hi = std::max(s_hi, s);
      t_lo = std::min(t_lo, t);
      t_hi = std::max(t_hi, t);
    }
    double area = (s_hi - s_lo) * (t_hi - t_lo);
    if (area < best_area) {
      best_area = area;
      best_u = u;
      bs_lo = s_lo;
      bs_hi = s_hi;
      bt_lo = t_lo;
      bt_hi = t_hi;
    }
  }

  double z_lo = std::numeric_limits<double>::infinity(), z_hi = -z_lo;
  for (const Vec3& p : points) {
    z_lo = std::min(z_lo, p.z());
    z_hi = std::max(z_hi, p.z());
  }

  Vec2 nrm(-best_u.y(), best_u.x());
  Vec2 c2 = best_u * ((bs_lo + bs_hi) / 2.0) + nrm * ((bt_lo + bt_hi) / 2.0);
  Box3D box;
  box.center = Vec3(c2.x(), c2.y(), (z_lo + z_hi) / 2.0);
  box.l = bs_hi - bs_lo;  // extent along the heading axis
  box.w = bt_hi - bt_lo;
  box.h = z_hi - z_lo;
  box.yaw = wrap_angle(std::atan2(best_u.y(), best_u.x()));
  box.class_id = class_id;
  box.score = 0.0;
  return box;
}

std::vector<Box3D> cluster_proposals(const PointCloud& cloud,
                                     const std::vector<int>& per_point_labels,
                                     const ClusterConfig& cfg) {
  if (per_point_labels.size() != cloud.points.size())
    throw FormatError("cluster_proposals: label/point count mismatch");
  const int n = cloud.size();
  if (n == 0) return {};

  MatX features(n, 4);
  for (int i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[i];
    features(i, 0) = p.x();
    features(i, 1) = p.y();
    features(i, 2) = p.z();
    features(i, 3) = cfg.label_weight * per_point_labels[i];
  }
  std::vector<int> cids = dbscan(features, cfg);

  int n_clusters = 0;
  for (int c : cids) n_clusters = std::max(n_clusters, c + 1);
  std::vector<std::vector<int>> members(n_clusters);
  for (int i = 0; i < n; ++i)
    if (cids[i] >= 0) members[cids[i]].push_back(i);

  std::vector<Box3D> out;
  for (const std::vector<int>& idx : members) {
    if (idx.empty()) continue;
    // Majority vote; the ascending map order breaks ties toward the
    // smaller label id.
    std::map<int, int> counts;
    for (int i : idx) ++counts[per_point_labels[i]];
    int majority = -1, best = 0;
    for (const auto& [label, cnt] : counts)
      if (cnt > best) {
        best = cnt;
        majority = label;
      }
    if (majority < 0) continue;  // unlabeled blob, nothing to propose

    std::vector<Vec3> pts;
    pts.reserve(idx.size());
    for (int i : idx) pts.push_back(cloud.points[i]);
    try {
      Box3D box = fit_box_from_cluster(pts, majority);
      box.score = static_cast<double>(best) / static_cast<double>(idx.size());
      out.push_back(box);
    } catch (const DegenerateCluster&) {
      continue;  // too thin to box, drop it
    }
  }
  return out;
}

}  // namespace frustum_forge
