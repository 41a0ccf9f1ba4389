#include "frustum_forge/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

namespace {

// Conservative BEV prefilter: a point outside every candidate's
// circumcircle cannot be inside any candidate, so counting only the points
// inside the union circle reproduces the brute-force counts exactly.
std::vector<int> points_near_candidates(const PointCloud& cloud,
                                        const std::vector<Box3D>& candidates) {
  const Vec2 ref(candidates[0].center.x(), candidates[0].center.y());
  double radius = 0.0;
  for (const Box3D& c : candidates) {
    const double r = std::hypot(c.l, c.w) / 2.0;
    const double d = (Vec2(c.center.x(), c.center.y()) - ref).norm();
    radius = std::max(radius, d + r);
  }
  const double r2 = radius * radius;
  std::vector<int> out;
  for (int i = 0; i < cloud.size(); ++i) {
    const Vec2 p(cloud.points[i].x(), cloud.points[i].y());
    if ((p - ref).squaredNorm() <= r2) out.push_back(i);
  }
  return out;
}

}  // namespace

DensityResult density_scores(const PointCloud& cloud,
                             const std::vector<Box3D>& candidates) {
  DensityResult result;
  result.scores.assign(candidates.size(), 0.0);
  if (candidates.empty()) return result;

  const std::vector<int> nearby = points_near_candidates(cloud, candidates);
  std::vector<int> counts(candidates.size(), 0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (int idx : nearby) {
      if (in_box(cloud.points[idx], candidates[c])) ++counts[c];
    }
  }
  result.max_count = *std::max_element(counts.begin(), counts.end());
  if (result.max_count == 0) return result;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    result.scores[c] =
        static_cast<double>(counts[c]) / static_cast<double>(result.max_count);
  }
  return result;
}

double alignment_score(const CameraModel& cam, const Box3D& box,
                       const Box2D& det_box) {
  const auto projected = project_box(cam, box);
  if (!projected) {
    std::cerr << "[warn] candidate box fully behind camera '" << cam.camera_id
              << "'; alignment score 0\n";
    return 0.0;
  }
  return iou_2d(*projected, det_box);
}

std::optional<std::pair<int, double>> argmax_composite(
    const std::vector<double>& density, const std::vector<double>& alignment,
    double density_weight, double alignment_weight, double min_composite) {
  if (density.empty() || density.size() != alignment.size()) return std::nullopt;
  int best = 0;
  double best_score = density_weight * density[0] + alignment_weight * alignment[0];
  for (std::size_t i = 1; i < density.size(); ++i) {
    const double s = density_weight * density[i] + alignment_weight * alignment[i];
    if (s > best_score) {
      best = static_cast<int>(i);
      best_score = s;
    }
  }
  if (best_score < min_composite) return std::nullopt;
  return std::make_pair(best, best_score);
}

std::optional<ScoredCandidate> select_best_weighted(
    const PointCloud& cloud, const CandidateSet& set, const CameraModel& cam,
    double density_weight, double alignment_weight, double min_composite) {
  if (set.candidates.empty()) return std::nullopt;
  const DensityResult density = density_scores(cloud, set.candidates);
  if (density.max_count == 0) return std::nullopt;

  std::vector<double> alignment(set.candidates.size(), 0.0);
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    alignment[i] = alignment_score(cam, set.candidates[i], set.frustum.detection.box);
  }

  const auto best = argmax_composite(density.scores, alignment, density_weight,
                                     alignment_weight, min_composite);
  if (!best) return std::nullopt;

  ScoredCandidate winner;
  winner.index = best->first;
  winner.density = density.scores[best->first];
  winner.alignment = alignment[best->first];
  winner.composite = best->second;
  winner.box = set.candidates[best->first];
  winner.box.class_id = set.frustum.detection.class_id;
  winner.box.score = set.frustum.detection.score;
  return winner;
}

std::optional<ScoredCandidate> select_best(const PointCloud& cloud,
                                           const CandidateSet& set,
                                           const CameraModel& cam,
                                           const OracleConfig& cfg) {
  return select_best_weighted(cloud, set, cam, 1.0, cfg.alpha_iou,
                              cfg.min_composite);
}

RankResult rank_scene(const Scene& scene, const std::vector<CandidateSet>& sets,
                      const OracleConfig& cfg) {
  RankResult result;
  for (const CandidateSet& set : sets) {
    const CameraModel* cam = scene.find_camera(set.frustum.camera_id);
    if (cam == nullptr) {
      throw ReferenceError("unknown camera_id '" + set.frustum.camera_id + "'");
    }
    const auto winner = select_best(scene.cloud, set, *cam, cfg);
    if (winner) {
      result.proposals.push_back(winner->box);
    } else {
      ++result.n_rejected;
    }
  }
  return result;
}

}  // namespace frustum_forge
