#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "frustum_forge/seeker.hpp"

namespace frustum_forge {

struct ScoredCandidate {
  int index{-1};
  double density{0.0};
  double alignment{0.0};
  double composite{0.0};
  Box3D box;
};

struct DensityResult {
  std::vector<double> scores;   // count_i / max_j count_j; all zero when no
                                // candidate holds a point
  int max_count{0};
};

// Point-count criterion over the full cloud, normalized by the best
// candidate. max_count == 0 flags that every candidate is empty.
DensityResult density_scores(const PointCloud& cloud,
                             const std::vector<Box3D>& candidates);

// IoU between the candidate's projected hull and the detection box. A box
// fully behind the camera scores 0 (with a warning on stderr).
double alignment_score(const CameraModel& cam, const Box3D& box,
                       const Box2D& det_box);

// argmax of density_weight * c1 + alignment_weight * c2. Ties keep the
// lowest index; nullopt when the list is empty or the best falls below
// min_composite. Returns (index, composite).
std::optional<std::pair<int, double>> argmax_composite(
    const std::vector<double>& density, const std::vector<double>& alignment,
    double density_weight, double alignment_weight, double min_composite);

// Full selection for one candidate set. The winner takes the detection's
// class and its image-detector confidence as score. nullopt means rejected:
// empty set, all-empty candidates, or best composite below the floor.
std::optional<ScoredCandidate> select_best(const PointCloud& cloud,
                                           const CandidateSet& set,
                                           const CameraModel& cam,
                                           const OracleConfig& cfg);

// Criterion-weight override used by ablation sweeps; select_best is the
// (1, alpha_iou) instance.
std::optional<ScoredCandidate> select_best_weighted(
    const PointCloud& cloud, const CandidateSet& set, const CameraModel& cam,
    double density_weight, double alignment_weight, double min_composite);

struct RankResult {
  std::vector<Box3D> proposals;  // one winner per surviving set, input order
  int n_rejected{0};
};

RankResult rank_scene(const Scene& scene, const std::vector<CandidateSet>& sets,
                      const OracleConfig& cfg);

}  // namespace frustum_forge
