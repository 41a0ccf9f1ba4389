#pragma once

#include <vector>

#include "frustum_forge/config.hpp"
#include "frustum_forge/geometry.hpp"
#include "frustum_forge/types.hpp"

namespace frustum_forge {

struct FusionInput {
  int label_3d{-1};
  int label_vlm{-1};
  double p_vlm{0.0};
  double gamma_fuse{0.2};
};

// Keeps the geometry detector's label unless the image model is confident:
// the 3D label when p_vlm <= gamma_fuse, the image label otherwise.
int logit_fuse(const FusionInput& input);

// Classic density clustering over the rows of `features`. A point is core
// when at least cfg.min_pts points (itself included) lie within cfg.eps
// (inclusive, Euclidean). Returns one id per row, -1 for noise; cluster ids
// are assigned in scan order, so output is deterministic.
std::vector<int> dbscan(const MatX& features, const ClusterConfig& cfg);

// Minimum-area rotated rectangle of the BEV hull (rotating calipers) plus the
// z extent. Throws DegenerateCluster for fewer than 3 points or a collinear
// BEV footprint. The returned box carries class_id and score 0.
Box3D fit_box_from_cluster(const std::vector<Vec3>& points, int class_id);

// Top-down proposals: cluster (x, y, z, label_weight * label) features, take
// each cluster's majority label, and fit a box. Clusters whose majority label
// is negative (unlabeled) or whose footprint is degenerate are skipped. Each
// box is scored with its cluster's label purity.
std::vector<Box3D> cluster_proposals(const PointCloud& cloud,
                                     const std::vector<int>& per_point_labels,
                                     const ClusterConfig& cfg);

}  // namespace frustum_forge
