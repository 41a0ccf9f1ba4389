#pragma once

#include <optional>
#include <vector>

#include "frustum_forge/config.hpp"
#include "frustum_forge/io.hpp"

namespace frustum_forge {

// A 2D detection lifted into the lidar frame: the indices of the points that
// project inside its box, plus depth bounds taken from member-depth
// quantiles.
struct Frustum {
  std::string camera_id;
  Detection2D detection;
  std::vector<int> member_indices;
  double d_min{0.0};
  double d_max{0.0};
};

// One frustum with its enumerated box candidates. Candidates inherit the
// detection's class; their score stays 0 until ranking assigns one.
struct CandidateSet {
  Frustum frustum;
  std::vector<Box3D> candidates;
};

struct SeekResult {
  std::vector<CandidateSet> sets;
  int n_empty_frustums{0};
};

// Linear-interpolation quantile at rank q * (n - 1) of a sorted sequence.
double quantile_sorted(const std::vector<double>& sorted, double q);

// nullopt when fewer than spec.min_frustum_points points project inside the
// detection box with positive depth.
std::optional<Frustum> build_frustum(const Scene& scene, const Detection2D& det,
                                     const SearchSpec& spec);

// Cartesian grid of k_d depths x k_o yaws x k_s scales, each dimension
// midpoint-sampled over equal sub-intervals: depths over [d_min, d_max],
// yaws over [0, pi), scales over [scale_lo, scale_hi]. The candidate center
// (x, y) lies on the back-projected ray through the detection box center at
// the sampled depth; z is the median member height (the ray height when
// there are fewer than 3 members).
std::vector<Box3D> enumerate_candidates(const Frustum& frustum,
                                        const CameraModel& cam,
                                        const Vec3& anchor_size,
                                        const SearchSpec& spec,
                                        const PointCloud& cloud);

// Lifts every detection in the scene. Detections whose frustum is empty are
// counted, not fatal; a detection class missing from the anchor table raises
// MissingAnchor.
SeekResult seek_scene(const Scene& scene, const std::vector<Detection2D>& dets,
                      const AnchorTable& anchors, const SearchSpec& spec);

// Candidate sets round-trip through candidates.json. Member indices are not
// persisted; only their count survives (ranking does not need them).
void save_candidates(const std::filesystem::path& path,
                     const std::vector<CandidateSet>& sets);
std::vector<CandidateSet> load_candidates(const std::filesystem::path& path,
                                          const Scene& scene);

}  // namespace frustum_forge
