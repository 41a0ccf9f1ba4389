#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "frustum_forge/types.hpp"

namespace frustum_forge {

// Frustum search grid. Depth bounds come from member-depth quantiles
// (q_lo, q_hi); the grid midpoint-samples k_d depths, k_o yaws in [0, pi)
// and k_s anchor scales in [scale_lo, scale_hi].
struct SearchSpec {
  int k_d{4};
  int k_o{10};
  int k_s{4};
  double scale_lo{0.95};
  double scale_hi{1.2};
  double q_lo{0.0};
  double q_hi{0.25};
  int min_frustum_points{5};
};

// Candidate ranking: composite = density + alpha_iou * alignment.
struct OracleConfig {
  double alpha_iou{2.0};
  double min_composite{0.0};
};

// Copy-paste augmentation from the memory bank.
struct SimulatorConfig {
  int n_paste{10};
  double sigma_xyz{1.0};
  double sigma_yaw{kPi / 4.0};
  double p_drop{0.2};
  int max_place_attempts{20};
  bool density_sim{true};
};

// Pseudo-label hygiene.
struct FilterConfig {
  double beta_overlap{0.1};
  int min_points{5};
  double min_ego_distance{2.0};
  double nms_iou{0.2};
};

// Self-training rounds and the stand-in detector used at desk scale.
struct RoundConfig {
  int n_rounds{3};
  double pseudo_score_threshold{0.6};
  bool enable_loss_norm{true};
  double loss_alpha{0.5};
  double ema_momentum{0.99};
  double detector_sigma{0.3};
  double detector_miss_rate{0.1};
};

struct EvalConfig {
  std::vector<double> dist_thresholds{0.5, 1.0, 2.0, 4.0};
  double min_recall{0.1};
  double min_precision{0.1};
};

struct ClusterConfig {
  double eps{1.5};
  int min_pts{15};
  double label_weight{1000.0};
};

struct PipelineConfig {
  SearchSpec search;
  OracleConfig oracle;
  SimulatorConfig sim;
  FilterConfig filter;
  RoundConfig round;
  EvalConfig eval;
  ClusterConfig cluster;
  double gamma_fuse{0.2};
  int bank_capacity{60};
};

// Reads a flat JSON object; absent keys keep their defaults, unknown keys
// raise FormatError, as do out-of-range values. An empty object yields the
// defaults above.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
void validate_config(const PipelineConfig& cfg);

}  // namespace frustum_forge
