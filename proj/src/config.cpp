#include "frustum_forge/config.hpp"

#include <fstream>

#include "frustum_forge/errors.hpp"

namespace frustum_forge {

using nlohmann::json;

namespace {

void read_int(const json& j, const char* key, int& dst) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer()) {
    throw FormatError(std::string("config key '") + key + "' must be an integer");
  }
  dst = it->get<int>();
}

void read_double(const json& j, const char* key, double& dst) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number()) {
    throw FormatError(std::string("config key '") + key + "' must be a number");
  }
  dst = it->get<double>();
}

void read_bool(const json& j, const char* key, bool& dst) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_boolean()) {
    throw FormatError(std::string("config key '") + key + "' must be a boolean");
  }
  dst = it->get<bool>();
}

void read_doubles(const json& j, const char* key, std::vector<double>& dst) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) {
    throw FormatError(std::string("config key '") + key + "' must be an array");
  }
  std::vector<double> vals;
  for (const auto& e : *it) {
    if (!e.is_number()) {
      throw FormatError(std::string("config key '") + key + "' holds a non-number");
    }
    vals.push_back(e.get<double>());
  }
  dst = std::move(vals);
}

constexpr const char* kKnownKeys[] = {
    "k_d", "k_o", "k_s", "scale_lo", "scale_hi", "q_lo", "q_hi",
    "min_frustum_points", "alpha_iou", "min_composite", "n_paste",
    "sigma_xyz", "sigma_yaw", "p_drop", "max_place_attempts", "density_sim",
    "beta_overlap", "min_points", "min_ego_distance", "nms_iou", "n_rounds",
    "pseudo_score_threshold", "enable_loss_norm", "loss_alpha", "ema_momentum",
    "detector_sigma", "detector_miss_rate", "dist_thresholds", "min_recall",
    "min_precision", "cluster_eps", "cluster_min_pts", "label_weight",
    "gamma_fuse", "bank_capacity"};

}  // namespace

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    (void)val;
    bool known = false;
    for (const char* k : kKnownKeys) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) throw FormatError("unknown config key '" + key + "'");
  }

  PipelineConfig cfg;
  read_int(j, "k_d", cfg.search.k_d);
  read_int(j, "k_o", cfg.search.k_o);
  read_int(j, "k_s", cfg.search.k_s);
  read_double(j, "scale_lo", cfg.search.scale_lo);
  read_double(j, "scale_hi", cfg.search.scale_hi);
  read_double(j, "q_lo", cfg.search.q_lo);
  read_double(j, "q_hi", cfg.search.q_hi);
  read_int(j, "min_frustum_points", cfg.search.min_frustum_points);
  read_double(j, "alpha_iou", cfg.oracle.alpha_iou);
  read_double(j, "min_composite", cfg.oracle.min_composite);
  read_int(j, "n_paste", cfg.sim.n_paste);
  read_double(j, "sigma_xyz", cfg.sim.sigma_xyz);
  read_double(j, "sigma_yaw", cfg.sim.sigma_yaw);
  read_double(j, "p_drop", cfg.sim.p_drop);
  read_int(j, "max_place_attempts", cfg.sim.max_place_attempts);
  read_bool(j, "density_sim", cfg.sim.density_sim);
  read_double(j, "beta_overlap", cfg.filter.beta_overlap);
  read_int(j, "min_points", cfg.filter.min_points);
  read_double(j, "min_ego_distance", cfg.filter.min_ego_distance);
  read_double(j, "nms_iou", cfg.filter.nms_iou);
  read_int(j, "n_rounds", cfg.round.n_rounds);
  read_double(j, "pseudo_score_threshold", cfg.round.pseudo_score_threshold);
  read_bool(j, "enable_loss_norm", cfg.round.enable_loss_norm);
  read_double(j, "loss_alpha", cfg.round.loss_alpha);
  read_double(j, "ema_momentum", cfg.round.ema_momentum);
  read_double(j, "detector_sigma", cfg.round.detector_sigma);
  read_double(j, "detector_miss_rate", cfg.round.detector_miss_rate);
  read_doubles(j, "dist_thresholds", cfg.eval.dist_thresholds);
  read_double(j, "min_recall", cfg.eval.min_recall);
  read_double(j, "min_precision", cfg.eval.min_precision);
  read_double(j, "cluster_eps", cfg.cluster.eps);
  read_int(j, "cluster_min_pts", cfg.cluster.min_pts);
  read_double(j, "label_weight", cfg.cluster.label_weight);
  read_double(j, "gamma_fuse", cfg.gamma_fuse);
  read_int(j, "bank_capacity", cfg.bank_capacity);

  validate_config(cfg);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["k_d"] = cfg.search.k_d;
  j["k_o"] = cfg.search.k_o;
  j["k_s"] = cfg.search.k_s;
  j["scale_lo"] = cfg.search.scale_lo;
  j["scale_hi"] = cfg.search.scale_hi;
  j["q_lo"] = cfg.search.q_lo;
  j["q_hi"] = cfg.search.q_hi;
  j["min_frustum_points"] = cfg.search.min_frustum_points;
  j["alpha_iou"] = cfg.oracle.alpha_iou;
  j["min_composite"] = cfg.oracle.min_composite;
  j["n_paste"] = cfg.sim.n_paste;
  j["sigma_xyz"] = cfg.sim.sigma_xyz;
  j["sigma_yaw"] = cfg.sim.sigma_yaw;
  j["p_drop"] = cfg.sim.p_drop;
  j["max_place_attempts"] = cfg.sim.max_place_attempts;
  j["density_sim"] = cfg.sim.density_sim;
  j["beta_overlap"] = cfg.filter.beta_overlap;
  j["min_points"] = cfg.filter.min_points;
  j["min_ego_distance"] = cfg.filter.min_ego_distance;
  j["nms_iou"] = cfg.filter.nms_iou;
  j["n_rounds"] = cfg.round.n_rounds;
  j["pseudo_score_threshold"] = cfg.round.pseudo_score_threshold;
  j["enable_loss_norm"] = cfg.round.enable_loss_norm;
  j["loss_alpha"] = cfg.round.loss_alpha;
  j["ema_momentum"] = cfg.round.ema_momentum;
  j["detector_sigma"] = cfg.round.detector_sigma;
  j["detector_miss_rate"] = cfg.round.detector_miss_rate;
  j["dist_thresholds"] = cfg.eval.dist_thresholds;
  j["min_recall"] = cfg.eval.min_recall;
  j["min_precision"] = cfg.eval.min_precision;
  j["cluster_eps"] = cfg.cluster.eps;
  j["cluster_min_pts"] = cfg.cluster.min_pts;
  j["label_weight"] = cfg.cluster.label_weight;
  j["gamma_fuse"] = cfg.gamma_fuse;
  j["bank_capacity"] = cfg.bank_capacity;
  return j;
}

void validate_config(const PipelineConfig& cfg) {
  const auto& s = cfg.search;
  if (s.k_d < 1 || s.k_o < 1 || s.k_s < 1) {
    throw FormatError("search grid sizes k_d, k_o, k_s must be >= 1");
  }
  if (!(s.scale_lo > 0.0) || !(s.scale_lo <= s.scale_hi)) {
    throw FormatError("scale range must satisfy 0 < scale_lo <= scale_hi");
  }
  if (!(0.0 <= s.q_lo && s.q_lo <= s.q_hi && s.q_hi <= 1.0)) {
    throw FormatError("quantiles must satisfy 0 <= q_lo <= q_hi <= 1");
  }
  if (s.min_frustum_points < 1) {
    throw FormatError("min_frustum_points must be >= 1");
  }
  if (cfg.oracle.alpha_iou < 0.0) throw FormatError("alpha_iou must be >= 0");
  if (cfg.sim.n_paste < 0) throw FormatError("n_paste must be >= 0");
  if (cfg.sim.sigma_xyz < 0.0 || cfg.sim.sigma_yaw < 0.0) {
    throw FormatError("simulator sigmas must be >= 0");
  }
  if (!(cfg.sim.p_drop >= 0.0 && cfg.sim.p_drop <= 1.0)) {
    throw FormatError("p_drop must lie in [0, 1]");
  }
  if (cfg.sim.max_place_attempts < 1) {
    throw FormatError("max_place_attempts must be >= 1");
  }
  if (!(cfg.filter.beta_overlap >= 0.0 && cfg.filter.beta_overlap <= 1.0)) {
    throw FormatError("beta_overlap must lie in [0, 1]");
  }
  if (cfg.filter.min_points < 0) throw FormatError("min_points must be >= 0");
  if (cfg.filter.min_ego_distance < 0.0) {
    throw FormatError("min_ego_distance must be >= 0");
  }
  if (!(cfg.filter.nms_iou >= 0.0 && cfg.filter.nms_iou <= 1.0)) {
    throw FormatError("nms_iou must lie in [0, 1]");
  }
  if (cfg.round.n_rounds < 1) throw FormatError("n_rounds must be >= 1");
  if (!(cfg.round.pseudo_score_threshold >= 0.0 &&
        cfg.round.pseudo_score_threshold <= 1.0)) {
    throw FormatError("pseudo_score_threshold must lie in [0, 1]");
  }
  if (cfg.round.loss_alpha < 0.0) throw FormatError("loss_alpha must be >= 0");
  if (!(cfg.round.ema_momentum >= 0.0 && cfg.round.ema_momentum < 1.0)) {
    throw FormatError("ema_momentum must lie in [0, 1)");
  }
  if (cfg.round.detector_sigma < 0.0) {
    throw FormatError("detector_sigma must be >= 0");
  }
  if (!(cfg.round.detector_miss_rate >= 0.0 &&
        cfg.round.detector_miss_rate <= 1.0)) {
    throw FormatError("detector_miss_rate must lie in [0, 1]");
  }
  if (cfg.eval.dist_thresholds.empty()) {
    throw FormatError("dist_thresholds must not be empty");
  }
  double prev = 0.0;
  for (double t : cfg.eval.dist_thresholds) {
    if (!(t > prev)) throw FormatError("dist_thresholds must be positive and ascending");
    prev = t;
  }
  if (!(cfg.eval.min_recall >= 0.0 && cfg.eval.min_recall < 1.0) ||
      !(cfg.eval.min_precision >= 0.0 && cfg.eval.min_precision < 1.0)) {
    throw FormatError("PR floors must lie in [0, 1)");
  }
  if (!(cfg.cluster.eps > 0.0)) throw FormatError("cluster_eps must be > 0");
  if (cfg.cluster.min_pts < 1) throw FormatError("cluster_min_pts must be >= 1");
  if (cfg.cluster.label_weight < 0.0) {
    throw FormatError("label_weight must be >= 0");
  }
  if (!(cfg.gamma_fuse >= 0.0 && cfg.gamma_fuse <= 1.0)) {
    throw FormatError("gamma_fuse must lie in [0, 1]");
  }
  if (cfg.bank_capacity < 1) throw FormatError("bank_capacity must be >= 1");
}

}  // namespace frustum_forge
