#include "frustum_forge/report.hpp"

#include <json.hpp>

#include "frustum_forge/io.hpp"

namespace frustum_forge {

void save_run_report(const std::filesystem::path& path, const RunReport& r,
                     bool include_timings) {
  nlohmann::json j;
  j["subcommand"] = r.subcommand;
  j["seed"] = r.seed;
  j["config"] = config_to_json(r.config);
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [key, value] : r.counts) counts[key] = value;
  j["counts"] = std::move(counts);
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [key, value] : r.metrics) metrics[key] = value;
  j["metrics"] = std::move(metrics);
  if (include_timings) {
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& [key, value] : r.timings_ms) timings[key] = value;
    j["timings_ms"] = std::move(timings);
  }
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace frustum_forge
