#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "frustum_forge/config.hpp"

namespace frustum_forge {

// Machine-readable summary every CLI subcommand writes next to its outputs.
// Stage timings are collected for the log stream but excluded from the file
// by default, so two runs with the same seed produce identical bytes.
struct RunReport {
  std::string subcommand;
  std::uint64_t seed{0};
  PipelineConfig config;
  std::map<std::string, std::int64_t> counts;
  std::map<std::string, double> metrics;
  std::map<std::string, double> timings_ms;  // wall clock, not deterministic
};

void save_run_report(const std::filesystem::path& path, const RunReport& r,
                     bool include_timings = false);

}  // namespace frustum_forge
