#pragma once

// File formats: scenario JSON, trajectory CSV, diagnostics JSONL, SVG plots.

#include "cbfd/expert.hpp"
#include "cbfd/policy_nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace cbfd {

nlohmann::json to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);

// Accepts a builtin name ("unicycle", "example1") or a path to a JSON file.
// A file either names a builtin and overrides some fields, or is a full dump.
ScenarioConfig load_scenario_config(const std::string& name_or_path);

// Shortest round-trip decimal; "nan" for NaN.
std::string format_double(double v);

std::string trajectory_csv_header(const Scenario& sc);
void write_trajectory_csv(std::ostream& os, const Scenario& sc, const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Scenario& sc,
                          const Trajectory& traj);

nlohmann::json to_json(const ExpertDiagnostics& d);

// "zero", "random", "random:<hold_steps>" or "const:<v1>,<v2>,..." (one value
// per disturbance channel).
DisturbanceSignal disturbance_from_string(const std::string& s, int l);
std::string to_string(const DisturbanceSignal& s);

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

struct SvgOptions {
  int width = 600;
  int height = 600;
};
std::string render_svg(const Scenario& sc, const std::vector<Trajectory>& trajectories,
                       const SvgOptions& opts = {});

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& data);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace cbfd
