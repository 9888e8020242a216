#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "negguide/guidance.hpp"
#include "negguide/schedule.hpp"
#include "negguide/trainable.hpp"

namespace negguide::cli {

struct StrategyEntry {
  std::string label;
  GuidanceConfig guidance;
};

struct DenoiserSpec {
  enum class Kind { kAnalytic, kTrained } kind = Kind::kAnalytic;
  std::filesystem::path model_path;
};

/// One experiment run. Loaded from a JSON document; command-line flags
/// override individual fields (flag > file > default).
struct ExperimentConfig {
  std::filesystem::path world_path;
  ScheduleKind schedule_kind = ScheduleKind::kLinear;
  int total_steps = 40;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  GuidanceConfig guidance;
  std::string positive;
  std::optional<std::string> negative;  // NP only
  // compare: per-strategy guidance overlays applied on top of `guidance`.
  nlohmann::json strategy_overlays = nlohmann::json::array();
  std::vector<int> k_values;
  std::vector<int> t_grid;
  std::size_t n_samples = 10;
  std::size_t n_seeds = 100;
  std::filesystem::path out_dir = "out";
  int workers = 1;
  bool save_traces = false;
  DenoiserSpec denoiser;
  TrainableConfig train;
  std::uint64_t train_seed = 0;
  std::filesystem::path model_out;

  // Canonical form of every result-affecting field plus the world file
  // contents; the output directory and worker count are excluded.
  nlohmann::json canonical() const;
  std::string hash() const;

  // Resolved compare entries; defaults to CFG, DNP and ANSWER.
  std::vector<StrategyEntry> strategies() const;
};

struct Overrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> strategy;
  std::optional<double> s;
  std::optional<double> s_n;
  std::optional<int> k;
  std::optional<int> total_steps;
  std::optional<std::string> sampler;
  bool no_normalize = false;
  std::optional<double> window;
  std::optional<std::size_t> n;
};

// Relative paths inside the document resolve against base_dir. Throws
// ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_overrides(ExperimentConfig& config, const Overrides& flags);

}  // namespace negguide::cli
