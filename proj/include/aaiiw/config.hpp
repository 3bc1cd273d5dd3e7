#pragma once

// JSON experiment configuration for the command-line driver. Exactly one of
// the "estimate" and "simulate" sections is present, matching "mode".

#include "aaiiw/montecarlo.hpp"
#include "aaiiw/panel.hpp"
#include "aaiiw/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace aaiiw {

struct BootstrapSettings {
  std::size_t replicates = 0;  // 0 disables the bootstrap
  double level = 0.95;
};

struct EstimateSettings {
  std::string input;
  CsvSchema schema;
  std::vector<std::string> estimators;
  NuisanceDesigns designs;
  NuisanceDesigns misspecified_designs;
  PipelineOptions options;
  BootstrapSettings bootstrap;
};

struct SimulateSettings {
  DgpConfig dgp;  // gamma is taken from each gamma set unless given explicitly
  bool explicit_gamma = false;
  std::vector<int> gamma_sets{1};
  std::vector<std::size_t> sample_sizes{1000};
  std::size_t replicates = 100;
  std::vector<std::string> estimators;
  NuisanceDesigns designs;
  NuisanceDesigns misspecified_designs;
  PipelineOptions options;
  double max_failure_fraction = 0.05;

  // One Monte Carlo run per (gamma set, sample size), in that nesting order.
  std::vector<MonteCarloConfig> runs(std::uint64_t base_seed) const;
};

enum class RunMode { estimate, simulate };

struct ExperimentConfig {
  RunMode mode = RunMode::simulate;
  std::uint64_t base_seed = 1;
  std::string output_dir = "out";
  std::optional<EstimateSettings> estimate;
  std::optional<SimulateSettings> simulate;
};

// Throws Error(config) with a message naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully resolved form (every default spelled out); parse_config of the
// result reproduces the same experiment.
nlohmann::json to_json(const ExperimentConfig& cfg);

nlohmann::json design_to_json(const DesignSpec& spec);
DesignSpec design_from_json(const nlohmann::json& j, const std::string& field);

}  // namespace aaiiw
