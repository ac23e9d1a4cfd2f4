#pragma once

#include <string>
#include <vector>

#include "dpl/ablation.hpp"
#include "json.hpp"

namespace dpl {

/// Whole-run configuration: one root seed, corpus shape, teacher and student
/// training sections, and the ablation request. Every field has a default;
/// an empty config file is valid.
struct PipelineConfig {
  uint64_t seed = 1;
  BenchmarkSpec benchmark;                 // synth + teacher + student sections
  std::vector<std::string> ablation_variants = {"full", "no_adv", "traditional_pl"};
  std::vector<uint64_t> ablation_seeds = {1, 2, 3, 4, 5};
};

struct ConfigResult {
  PipelineConfig config;
  std::vector<std::string> errors;          // empty iff the config is valid
  nlohmann::ordered_json normalized;        // full config with defaults filled
  std::string config_hash;                  // hash of the normalized form

  bool ok() const { return errors.empty(); }
};

/// Parses and validates, collecting every error instead of failing fast.
/// Unknown keys report the nearest valid key as a suggestion.
ConfigResult validate_config(const std::string& path);
ConfigResult validate_config_json(const nlohmann::ordered_json& doc);
ConfigResult default_config();

/// Full pipeline: synth -> extract-aspects -> teachers -> pseudo-label both
/// directions -> merge -> train -> eval. Stage outputs are content-addressed
/// by config-section hash; completed stages are skipped on rerun, and a
/// corrupted output fails with the stage named.
void run_pipeline(const PipelineConfig& config, const std::string& config_hash,
                  const nlohmann::ordered_json& normalized, const std::string& out_dir,
                  bool verbose = false);

}  // namespace dpl
