#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coldetect/architecture.hpp"
#include "coldetect/trainer.hpp"

namespace coldetect {

/// Everything a train or enhance run needs, read from a flat YAML mapping.
///
/// Keys: variant, activation, width_multiplier, input_side, lr0, momentum,
/// weight_decay, stage1_epochs, stage1_decay_every, epochs_per_insertion,
/// alphas, stage2_lr0, beta, train_manifest, validation_manifest,
/// test_manifests, seeds. Lists accept YAML sequences or comma-separated text.
struct RunConfig {
  ModelConfig model;
  TrainingSchedule schedule;
  EnhanceParams enhance;
  std::filesystem::path train_manifest;
  std::filesystem::path validation_manifest;
  std::vector<std::filesystem::path> test_manifests;
  std::vector<std::uint64_t> seeds{0};

  /// Model and schedule for one seed of the sweep.
  RunConfig for_seed(std::uint64_t seed) const;
};

/// Relative manifest paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view yaml, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies one `key=value` override using the same parsing rules.
void apply_override(RunConfig& config, std::string_view key, std::string_view value);
/// Resolved configuration with absolute paths; parse_run_config(to_yaml(c))
/// reproduces c.
std::string to_yaml(const RunConfig& config);

}  // namespace coldetect
