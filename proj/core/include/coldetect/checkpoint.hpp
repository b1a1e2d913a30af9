#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coldetect/architecture.hpp"
#include "coldetect/network.hpp"

namespace coldetect {

struct NamedArray {
  std::string name;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

/// Everything needed to resume or reproduce a model: configuration, learnable
/// parameters, batch-norm running statistics, optimizer momentum, epoch
/// counter, learning rate and RNG state.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig config;
  std::vector<NamedArray> parameters;
  std::vector<NamedArray> running_stats;
  std::vector<NamedArray> momentum;
  int epoch = 0;
  double learning_rate = 0.0;
  std::string rng_state;

  bool operator==(const Checkpoint&) const = default;
};

/// Copies parameters and running statistics; optimizer fields stay empty.
Checkpoint capture(Network& network);
/// Builds a network from the configuration and loads the stored state.
Network restore_network(const Checkpoint& checkpoint);
/// Loads parameters and statistics into an existing network of the same layout.
void load_state(Network& network, const Checkpoint& checkpoint);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coldetect
