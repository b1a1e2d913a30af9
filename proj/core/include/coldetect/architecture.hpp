#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace coldetect {

enum class Variant { BaseNet, BaseNetPlus, DecNet };
enum class Activation { None, TanH, ReLU };
enum class Mode { Train, Eval };
enum class Branch { Base, New };

std::string_view to_string(Variant variant);
std::string_view to_string(Activation activation);
std::string_view to_string(Branch branch);
Variant parse_variant(std::string_view text);
Activation parse_activation(std::string_view text);

inline constexpr int kReferenceInputSide = 256;

struct ModelConfig {
  Variant variant = Variant::DecNet;
  Activation first_layer_activation = Activation::TanH;
  /// Scales every channel count. 1 is the reference geometry.
  double width_multiplier = 1.0;
  int input_side = kReferenceInputSide;
  std::uint64_t seed = 0;

  /// Throws Error when a scaled channel count is not a positive integer or
  /// the input side does not reduce to 1x1 at conv8.
  void validate() const;
  /// width_multiplier * base, required to be an integer >= 1.
  int scaled(int base_channels) const;

  bool operator==(const ModelConfig&) const = default;
};

/// Channel counts after applying the width multiplier. `second_branch` is
/// all zeros for single-branch variants.
struct ChannelPlan {
  int conv1 = 0;
  std::array<int, 3> base_branch{};
  std::array<int, 3> second_branch{};
  int conv5 = 0, conv6 = 0, conv7 = 0, conv8 = 0;

  bool has_second_branch() const { return second_branch[0] > 0; }
  int concat_channels() const { return base_branch[2] + second_branch[2]; }
};

ChannelPlan channel_plan(const ModelConfig& config);

/// Side after a 3x3 stride-2 unpadded max-pool.
constexpr int pooled_side(int side) { return (side - 3) / 2 + 1; }

/// Feature-map side at every stage: input, conv1, pool2 .. pool7, conv8.
std::vector<int> spatial_trace(int input_side);

struct LayerGeometry {
  std::string name;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
};

/// conv1 through pool4 for one branch.
std::vector<LayerGeometry> branch_geometry(const ModelConfig& config, Branch branch);

/// Input window seen by one neuron: neuron i covers
/// [start + i * jump, start + i * jump + size - 1] before border clipping.
struct ReceptiveWindow {
  int size = 1;
  int jump = 1;
  int start = 0;
};

/// Standard recurrence size' = size + (k - 1) * jump, jump' = jump * stride
/// through the named layer (default: the concatenation stage after pool4).
ReceptiveWindow receptive_window(const ModelConfig& config, Branch branch,
                                 std::string_view through = "pool4");
int receptive_field(const ModelConfig& config, Branch branch,
                    std::string_view through = "pool4");

}  // namespace coldetect
