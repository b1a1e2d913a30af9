#include "coldetect/architecture.hpp"

#include <cmath>

#include "coldetect/error.hpp"

namespace coldetect {

namespace {

constexpr int kConv1 = 32;
constexpr std::array<int, 3> kBaseBranch{64, 128, 256};
constexpr std::array<int, 3> kWideBranch{96, 192, 384};
constexpr int kConv5 = 256, kConv6 = 512, kConv7 = 512, kConv8 = 512;
constexpr int kPooledStages = 6;  // after conv2 .. conv7

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::BaseNet: return "basenet";
    case Variant::BaseNetPlus: return "basenetplus";
    case Variant::DecNet: return "decnet";
  }
  throw Error("unknown variant");
}

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::None: return "none";
    case Activation::TanH: return "tanh";
    case Activation::ReLU: return "relu";
  }
  throw Error("unknown activation");
}

std::string_view to_string(Branch branch) {
  return branch == Branch::Base ? "base" : "new";
}

Variant parse_variant(std::string_view text) {
  if (text == "basenet") return Variant::BaseNet;
  if (text == "basenetplus" || text == "basenet+") return Variant::BaseNetPlus;
  if (text == "decnet") return Variant::DecNet;
  throw Error("unknown variant '" + std::string(text) + "' (expected basenet, basenetplus or decnet)");
}

Activation parse_activation(std::string_view text) {
  if (text == "none") return Activation::None;
  if (text == "tanh") return Activation::TanH;
  if (text == "relu") return Activation::ReLU;
  throw Error("unknown activation '" + std::string(text) + "' (expected none, tanh or relu)");
}

int ModelConfig::scaled(int base_channels) const {
  if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier)) {
    throw Error("width multiplier must be positive");
  }
  const double exact = width_multiplier * base_channels;
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-9 * std::max(1.0, exact) || rounded < 1.0) {
    throw Error("width multiplier " + std::to_string(width_multiplier) + " gives non-integer channel count for " +
                std::to_string(base_channels) + " channels");
  }
  return static_cast<int>(rounded);
}

void ModelConfig::validate() const {
  if (variant != Variant::BaseNet && variant != Variant::BaseNetPlus && variant != Variant::DecNet) {
    throw Error("unknown variant");
  }
  if (first_layer_activation != Activation::None && first_layer_activation != Activation::TanH &&
      first_layer_activation != Activation::ReLU) {
    throw Error("unknown activation");
  }
  (void)channel_plan(*this);
  if (width_multiplier == 1.0 && input_side != kReferenceInputSide) {
    throw Error("input side must be 256 at width multiplier 1");
  }
  const auto trace = spatial_trace(input_side);
  if (trace.back() != 1) {
    throw Error("input side " + std::to_string(input_side) + " does not reduce to 1x1 at conv8");
  }
}

ChannelPlan channel_plan(const ModelConfig& config) {
  ChannelPlan plan;
  plan.conv1 = config.scaled(kConv1);
  const auto& base = config.variant == Variant::BaseNetPlus ? kWideBranch : kBaseBranch;
  for (int i = 0; i < 3; ++i) plan.base_branch[i] = config.scaled(base[i]);
  if (config.variant == Variant::DecNet) {
    for (int i = 0; i < 3; ++i) plan.second_branch[i] = config.scaled(kBaseBranch[i]);
  }
  plan.conv5 = config.scaled(kConv5);
  plan.conv6 = config.scaled(kConv6);
  plan.conv7 = config.scaled(kConv7);
  plan.conv8 = config.scaled(kConv8);
  return plan;
}

std::vector<int> spatial_trace(int input_side) {
  std::vector<int> trace{input_side, input_side};  // input, conv1 (padded)
  int side = input_side;
  for (int i = 0; i < kPooledStages; ++i) {
    side = side >= 3 ? pooled_side(side) : 0;
    trace.push_back(side);
  }
  trace.push_back(side >= 3 ? side - 2 : 0);  // conv8, unpadded 3x3
  return trace;
}

std::vector<LayerGeometry> branch_geometry(const ModelConfig& config, Branch branch) {
  if (branch == Branch::New && config.variant != Variant::DecNet) {
    throw Error("variant " + std::string(to_string(config.variant)) + " has no second branch");
  }
  const int k = branch == Branch::Base ? 3 : 1;
  const int pad = branch == Branch::Base ? 1 : 0;
  return {
      {"conv1", 3, 1, 1}, {"conv2", k, 1, pad}, {"pool2", 3, 2, 0}, {"conv3", k, 1, pad},
      {"pool3", 3, 2, 0}, {"conv4", k, 1, pad}, {"pool4", 3, 2, 0},
  };
}

ReceptiveWindow receptive_window(const ModelConfig& config, Branch branch, std::string_view through) {
  ReceptiveWindow window;
  for (const auto& layer : branch_geometry(config, branch)) {
    window.size += (layer.kernel - 1) * window.jump;
    window.start -= layer.pad * window.jump;
    window.jump *= layer.stride;
    if (layer.name == through) return window;
  }
  throw Error("unknown layer '" + std::string(through) + "'");
}

int receptive_field(const ModelConfig& config, Branch branch, std::string_view through) {
  return receptive_window(config, branch, through).size;
}

}  // namespace coldetect
