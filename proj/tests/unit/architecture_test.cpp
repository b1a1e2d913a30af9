#include <cmath>

#include <gtest/gtest.h>

#include "coldetect/architecture.hpp"
#include "coldetect/error.hpp"
#include "coldetect/network.hpp"

namespace coldetect {
namespace {

// Independent layer-by-layer count: k*k*in*out kernel weights plus a BN
// scale and shift per output channel, then the 2-way classifier.
std::size_t expected_parameters(Variant variant) {
  auto conv = [](std::size_t k, std::size_t in, std::size_t out) { return k * k * in * out + 2 * out; };
  std::size_t total = conv(3, 3, 32);
  if (variant == Variant::BaseNetPlus) {
    total += conv(3, 32, 96) + conv(3, 96, 192) + conv(3, 192, 384);
    total += conv(3, 384, 256);
  } else {
    total += conv(3, 32, 64) + conv(3, 64, 128) + conv(3, 128, 256);
    if (variant == Variant::DecNet) {
      total += conv(1, 32, 64) + conv(1, 64, 128) + conv(1, 128, 256);
      total += conv(3, 512, 256);
    } else {
      total += conv(3, 256, 256);
    }
  }
  total += conv(3, 256, 512) + conv(3, 512, 512) + conv(3, 512, 512);
  return total + 512 * 2 + 2;
}

TEST(ParameterCount, MatchesReferenceTotals) {
  for (auto activation : {Activation::None, Activation::TanH, Activation::ReLU}) {
    ModelConfig config;
    config.first_layer_activation = activation;
    config.variant = Variant::BaseNet;
    EXPECT_EQ(count_parameters(build_network(config)), 6'881'570u);
    config.variant = Variant::BaseNetPlus;
    EXPECT_EQ(count_parameters(build_network(config)), 7'646'946u);
    config.variant = Variant::DecNet;
    EXPECT_EQ(count_parameters(build_network(config)), 7'515'298u);
  }
}

TEST(ParameterCount, AgreesWithIndependentLayerCount) {
  for (auto variant : {Variant::BaseNet, Variant::BaseNetPlus, Variant::DecNet}) {
    ModelConfig config;
    config.variant = variant;
    EXPECT_EQ(count_parameters(build_network(config)), expected_parameters(variant));
  }
}

TEST(ParameterCount, RoundsToReferenceMillions) {
  auto millions = [](Variant v) {
    ModelConfig config;
    config.variant = v;
    return std::round(count_parameters(build_network(config)) / 1e4) / 100.0;
  };
  EXPECT_DOUBLE_EQ(millions(Variant::BaseNet), 6.88);
  EXPECT_DOUBLE_EQ(millions(Variant::BaseNetPlus), 7.65);
  EXPECT_DOUBLE_EQ(millions(Variant::DecNet), 7.52);
}

TEST(ChannelPlan, PaperGeometry) {
  const auto plan = channel_plan(ModelConfig{});
  EXPECT_EQ(plan.conv1, 32);
  EXPECT_EQ(plan.base_branch, (std::array<int, 3>{64, 128, 256}));
  EXPECT_EQ(plan.second_branch, (std::array<int, 3>{64, 128, 256}));
  EXPECT_EQ(plan.concat_channels(), 512);
  EXPECT_EQ(plan.conv5, 256);
  EXPECT_EQ(plan.conv8, 512);

  ModelConfig plus;
  plus.variant = Variant::BaseNetPlus;
  const auto wide = channel_plan(plus);
  EXPECT_EQ(wide.base_branch, (std::array<int, 3>{96, 192, 384}));
  EXPECT_FALSE(wide.has_second_branch());
}

TEST(ChannelPlan, WidthMultiplierScalesEveryLayer) {
  ModelConfig config;
  config.width_multiplier = 0.25;
  const auto plan = channel_plan(config);
  EXPECT_EQ(plan.conv1, 8);
  EXPECT_EQ(plan.base_branch, (std::array<int, 3>{16, 32, 64}));
  EXPECT_EQ(plan.conv5, 64);
  EXPECT_EQ(plan.conv8, 128);
}

TEST(ModelConfig, RejectsNonIntegerChannels) {
  ModelConfig config;
  config.width_multiplier = 0.3;
  EXPECT_THROW(config.validate(), Error);
  EXPECT_THROW(build_network(config), Error);
  config.width_multiplier = 0.0;
  EXPECT_THROW(config.validate(), Error);
  config.width_multiplier = -1.0;
  EXPECT_THROW(config.validate(), Error);
}

TEST(ModelConfig, InputSideFixedAtFullWidth) {
  ModelConfig config;
  config.input_side = 255;
  EXPECT_THROW(config.validate(), Error);
  config.width_multiplier = 0.5;
  EXPECT_NO_THROW(config.validate());
  config.input_side = 200;  // 200 -> 99 -> 49 -> 24 -> 11 -> 5 -> 2 -> 0
  EXPECT_THROW(config.validate(), Error);
}

TEST(ModelConfig, ParsesNames) {
  EXPECT_EQ(parse_variant("basenet"), Variant::BaseNet);
  EXPECT_EQ(parse_variant("basenetplus"), Variant::BaseNetPlus);
  EXPECT_EQ(parse_variant("basenet+"), Variant::BaseNetPlus);
  EXPECT_EQ(parse_variant("decnet"), Variant::DecNet);
  EXPECT_THROW(parse_variant("resnet"), Error);
  EXPECT_EQ(parse_activation("none"), Activation::None);
  EXPECT_EQ(parse_activation("tanh"), Activation::TanH);
  EXPECT_EQ(parse_activation("relu"), Activation::ReLU);
  EXPECT_THROW(parse_activation("sigmoid"), Error);
  for (auto v : {Variant::BaseNet, Variant::BaseNetPlus, Variant::DecNet}) EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(SpatialTrace, ReducesToOne) {
  EXPECT_EQ(spatial_trace(256), (std::vector<int>{256, 256, 127, 63, 31, 15, 7, 3, 1}));
  EXPECT_EQ(pooled_side(256), 127);
  EXPECT_EQ(pooled_side(127), 63);
}

TEST(ReceptiveField, ConcatenationStage) {
  ModelConfig config;
  EXPECT_EQ(receptive_field(config, Branch::New), 17);
  EXPECT_EQ(receptive_field(config, Branch::Base), 31);
  EXPECT_EQ(receptive_field(config, Branch::Base, "conv1"), 3);
  EXPECT_EQ(receptive_field(config, Branch::New, "conv1"), 3);
}

TEST(ReceptiveField, WindowsShareCenters) {
  ModelConfig config;
  const auto base = receptive_window(config, Branch::Base);
  const auto second = receptive_window(config, Branch::New);
  EXPECT_EQ(base.jump, 8);
  EXPECT_EQ(second.jump, 8);
  EXPECT_EQ(base.start + base.size / 2, second.start + second.size / 2);
}

TEST(ReceptiveField, IndependentRecurrence) {
  // size' = size + (k - 1) * jump, jump' = jump * stride over conv1 and
  // three (conv, pool) stages.
  auto field = [](int conv_kernel) {
    int size = 3, jump = 1;
    for (int stage = 0; stage < 3; ++stage) {
      size += (conv_kernel - 1) * jump;
      size += 2 * jump;
      jump *= 2;
    }
    return size;
  };
  ModelConfig config;
  EXPECT_EQ(receptive_field(config, Branch::Base), field(3));
  EXPECT_EQ(receptive_field(config, Branch::New), field(1));
}

TEST(ReceptiveField, NewBranchNeedsDecNet) {
  ModelConfig config;
  config.variant = Variant::BaseNet;
  EXPECT_THROW(receptive_field(config, Branch::New), Error);
  EXPECT_EQ(receptive_field(config, Branch::Base), 31);
}

}  // namespace
}  // namespace coldetect
