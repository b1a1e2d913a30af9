#include <fstream>

#include <gtest/gtest.h>

#include "coldetect/checkpoint.hpp"
#include "coldetect/error.hpp"
#include "test_support.hpp"

namespace coldetect {
namespace {

ModelConfig config(Variant variant = Variant::DecNet) {
  ModelConfig c;
  c.variant = variant;
  c.width_multiplier = 0.125;
  c.seed = 3;
  return c;
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  testing::TempDir dir;
  Network net(config());
  net.forward(testing::random_batch(2, 256, 1), Mode::Train);
  auto checkpoint = capture(net);
  checkpoint.epoch = 17;
  checkpoint.learning_rate = 1e-3;
  checkpoint.rng_state = Rng(5).state();
  checkpoint.momentum = {{"conv1.weight", std::vector<float>(216, 0.5f)}};
  save_checkpoint(checkpoint, dir / "model.ckpt");
  const auto loaded = load_checkpoint(dir / "model.ckpt");
  EXPECT_EQ(loaded, checkpoint);
}

TEST(Checkpoint, RestoredNetworkScoresIdentically) {
  Network net(config());
  net.forward(testing::random_batch(4, 256, 2), Mode::Train);
  const auto restored = restore_network(capture(net));
  const auto batch = testing::random_batch(2, 256, 3);
  EXPECT_EQ(net.infer(batch), restored.infer(batch));
}

TEST(Checkpoint, CapturesEveryArray) {
  Network net(config());
  const auto checkpoint = capture(net);
  EXPECT_EQ(checkpoint.parameters.size(), net.parameters().size());
  EXPECT_EQ(checkpoint.running_stats.size(), net.buffers().size());
  std::size_t total = 0;
  for (const auto& p : checkpoint.parameters) total += p.values.size();
  EXPECT_EQ(total, net.parameter_count());
}

TEST(Checkpoint, LoadRejectsLayoutMismatch) {
  Network dec(config(Variant::DecNet));
  Network base(config(Variant::BaseNet));
  EXPECT_THROW(load_state(base, capture(dec)), Error);
  auto other = config();
  other.first_layer_activation = Activation::ReLU;
  Network relu(other);
  EXPECT_THROW(load_state(relu, capture(dec)), Error);
}

TEST(Checkpoint, CorruptFileThrows) {
  testing::TempDir dir;
  std::ofstream(dir / "bad.ckpt") << "garbage";
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST(RngState, RoundTripsThroughString) {
  Rng a(9);
  a.next();
  Rng b;
  b.set_state(a.state());
  EXPECT_EQ(a.next(), b.next());
}

}  // namespace
}  // namespace coldetect
