#include <algorithm>
#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "coldetect/error.hpp"
#include "coldetect/plot.hpp"
#include "test_support.hpp"

namespace coldetect {
namespace {

using testing::TempDir;

TEST(PlotKernels, GridOfConv1Kernels) {
  TempDir dir;
  ModelConfig config;
  Network net(config);
  plot_kernels(net, dir / "k.png");
  const auto image = read_image(dir / "k.png");
  // 32 kernels, 8 per row, 48 px tiles with 4 px gaps.
  EXPECT_EQ(image.width, 8 * 52 + 4);
  EXPECT_EQ(image.height, 4 * 52 + 4);

  const auto& w = net.first_layer_kernels();
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  // Kernel 5 sits in row 0, column 5; its weight (y=1, x=2) fills a 16 px cell.
  const int left = 4 + 5 * 52 + 2 * 16 + 8, top = 4 + 1 * 16 + 8;
  for (int c = 0; c < 3; ++c) {
    const double expected = (w[5 * 27 + c * 9 + 1 * 3 + 2] - *lo) * 255.0 / (*hi - *lo);
    EXPECT_NEAR(image.at(top, left, c), expected, 0.51) << c;
  }
}

TEST(PlotFeatureMaps, SingleBranchForBaseNet) {
  TempDir dir;
  ModelConfig config;
  config.width_multiplier = 0.25;
  config.variant = Variant::DecNet;
  const Tensor batch = testing::random_batch(1, 256, 2);
  plot_feature_maps(Network(config).conv4_maps(batch), dir / "dec.png");
  config.variant = Variant::BaseNet;
  plot_feature_maps(Network(config).conv4_maps(batch), dir / "base.png");
  const auto dec = read_image(dir / "dec.png");
  const auto base = read_image(dir / "base.png");
  // 64 maps, 8x8 grid of 64 px tiles with 2 px gaps, plus a 30 px title.
  const int grid = 8 * 66 + 2;
  EXPECT_EQ(base.width, grid);
  EXPECT_EQ(base.height, grid + 30);
  EXPECT_EQ(dec.width, 2 * grid + 20);
}

TEST(PlotCurves, WritesImageAndRejectsEmpty) {
  TempDir dir;
  LearningCurve curve;
  for (int e = 0; e < 120; ++e) {
    curve.records.push_back({e < 60 ? 1 : 2, e, 1e-4, 0.5, 80.0, 10.0 - e / 20.0, {{"SynthB", 30.0 - e / 10.0}}});
  }
  plot_curves(curve, dir / "c.png");
  const auto image = read_image(dir / "c.png");
  EXPECT_GT(image.width, 100);
  EXPECT_GT(image.height, 100);
  EXPECT_THROW(plot_curves(LearningCurve{}, dir / "e.png"), Error);
}

TEST(PlotEmbedding, ReadsPointsAndDraws) {
  TempDir dir;
  std::ofstream(dir / "xy.tsv") << "x\ty\tlabel\tpredicted\tmethod\n"
                                << "0.5\t1.0\t1\t1\tnatural\n"
                                << "-2\t3\t0\t1\tSynthA\n"
                                << "4\t-1\t0\t0\tSynthB\n";
  const auto points = read_embedding_points(dir / "xy.tsv");
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[1].x, -2.0);
  EXPECT_EQ(points[1].predicted, 1);
  EXPECT_EQ(points[2].method, "SynthB");
  plot_embedding(points, dir / "e.png");
  EXPECT_GT(read_image(dir / "e.png").width, 0);

  std::ofstream(dir / "bad.tsv") << "x\ty\tlabel\tpredicted\tmethod\n1\t2\n";
  EXPECT_THROW(read_embedding_points(dir / "bad.tsv"), Error);
  std::ofstream(dir / "empty.tsv") << "x\ty\tlabel\tpredicted\tmethod\n";
  EXPECT_THROW(read_embedding_points(dir / "empty.tsv"), Error);
  EXPECT_THROW(plot_embedding({}, dir / "x.png"), Error);
}

TEST(Plot, UnwritablePathThrows) {
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  ModelConfig config;
  config.width_multiplier = 0.125;
  EXPECT_THROW(plot_kernels(Network(config), dir / "file" / "k.png"), Error);
  EXPECT_THROW(plot_kernels(Network(config), dir / "k.unknown-extension"), Error);
}

}  // namespace
}  // namespace coldetect
