#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coldetect/network.hpp"
#include "coldetect/trainer.hpp"

namespace coldetect {

/// Error rate against epoch for the validation set and every monitor, with a
/// dotted line where stage 2 begins.
void plot_curves(const LearningCurve& curve, const std::filesystem::path& out);

/// conv1 kernels as RGB tiles; each tile combines one kernel's three input
/// channels.
void plot_kernels(const Network& network, const std::filesystem::path& out);

/// Up to 64 conv4 maps per branch, one grid per branch side by side.
void plot_feature_maps(const BranchMaps& maps, const std::filesystem::path& out);

/// One point of an externally reduced embedding.
struct EmbeddingPoint {
  double x = 0.0;
  double y = 0.0;
  int label = 0;
  int predicted = 0;
  std::string method;
};

/// Reads `x y label predicted method` rows (tab-separated, header line first).
std::vector<EmbeddingPoint> read_embedding_points(const std::filesystem::path& path);
/// Hue encodes the method, fill the true label, outline the prediction.
void plot_embedding(const std::vector<EmbeddingPoint>& points, const std::filesystem::path& out);

}  // namespace coldetect
