#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coldetect/architecture.hpp"
#include "coldetect/layers.hpp"
#include "coldetect/loss.hpp"
#include "coldetect/tensor.hpp"

namespace coldetect {

/// One row per sample, conv8 output after normalization and activation.
using Embeddings = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mutable view of one learnable array and its gradient.
struct ParameterView {
  std::string name;
  std::span<float> value;
  std::span<float> grad;
  /// Weight decay applies to convolution kernels and classifier weights only.
  bool decay = false;
};

struct BufferView {
  std::string name;
  std::span<float> value;
};

/// conv4 activations (before pooling) for the first image of a batch.
struct BranchMaps {
  Tensor base;
  std::optional<Tensor> second;
};

/// BaseNet, BaseNet+ or DecNet.
///
/// Layout: conv1 (3x3, optional activation), a base branch of three 3x3
/// conv+pool blocks, for DecNet a parallel branch of 1x1 conv+pool blocks,
/// channel concatenation, conv5-conv7 with pooling, unpadded conv8 down to
/// 1x1 and a 2-way classifier. Every convolution is followed by batch norm.
class Network {
 public:
  explicit Network(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ChannelPlan& channels() const { return plan_; }
  int feature_dim() const { return plan_.conv8; }

  /// Records activations for backward(). Train mode also updates the
  /// running statistics.
  ClassScores forward(const Tensor& batch, Mode mode);
  /// Eval-mode scores; touches no state and may run concurrently.
  ClassScores infer(const Tensor& batch) const;
  /// Scores plus the conv8 features they were computed from.
  ClassScores infer(const Tensor& batch, Embeddings& features) const;
  Embeddings extract_features(const Tensor& batch) const;
  BranchMaps conv4_maps(const Tensor& batch) const;

  /// Accumulates parameter gradients for the last forward(). Returns the
  /// input gradient when `want_input_grad` is set.
  std::optional<Tensor> backward(const ClassScores& score_grad, bool want_input_grad = false);
  void zero_grad();

  /// Concatenation-stage activations (after pool4 of every branch).
  Tensor forward_to_concat(const Tensor& batch, Mode mode);
  /// Input gradient for a seed gradient at the concatenation stage; requires
  /// a preceding forward_to_concat().
  Tensor backward_from_concat(const Tensor& concat_grad);

  std::vector<ParameterView> parameters();
  std::vector<BufferView> buffers();
  std::size_t parameter_count() const;

  /// conv1 kernels, row-major [32w][3][3][3].
  const std::vector<float>& first_layer_kernels() const { return conv1_.conv.weight; }

 private:
  void validate_input(const Tensor& batch) const;
  Tensor backward_front(const Tensor& concat_grad, bool want_input);
  void infer_trunk(const Tensor& batch, Tensor& features) const;
  void concat(const Tensor& a, const Tensor& b, Tensor& out) const;
  void split(const Tensor& joined, Tensor& a, Tensor& b) const;

  ModelConfig config_;
  ChannelPlan plan_;
  ConvBlock conv1_;
  std::vector<ConvBlock> base_;
  std::vector<ConvBlock> second_;
  std::vector<ConvBlock> trunk_;
  Linear classifier_;

  Tensor input_, concat_, concat_grad_, features_;
  Tensor base_grad_, second_grad_;
};

Network build_network(const ModelConfig& config);
std::size_t count_parameters(const Network& network);

}  // namespace coldetect
