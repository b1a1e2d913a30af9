#pragma once

#include <cstdint>
#include <vector>

#include "coldetect/architecture.hpp"
#include "coldetect/rng.hpp"
#include "coldetect/tensor.hpp"

namespace coldetect {

/// Square stride-1 convolution without bias, lowered to im2col + GEMM.
class Conv2d {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int pad);

  /// He-normal initialization, std = sqrt(2 / fan_in).
  void init(Rng& rng);
  int output_side(int input_side) const { return input_side + 2 * pad_ - kernel_ + 1; }

  void forward(const Tensor& in, Tensor& out) const;
  /// Accumulates into weight_grad; writes the input gradient when din != nullptr.
  void backward(const Tensor& in, const Tensor& dout, Tensor* din);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int kernel() const { return kernel_; }
  int pad() const { return pad_; }
  /// Row-major [out_channels][in_channels * kernel * kernel].
  std::vector<float> weight;
  std::vector<float> weight_grad;

 private:
  int in_channels_, out_channels_, kernel_, pad_;
};

/// Per-channel batch normalization over N, H and W.
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels);

  /// Training pass. On return `x` holds the normalized values x_hat and `y`
  /// the affine output. Running statistics move by `momentum`.
  void forward_train(Tensor& x, Tensor& y);
  void forward_eval(const Tensor& x, Tensor& y) const;
  /// Gradient through the batch statistics of the last forward_train.
  void backward_train(const Tensor& x_hat, const Tensor& dy, Tensor& dx);
  void backward_eval(const Tensor& dy, Tensor& dx) const;

  int channels() const { return static_cast<int>(gamma.size()); }

  std::vector<float> gamma, beta;
  std::vector<float> gamma_grad, beta_grad;
  std::vector<float> running_mean, running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

 private:
  std::vector<float> batch_inv_std_;
};

void activate(Activation activation, Tensor& x);
/// `out` is the activation output; `grad` is updated in place.
void activate_backward(Activation activation, const Tensor& out, Tensor& grad);

/// 3x3 stride-2 max-pool without padding. argmax holds plane offsets; ties
/// go to the leftmost window column, then the top row. max_pool_backward
/// expects `din` already shaped like the forward input.
void max_pool_forward(const Tensor& in, Tensor& out, std::vector<std::int32_t>* argmax);
void max_pool_backward(const std::vector<std::int32_t>& argmax, const Tensor& dout,
                       Tensor& din);

/// conv -> batch norm -> activation -> optional max-pool.
struct BlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int pad = 1;
  Activation activation = Activation::ReLU;
  bool pool = true;
};

class ConvBlock {
 public:
  explicit ConvBlock(const BlockSpec& spec);

  void init(Rng& rng) { conv.init(rng); }
  const BlockSpec& spec() const { return spec_; }

  /// Eval-mode pass with no cached state.
  void infer(const Tensor& in, Tensor& out) const;
  /// Pass that caches what backward needs. `in` must outlive the backward call.
  const Tensor& forward(const Tensor& in, Mode mode);
  void backward(const Tensor& dout, Tensor* din);

  /// Activation output before pooling from the last forward().
  const Tensor& activation_output() const { return act_; }

  Conv2d conv;
  BatchNorm2d bn;

 private:
  BlockSpec spec_;
  Mode mode_ = Mode::Eval;
  const Tensor* input_ = nullptr;
  Tensor normalized_, act_, out_, grad_;
  std::vector<std::int32_t> argmax_;
};

/// Fully connected classifier producing double-precision scores.
class Linear {
 public:
  Linear(int in_features, int out_features);
  void init(Rng& rng);

  int in_features() const { return in_features_; }
  int out_features() const { return out_features_; }

  /// Row-major [out][in].
  std::vector<float> weight, bias;
  std::vector<float> weight_grad, bias_grad;

 private:
  int in_features_, out_features_;
};

}  // namespace coldetect
