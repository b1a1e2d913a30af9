#include "coldetect/network.hpp"
#include <algorithm>

#include <cmath>
#include <cstring>

#include "coldetect/error.hpp"

namespace coldetect {

namespace {

ChannelPlan validated_plan(const ModelConfig& config) {
  config.validate();
  return channel_plan(config);
}

std::vector<ConvBlock> make_branch(int in_channels, const std::array<int, 3>& widths, int kernel) {
  std::vector<ConvBlock> blocks;
  int previous = in_channels;
  for (int width : widths) {
    blocks.emplace_back(BlockSpec{previous, width, kernel, kernel / 2, Activation::ReLU, true});
    previous = width;
  }
  return blocks;
}

void linear_forward(const Linear& fc, const Tensor& features, ClassScores& scores) {
  const int n = features.batch();
  const int f = fc.in_features();
  scores.resize(n, 2);
  for (int s = 0; s < n; ++s) {
    const float* x = features.sample(s);
    for (int o = 0; o < 2; ++o) {
      const float* w = fc.weight.data() + static_cast<std::size_t>(o) * f;
      double acc = fc.bias[o];
      for (int i = 0; i < f; ++i) acc += static_cast<double>(w[i]) * x[i];
      scores(s, o) = acc;
    }
  }
}

}  // namespace

Network::Network(const ModelConfig& config)
    : config_(config),
      plan_(validated_plan(config)),
      conv1_(BlockSpec{3, plan_.conv1, 3, 1, config.first_layer_activation, false}),
      classifier_(plan_.conv8, 2) {
  base_ = make_branch(plan_.conv1, plan_.base_branch, 3);
  if (plan_.has_second_branch()) second_ = make_branch(plan_.conv1, plan_.second_branch, 1);
  trunk_.emplace_back(BlockSpec{plan_.concat_channels(), plan_.conv5, 3, 1, Activation::ReLU, true});
  trunk_.emplace_back(BlockSpec{plan_.conv5, plan_.conv6, 3, 1, Activation::ReLU, true});
  trunk_.emplace_back(BlockSpec{plan_.conv6, plan_.conv7, 3, 1, Activation::ReLU, true});
  trunk_.emplace_back(BlockSpec{plan_.conv7, plan_.conv8, 3, 0, Activation::ReLU, false});

  Rng rng(config.seed);
  conv1_.init(rng);
  for (auto& block : base_) block.init(rng);
  for (auto& block : second_) block.init(rng);
  for (auto& block : trunk_) block.init(rng);
  classifier_.init(rng);
}

Network build_network(const ModelConfig& config) { return Network(config); }

void Network::validate_input(const Tensor& batch) const {
  if (batch.batch() < 1) throw Error("forward: empty batch");
  if (batch.channels() != 3) {
    throw Error("forward: expected 3 channels, got " + std::to_string(batch.channels()));
  }
  if (batch.height() != config_.input_side || batch.width() != config_.input_side) {
    throw Error("forward: expected " + std::to_string(config_.input_side) + "x" + std::to_string(config_.input_side) +
                " input, got " + std::to_string(batch.height()) + "x" + std::to_string(batch.width()));
  }
  for (float v : batch.values()) {
    if (!std::isfinite(v)) throw Error("forward: non-finite input value");
  }
}

void Network::concat(const Tensor& a, const Tensor& b, Tensor& out) const {
  out.reshape_uninitialized(a.batch(), a.channels() + b.channels(), a.height(), a.width());
  for (int s = 0; s < a.batch(); ++s) {
    std::memcpy(out.sample(s), a.sample(s), sizeof(float) * a.sample_size());
    std::memcpy(out.sample(s) + a.sample_size(), b.sample(s), sizeof(float) * b.sample_size());
  }
}

void Network::split(const Tensor& joined, Tensor& a, Tensor& b) const {
  const int ca = plan_.base_branch[2];
  const int cb = joined.channels() - ca;
  a.reshape_uninitialized(joined.batch(), ca, joined.height(), joined.width());
  b.reshape_uninitialized(joined.batch(), cb, joined.height(), joined.width());
  for (int s = 0; s < joined.batch(); ++s) {
    std::memcpy(a.sample(s), joined.sample(s), sizeof(float) * a.sample_size());
    std::memcpy(b.sample(s), joined.sample(s) + a.sample_size(), sizeof(float) * b.sample_size());
  }
}

Tensor Network::forward_to_concat(const Tensor& batch, Mode mode) {
  validate_input(batch);
  input_ = batch;
  const Tensor& stem = conv1_.forward(input_, mode);
  const Tensor* x = &stem;
  for (auto& block : base_) x = &block.forward(*x, mode);
  if (second_.empty()) {
    concat_ = *x;
    return concat_;
  }
  const Tensor* y = &stem;
  for (auto& block : second_) y = &block.forward(*y, mode);
  concat(*x, *y, concat_);
  return concat_;
}

ClassScores Network::forward(const Tensor& batch, Mode mode) {
  forward_to_concat(batch, mode);
  const Tensor* x = &concat_;
  for (auto& block : trunk_) x = &block.forward(*x, mode);
  features_ = *x;
  ClassScores scores;
  linear_forward(classifier_, features_, scores);
  return scores;
}

std::optional<Tensor> Network::backward(const ClassScores& score_grad, bool want_input_grad) {
  const int n = features_.batch();
  if (score_grad.rows() != n) throw Error("backward: gradient rows do not match the last forward batch");
  const int f = classifier_.in_features();
  Tensor grad(n, f, 1, 1);
  for (int s = 0; s < n; ++s) {
    const float* x = features_.sample(s);
    float* gx = grad.sample(s);
    for (int o = 0; o < 2; ++o) {
      const float g = static_cast<float>(score_grad(s, o));
      classifier_.bias_grad[o] += g;
      float* gw = classifier_.weight_grad.data() + static_cast<std::size_t>(o) * f;
      const float* w = classifier_.weight.data() + static_cast<std::size_t>(o) * f;
      for (int i = 0; i < f; ++i) {
        gw[i] += g * x[i];
        gx[i] += g * w[i];
      }
    }
  }
  Tensor next;
  for (std::size_t i = trunk_.size(); i-- > 0;) {
    trunk_[i].backward(grad, &next);
    std::swap(grad, next);
  }
  concat_grad_ = std::move(grad);
  Tensor input_grad = backward_front(concat_grad_, want_input_grad);
  if (!want_input_grad) return std::nullopt;
  return input_grad;
}

Tensor Network::backward_from_concat(const Tensor& concat_grad) { return backward_front(concat_grad, true); }

Tensor Network::backward_front(const Tensor& concat_grad, bool want_input) {
  if (!concat_grad.same_shape(concat_)) throw Error("backward_from_concat: gradient shape mismatch");
  const Tensor* base_grad = &concat_grad;
  if (!second_.empty()) {
    split(concat_grad, base_grad_, second_grad_);
    base_grad = &base_grad_;
  }
  Tensor grad = *base_grad;
  Tensor next;
  for (std::size_t i = base_.size(); i-- > 0;) {
    base_[i].backward(grad, &next);
    std::swap(grad, next);
  }
  if (!second_.empty()) {
    Tensor grad2 = second_grad_;
    for (std::size_t i = second_.size(); i-- > 0;) {
      second_[i].backward(grad2, &next);
      std::swap(grad2, next);
    }
    Eigen::Map<Eigen::ArrayXf>(grad.data(), static_cast<Eigen::Index>(grad.size())) +=
        Eigen::Map<const Eigen::ArrayXf>(grad2.data(), static_cast<Eigen::Index>(grad2.size()));
  }
  Tensor input_grad;
  conv1_.backward(grad, want_input ? &input_grad : nullptr);
  return input_grad;
}

void Network::infer_trunk(const Tensor& batch, Tensor& features) const {
  validate_input(batch);
  Tensor stem, x, y, tmp;
  conv1_.infer(batch, stem);
  const Tensor* cur = &stem;
  for (const auto& block : base_) {
    block.infer(*cur, tmp);
    std::swap(x, tmp);
    cur = &x;
  }
  Tensor joined;
  if (second_.empty()) {
    joined = std::move(x);
  } else {
    cur = &stem;
    for (const auto& block : second_) {
      block.infer(*cur, tmp);
      std::swap(y, tmp);
      cur = &y;
    }
    concat(x, y, joined);
  }
  cur = &joined;
  for (const auto& block : trunk_) {
    block.infer(*cur, tmp);
    std::swap(x, tmp);
    cur = &x;
  }
  features = std::move(x);
}

ClassScores Network::infer(const Tensor& batch) const {
  Tensor features;
  infer_trunk(batch, features);
  ClassScores scores;
  linear_forward(classifier_, features, scores);
  return scores;
}

ClassScores Network::infer(const Tensor& batch, Embeddings& features) const {
  Tensor trunk;
  infer_trunk(batch, trunk);
  features.resize(trunk.batch(), trunk.channels());
  std::memcpy(features.data(), trunk.data(), sizeof(float) * trunk.size());
  ClassScores scores;
  linear_forward(classifier_, trunk, scores);
  return scores;
}

Embeddings Network::extract_features(const Tensor& batch) const {
  Tensor features;
  infer_trunk(batch, features);
  Embeddings out(features.batch(), features.channels());
  std::memcpy(out.data(), features.data(), sizeof(float) * features.size());
  return out;
}

BranchMaps Network::conv4_maps(const Tensor& batch) const {
  validate_input(batch);
  // Recompute through a private copy so this stays const.
  Network probe(*this);
  Tensor first(1, batch.channels(), batch.height(), batch.width());
  std::copy(batch.sample(0), batch.sample(0) + batch.sample_size(), first.data());
  probe.forward_to_concat(first, Mode::Eval);
  BranchMaps maps;
  maps.base = probe.base_.back().activation_output();
  if (!probe.second_.empty()) maps.second = probe.second_.back().activation_output();
  return maps;
}

void Network::zero_grad() {
  for (auto& p : parameters()) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

std::vector<ParameterView> Network::parameters() {
  std::vector<ParameterView> views;
  auto add_block = [&views](const std::string& name, ConvBlock& block) {
    views.push_back({name + ".weight", block.conv.weight, block.conv.weight_grad, true});
    views.push_back({name + ".bn.gamma", block.bn.gamma, block.bn.gamma_grad, false});
    views.push_back({name + ".bn.beta", block.bn.beta, block.bn.beta_grad, false});
  };
  add_block("conv1", conv1_);
  for (std::size_t i = 0; i < base_.size(); ++i) add_block("base.conv" + std::to_string(i + 2), base_[i]);
  for (std::size_t i = 0; i < second_.size(); ++i) add_block("new.conv" + std::to_string(i + 2), second_[i]);
  for (std::size_t i = 0; i < trunk_.size(); ++i) add_block("conv" + std::to_string(i + 5), trunk_[i]);
  views.push_back({"fc.weight", classifier_.weight, classifier_.weight_grad, true});
  views.push_back({"fc.bias", classifier_.bias, classifier_.bias_grad, false});
  return views;
}

std::vector<BufferView> Network::buffers() {
  std::vector<BufferView> views;
  auto add_block = [&views](const std::string& name, ConvBlock& block) {
    views.push_back({name + ".bn.running_mean", block.bn.running_mean});
    views.push_back({name + ".bn.running_var", block.bn.running_var});
  };
  add_block("conv1", conv1_);
  for (std::size_t i = 0; i < base_.size(); ++i) add_block("base.conv" + std::to_string(i + 2), base_[i]);
  for (std::size_t i = 0; i < second_.size(); ++i) add_block("new.conv" + std::to_string(i + 2), second_[i]);
  for (std::size_t i = 0; i < trunk_.size(); ++i) add_block("conv" + std::to_string(i + 5), trunk_[i]);
  return views;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : const_cast<Network*>(this)->parameters()) total += p.value.size();
  return total;
}

std::size_t count_parameters(const Network& network) { return network.parameter_count(); }

}  // namespace coldetect
