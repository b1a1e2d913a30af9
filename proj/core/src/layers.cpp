#include "coldetect/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Core>

#include "coldetect/error.hpp"

namespace coldetect {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Upper bound on patch-matrix elements per GEMM, sized to stay in L2. Small
// planes batch several samples into one GEMM; large planes are split into
// bands of output rows.
constexpr std::size_t kTileBudget = std::size_t{1} << 17;

using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

AlignedFloats& scratch(int slot, std::size_t size) {
  thread_local AlignedFloats buffers[3];
  auto& buffer = buffers[slot];
  if (buffer.size() < size) buffer.resize(size);
  return buffer;
}

// Writes the k*k*C x (rows*W_out) patch matrix for output rows
// [row0, row0 + rows) of one sample into `col`, whose rows are `ld` floats apart.
void im2col(const float* image, int channels, int side, int kernel, int pad, int row0, int rows, float* col,
            std::size_t ld) {
  const int out_side = side + 2 * pad - kernel + 1;
  for (int c = 0; c < channels; ++c) {
    const float* plane = image + static_cast<std::size_t>(c) * side * side;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        float* row = col + ((static_cast<std::size_t>(c) * kernel + ki) * kernel + kj) * ld;
        const int shift = kj - pad;
        const int x_lo = std::max(0, -shift);
        const int x_hi = std::min(out_side, side - shift);
        for (int r = 0; r < rows; ++r) {
          float* dst = row + static_cast<std::size_t>(r) * out_side;
          const int iy = row0 + r + ki - pad;
          if (iy < 0 || iy >= side || x_hi <= x_lo) {
            std::fill(dst, dst + out_side, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * side;
          std::fill(dst, dst + x_lo, 0.0f);
          std::memcpy(dst + x_lo, src + x_lo + shift, sizeof(float) * (x_hi - x_lo));
          std::fill(dst + x_hi, dst + out_side, 0.0f);
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patch gradients back into `image`.
void col2im(const float* col, std::size_t ld, int channels, int side, int kernel, int pad, int row0, int rows,
            float* image) {
  const int out_side = side + 2 * pad - kernel + 1;
  for (int c = 0; c < channels; ++c) {
    float* plane = image + static_cast<std::size_t>(c) * side * side;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const float* row = col + ((static_cast<std::size_t>(c) * kernel + ki) * kernel + kj) * ld;
        const int shift = kj - pad;
        const int x_lo = std::max(0, -shift);
        const int x_hi = std::min(out_side, side - shift);
        for (int r = 0; r < rows; ++r) {
          const int iy = row0 + r + ki - pad;
          if (iy < 0 || iy >= side) continue;
          const float* src = row + static_cast<std::size_t>(r) * out_side;
          float* dst = plane + static_cast<std::size_t>(iy) * side + shift;
          for (int x = x_lo; x < x_hi; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int pad)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), pad_(pad) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || pad < 0) {
    throw Error("invalid convolution geometry");
  }
  const std::size_t count = static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  weight.assign(count, 0.0f);
  weight_grad.assign(count, 0.0f);
}

void Conv2d::init(Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (in_channels_ * kernel_ * kernel_));
  for (auto& w : weight) w = static_cast<float>(std_dev * rng.normal());
}

void Conv2d::forward(const Tensor& in, Tensor& out) const {
  if (in.channels() != in_channels_ || in.height() != in.width()) {
    throw Error("conv: expected " + std::to_string(in_channels_) + " square input channels");
  }
  const int n = in.batch();
  const int side = in.height();
  const int out_side = output_side(side);
  if (out_side < 1) throw Error("conv: input smaller than kernel");
  out.reshape_uninitialized(n, out_channels_, out_side, out_side);

  const int k_dim = in_channels_ * kernel_ * kernel_;
  const std::size_t positions = static_cast<std::size_t>(out_side) * out_side;
  ConstMatrixMap w(weight.data(), out_channels_, k_dim);

  if (kernel_ == 1 && pad_ == 0) {
    for (int s = 0; s < n; ++s) {
      ConstMatrixMap x(in.sample(s), in_channels_, positions);
      MatrixMap y(out.sample(s), out_channels_, positions);
      y.noalias() = w * x;
    }
    return;
  }

  const std::size_t per_sample = static_cast<std::size_t>(k_dim) * positions;
  if (per_sample > kTileBudget) {
    const int band = static_cast<int>(std::max<std::size_t>(1, kTileBudget / (static_cast<std::size_t>(k_dim) * out_side)));
    auto& col = scratch(0, static_cast<std::size_t>(k_dim) * band * out_side);
    for (int s = 0; s < n; ++s) {
      for (int row0 = 0; row0 < out_side; row0 += band) {
        const int rows = std::min(band, out_side - row0);
        const std::size_t ld = static_cast<std::size_t>(rows) * out_side;
        im2col(in.sample(s), in_channels_, side, kernel_, pad_, row0, rows, col.data(), ld);
        StridedMap y(out.plane(s, 0) + static_cast<std::size_t>(row0) * out_side, out_channels_, ld,
                     Eigen::OuterStride<>(positions));
        y.noalias() = w * ConstMatrixMap(col.data(), k_dim, ld);
      }
    }
    return;
  }

  const int chunk = static_cast<int>(std::clamp<std::size_t>(kTileBudget / per_sample, 1, n));
  for (int s0 = 0; s0 < n; s0 += chunk) {
    const int count = std::min(chunk, n - s0);
    const std::size_t ld = positions * count;
    auto& col = scratch(0, k_dim * ld);
    for (int s = 0; s < count; ++s) {
      im2col(in.sample(s0 + s), in_channels_, side, kernel_, pad_, 0, out_side, col.data() + s * positions, ld);
    }
    ConstMatrixMap cols(col.data(), k_dim, ld);
    if (count == 1) {
      MatrixMap y(out.sample(s0), out_channels_, positions);
      y.noalias() = w * cols;
      continue;
    }
    auto& result = scratch(1, out_channels_ * ld);
    MatrixMap y(result.data(), out_channels_, ld);
    y.noalias() = w * cols;
    for (int s = 0; s < count; ++s) {
      for (int c = 0; c < out_channels_; ++c) {
        std::memcpy(out.plane(s0 + s, c), result.data() + c * ld + s * positions, sizeof(float) * positions);
      }
    }
  }
}

void Conv2d::backward(const Tensor& in, const Tensor& dout, Tensor* din) {
  const int n = in.batch();
  const int side = in.height();
  const int out_side = output_side(side);
  const int k_dim = in_channels_ * kernel_ * kernel_;
  const std::size_t positions = static_cast<std::size_t>(out_side) * out_side;
  if (dout.batch() != n || dout.channels() != out_channels_ || dout.height() != out_side) {
    throw Error("conv backward: gradient shape mismatch");
  }
  ConstMatrixMap w(weight.data(), out_channels_, k_dim);
  MatrixMap dw(weight_grad.data(), out_channels_, k_dim);
  if (din != nullptr) din->resize(n, in_channels_, side, side);

  if (kernel_ == 1 && pad_ == 0) {
    for (int s = 0; s < n; ++s) {
      ConstMatrixMap x(in.sample(s), in_channels_, positions);
      ConstMatrixMap dy(dout.sample(s), out_channels_, positions);
      dw.noalias() += dy * x.transpose();
      if (din != nullptr) {
        MatrixMap dx(din->sample(s), in_channels_, positions);
        dx.noalias() = w.transpose() * dy;
      }
    }
    return;
  }

  const std::size_t per_sample = static_cast<std::size_t>(k_dim) * positions;
  if (per_sample > kTileBudget) {
    const int band = static_cast<int>(std::max<std::size_t>(1, kTileBudget / (static_cast<std::size_t>(k_dim) * out_side)));
    const std::size_t max_ld = static_cast<std::size_t>(band) * out_side;
    auto& col = scratch(0, k_dim * max_ld);
    auto& dcol_buffer = scratch(2, k_dim * max_ld);
    for (int s = 0; s < n; ++s) {
      for (int row0 = 0; row0 < out_side; row0 += band) {
        const int rows = std::min(band, out_side - row0);
        const std::size_t ld = static_cast<std::size_t>(rows) * out_side;
        im2col(in.sample(s), in_channels_, side, kernel_, pad_, row0, rows, col.data(), ld);
        ConstStridedMap dy(dout.plane(s, 0) + static_cast<std::size_t>(row0) * out_side, out_channels_, ld,
                           Eigen::OuterStride<>(positions));
        dw.noalias() += dy * ConstMatrixMap(col.data(), k_dim, ld).transpose();
        if (din != nullptr) {
          MatrixMap dcol(dcol_buffer.data(), k_dim, ld);
          dcol.noalias() = w.transpose() * dy;
          col2im(dcol_buffer.data(), ld, in_channels_, side, kernel_, pad_, row0, rows, din->sample(s));
        }
      }
    }
    return;
  }

  const int chunk = static_cast<int>(std::clamp<std::size_t>(kTileBudget / per_sample, 1, n));
  for (int s0 = 0; s0 < n; s0 += chunk) {
    const int count = std::min(chunk, n - s0);
    const std::size_t ld = positions * count;
    auto& col = scratch(0, k_dim * ld);
    for (int s = 0; s < count; ++s) {
      im2col(in.sample(s0 + s), in_channels_, side, kernel_, pad_, 0, out_side, col.data() + s * positions, ld);
    }
    const float* dy_data = dout.sample(s0);
    if (count > 1) {
      auto& gathered = scratch(1, out_channels_ * ld);
      for (int s = 0; s < count; ++s) {
        for (int c = 0; c < out_channels_; ++c) {
          std::memcpy(gathered.data() + c * ld + s * positions, dout.plane(s0 + s, c), sizeof(float) * positions);
        }
      }
      dy_data = gathered.data();
    }
    ConstMatrixMap dy(dy_data, out_channels_, ld);
    ConstMatrixMap cols(col.data(), k_dim, ld);
    dw.noalias() += dy * cols.transpose();
    if (din != nullptr) {
      auto& dcol_buffer = scratch(2, k_dim * ld);
      MatrixMap dcol(dcol_buffer.data(), k_dim, ld);
      dcol.noalias() = w.transpose() * dy;
      for (int s = 0; s < count; ++s) {
        col2im(dcol_buffer.data() + s * positions, ld, in_channels_, side, kernel_, pad_, 0, out_side,
               din->sample(s0 + s));
      }
    }
  }
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels)
    : gamma(channels, 1.0f),
      beta(channels, 0.0f),
      gamma_grad(channels, 0.0f),
      beta_grad(channels, 0.0f),
      running_mean(channels, 0.0f),
      running_var(channels, 1.0f),
      batch_inv_std_(channels, 1.0f) {}

void BatchNorm2d::forward_train(Tensor& x, Tensor& y) {
  const int n = x.batch();
  const std::size_t plane = x.plane_size();
  const double count = static_cast<double>(n) * plane;
  if (count < 2) throw Error("batch norm: training needs more than one value per channel");
  y.reshape_uninitialized(n, x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    double sum = 0.0;
    for (int s = 0; s < n; ++s) {
      sum += Eigen::Map<const Eigen::ArrayXf>(x.plane(s, c), plane).sum();
    }
    const double mean = sum / count;
    const float mean_f = static_cast<float>(mean);
    double squares = 0.0;
    for (int s = 0; s < n; ++s) {
      squares += (Eigen::Map<const Eigen::ArrayXf>(x.plane(s, c), plane) - mean_f).square().sum();
    }
    const double var = squares / count;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    batch_inv_std_[c] = static_cast<float>(inv_std);
    const float m = static_cast<float>(mean), is = static_cast<float>(inv_std);
    for (int s = 0; s < n; ++s) {
      Eigen::Map<Eigen::ArrayXf> xh(x.plane(s, c), plane);
      xh = (xh - m) * is;
      Eigen::Map<Eigen::ArrayXf>(y.plane(s, c), plane) = xh * gamma[c] + beta[c];
    }
    running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] + momentum * mean);
    running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] + momentum * var * count / (count - 1.0));
  }
}

void BatchNorm2d::forward_eval(const Tensor& x, Tensor& y) const {
  const std::size_t plane = x.plane_size();
  if (!y.same_shape(x)) y.reshape_uninitialized(x.batch(), x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    const float scale = static_cast<float>(gamma[c] / std::sqrt(static_cast<double>(running_var[c]) + eps));
    const float shift = beta[c] - running_mean[c] * scale;
    for (int s = 0; s < x.batch(); ++s) {
      Eigen::Map<Eigen::ArrayXf>(y.plane(s, c), plane) =
          Eigen::Map<const Eigen::ArrayXf>(x.plane(s, c), plane) * scale + shift;
    }
  }
}

void BatchNorm2d::backward_train(const Tensor& x_hat, const Tensor& dy, Tensor& dx) {
  const int n = dy.batch();
  const std::size_t plane = dy.plane_size();
  const double count = static_cast<double>(n) * plane;
  if (!dx.same_shape(dy)) dx.reshape_uninitialized(n, dy.channels(), dy.height(), dy.width());
  for (int c = 0; c < dy.channels(); ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int s = 0; s < n; ++s) {
      Eigen::Map<const Eigen::ArrayXf> g(dy.plane(s, c), plane);
      Eigen::Map<const Eigen::ArrayXf> xh(x_hat.plane(s, c), plane);
      sum_dy += g.sum();
      sum_dy_xhat += (g * xh).sum();
    }
    gamma_grad[c] += static_cast<float>(sum_dy_xhat);
    beta_grad[c] += static_cast<float>(sum_dy);
    const float scale = static_cast<float>(gamma[c] * batch_inv_std_[c]);
    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
    for (int s = 0; s < n; ++s) {
      Eigen::Map<const Eigen::ArrayXf> g(dy.plane(s, c), plane);
      Eigen::Map<const Eigen::ArrayXf> xh(x_hat.plane(s, c), plane);
      Eigen::Map<Eigen::ArrayXf>(dx.plane(s, c), plane) = scale * (g - mean_dy - xh * mean_dy_xhat);
    }
  }
}

void BatchNorm2d::backward_eval(const Tensor& dy, Tensor& dx) const {
  const std::size_t plane = dy.plane_size();
  if (!dx.same_shape(dy)) dx.reshape_uninitialized(dy.batch(), dy.channels(), dy.height(), dy.width());
  for (int c = 0; c < dy.channels(); ++c) {
    const float scale = static_cast<float>(gamma[c] / std::sqrt(static_cast<double>(running_var[c]) + eps));
    for (int s = 0; s < dy.batch(); ++s) {
      Eigen::Map<Eigen::ArrayXf>(dx.plane(s, c), plane) = Eigen::Map<const Eigen::ArrayXf>(dy.plane(s, c), plane) * scale;
    }
  }
}

// ----------------------------------------------------------- activations

void activate(Activation activation, Tensor& x) {
  auto values = Eigen::Map<Eigen::ArrayXf>(x.data(), static_cast<Eigen::Index>(x.size()));
  switch (activation) {
    case Activation::None: return;
    case Activation::ReLU: values = values.max(0.0f); return;
    case Activation::TanH: values = values.tanh(); return;
  }
}

void activate_backward(Activation activation, const Tensor& out, Tensor& grad) {
  auto g = Eigen::Map<Eigen::ArrayXf>(grad.data(), static_cast<Eigen::Index>(grad.size()));
  auto y = Eigen::Map<const Eigen::ArrayXf>(out.data(), static_cast<Eigen::Index>(out.size()));
  switch (activation) {
    case Activation::None: return;
    case Activation::ReLU: g = (y > 0.0f).select(g, 0.0f); return;
    case Activation::TanH: g = g * (1.0f - y.square()); return;
  }
}

// -------------------------------------------------------------- pooling

void max_pool_forward(const Tensor& in, Tensor& out, std::vector<std::int32_t>* argmax) {
  const int side = in.height();
  if (side < 3) throw Error("max-pool: input smaller than the 3x3 window");
  const int out_side = pooled_side(side);
  out.reshape_uninitialized(in.batch(), in.channels(), out_side, out_side);
  if (argmax != nullptr) argmax->resize(out.size());
  // Vertical max over three full rows (contiguous, vectorizes), then the
  // strided horizontal max. Ties go to the leftmost column, then the top row.
  thread_local AlignedFloats column_max;
  thread_local std::vector<std::int32_t> column_arg;
  column_max.resize(side);
  column_arg.resize(side);
  float* vm = column_max.data();
  std::int32_t* va = column_arg.data();
  const std::size_t out_plane = out.plane_size();
  for (int s = 0; s < in.batch(); ++s) {
    for (int c = 0; c < in.channels(); ++c) {
      const float* src = in.plane(s, c);
      float* dst = out.plane(s, c);
      std::int32_t* arg =
          argmax != nullptr ? argmax->data() + (static_cast<std::size_t>(s) * in.channels() + c) * out_plane : nullptr;
      for (int oy = 0; oy < out_side; ++oy) {
        const int y0 = 2 * oy;
        const float* r0 = src + static_cast<std::size_t>(y0) * side;
        const float* r1 = r0 + side;
        const float* r2 = r1 + side;
        float* d = dst + static_cast<std::size_t>(oy) * out_side;
        if (arg == nullptr) {
          for (int x = 0; x < side; ++x) vm[x] = std::max(std::max(r0[x], r1[x]), r2[x]);
          for (int ox = 0; ox < out_side; ++ox) {
            d[ox] = std::max(std::max(vm[2 * ox], vm[2 * ox + 1]), vm[2 * ox + 2]);
          }
          continue;
        }
        for (int x = 0; x < side; ++x) {
          float m = r0[x];
          std::int32_t k = y0 * side + x;
          k = r1[x] > m ? k + side : k;
          m = r1[x] > m ? r1[x] : m;
          k = r2[x] > m ? (y0 + 2) * side + x : k;
          m = r2[x] > m ? r2[x] : m;
          vm[x] = m;
          va[x] = k;
        }
        std::int32_t* g = arg + static_cast<std::size_t>(oy) * out_side;
        for (int ox = 0; ox < out_side; ++ox) {
          const float a = vm[2 * ox], b = vm[2 * ox + 1], e = vm[2 * ox + 2];
          std::int32_t k = b > a ? 1 : 0;
          const float m = b > a ? b : a;
          k = e > m ? 2 : k;
          d[ox] = e > m ? e : m;
          g[ox] = k;
        }
        for (int ox = 0; ox < out_side; ++ox) g[ox] = va[2 * ox + g[ox]];
      }
    }
  }
}

void max_pool_backward(const std::vector<std::int32_t>& argmax, const Tensor& dout, Tensor& din) {
  if (din.batch() != dout.batch() || din.channels() != dout.channels() ||
      pooled_side(din.height()) != dout.height() || argmax.size() != dout.size()) {
    throw Error("max_pool_backward: din must have the pooled input's shape");
  }
  din.fill(0.0f);
  const std::size_t out_plane = dout.plane_size();
  std::size_t index = 0;
  for (int s = 0; s < dout.batch(); ++s) {
    for (int c = 0; c < dout.channels(); ++c) {
      const float* g = dout.plane(s, c);
      float* dst = din.plane(s, c);
      for (std::size_t p = 0; p < out_plane; ++p, ++index) dst[argmax[index]] += g[p];
    }
  }
}

// ------------------------------------------------------------ ConvBlock

ConvBlock::ConvBlock(const BlockSpec& spec)
    : conv(spec.in_channels, spec.out_channels, spec.kernel, spec.pad), bn(spec.out_channels), spec_(spec) {}

void ConvBlock::infer(const Tensor& in, Tensor& out) const {
  Tensor conv_out;
  conv.forward(in, conv_out);
  bn.forward_eval(conv_out, conv_out);
  activate(spec_.activation, conv_out);
  if (spec_.pool) {
    max_pool_forward(conv_out, out, nullptr);
  } else {
    out = std::move(conv_out);
  }
}

const Tensor& ConvBlock::forward(const Tensor& in, Mode mode) {
  mode_ = mode;
  input_ = &in;
  conv.forward(in, normalized_);
  if (mode == Mode::Train) {
    bn.forward_train(normalized_, act_);
  } else {
    bn.forward_eval(normalized_, act_);
  }
  activate(spec_.activation, act_);
  if (!spec_.pool) return act_;
  max_pool_forward(act_, out_, &argmax_);
  return out_;
}

void ConvBlock::backward(const Tensor& dout, Tensor* din) {
  if (input_ == nullptr) throw Error("ConvBlock::backward without forward");
  if (spec_.pool) {
    grad_.reshape_uninitialized(act_.batch(), act_.channels(), act_.height(), act_.width());
    max_pool_backward(argmax_, dout, grad_);
  } else {
    grad_ = dout;
  }
  activate_backward(spec_.activation, act_, grad_);
  // Batch-norm gradients are elementwise per channel after the reductions,
  // so they can be written in place.
  if (mode_ == Mode::Train) {
    bn.backward_train(normalized_, grad_, grad_);
  } else {
    bn.backward_eval(grad_, grad_);
  }
  conv.backward(*input_, grad_, din);
}

// --------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features)
    : weight(static_cast<std::size_t>(in_features) * out_features, 0.0f),
      bias(out_features, 0.0f),
      weight_grad(weight.size(), 0.0f),
      bias_grad(out_features, 0.0f),
      in_features_(in_features),
      out_features_(out_features) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features_));
  for (auto& w : weight) w = static_cast<float>(rng.uniform(-bound, bound));
  for (auto& b : bias) b = static_cast<float>(rng.uniform(-bound, bound));
}

}  // namespace coldetect
