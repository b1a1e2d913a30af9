#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace coldetect {

/// Float storage aligned for the widest SIMD width Eigen targets. Vectorized
/// reductions then peel identically on every allocation, which keeps results
/// bit-reproducible across runs.
using AlignedFloats = std::vector<float, Eigen::aligned_allocator<float>>;

/// Dense NCHW float tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f) { resize(n, c, h, w, fill); }

  void resize(int n, int c, int h, int w, float fill = 0.0f);
  /// Changes the shape without touching existing storage contents.
  void reshape_uninitialized(int n, int c, int h, int w);

  int batch() const { return n_; }
  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const { return plane_size() * c_; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const {
    return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float* sample(int i) { return data_.data() + i * sample_size(); }
  const float* sample(int i) const { return data_.data() + i * sample_size(); }
  float* plane(int i, int c) { return sample(i) + c * plane_size(); }
  const float* plane(int i, int c) const { return sample(i) + c * plane_size(); }
  float& at(int i, int c, int y, int x) { return plane(i, c)[y * w_ + x]; }
  float at(int i, int c, int y, int x) const { return plane(i, c)[y * w_ + x]; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  void fill(float value);

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  AlignedFloats data_;
};

}  // namespace coldetect
