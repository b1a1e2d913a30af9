#include "coldetect/tensor.hpp"

#include <algorithm>

#include "coldetect/error.hpp"

namespace coldetect {

void Tensor::resize(int n, int c, int h, int w, float fill) {
  reshape_uninitialized(n, c, h, w);
  std::fill(data_.begin(), data_.end(), fill);
}

void Tensor::reshape_uninitialized(int n, int c, int h, int w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw Error("negative tensor dimension");
  n_ = n;
  c_ = c;
  h_ = h;
  w_ = w;
  data_.resize(static_cast<std::size_t>(n) * c * h * w);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace coldetect
