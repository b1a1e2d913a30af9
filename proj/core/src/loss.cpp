#include "coldetect/loss.hpp"

#include <cmath>

#include "coldetect/error.hpp"

namespace coldetect {

LossResult cross_entropy(const ClassScores& scores, std::span<const int> labels) {
  const auto n = scores.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw Error("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  if (n == 0) throw Error("cross_entropy: empty batch");
  LossResult result;
  result.grad.resize(n, 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y != kColorized && y != kNatural) {
      throw Error("cross_entropy: label " + std::to_string(y) + " outside {0,1}");
    }
    const double c0 = scores(i, 0), c1 = scores(i, 1);
    const double top = std::max(c0, c1);
    const double e0 = std::exp(c0 - top), e1 = std::exp(c1 - top);
    const double log_sum = top + std::log(e0 + e1);
    total += log_sum - scores(i, y);
    const double p0 = e0 / (e0 + e1);
    const double p1 = e1 / (e0 + e1);
    result.grad(i, 0) = (p0 - (y == 0 ? 1.0 : 0.0)) / static_cast<double>(n);
    result.grad(i, 1) = (p1 - (y == 1 ? 1.0 : 0.0)) / static_cast<double>(n);
  }
  result.loss = total / static_cast<double>(n);
  return result;
}

double cross_entropy_loss(const ClassScores& scores, std::span<const int> labels) {
  return cross_entropy(scores, labels).loss;
}

std::vector<int> predict(const ClassScores& scores) {
  std::vector<int> labels(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    labels[i] = scores(i, 1) > scores(i, 0) ? kNatural : kColorized;
  }
  return labels;
}

}  // namespace coldetect
