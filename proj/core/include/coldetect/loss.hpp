#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace coldetect {

/// Class labels. Column 0 of a score row is the CI score, column 1 the NI score.
enum Label : int { kColorized = 0, kNatural = 1 };

/// Per-sample (c_0, c_1) scores.
using ClassScores = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct LossResult {
  double loss = 0.0;
  /// d loss / d scores, same shape as the scores.
  ClassScores grad;
};

/// Mean softmax cross-entropy, evaluated with log-sum-exp.
LossResult cross_entropy(const ClassScores& scores, std::span<const int> labels);
double cross_entropy_loss(const ClassScores& scores, std::span<const int> labels);

/// Argmax per row; an exact tie predicts kColorized.
std::vector<int> predict(const ClassScores& scores);

}  // namespace coldetect
