#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coldetect/checkpoint.hpp"
#include "coldetect/dataset.hpp"
#include "coldetect/evaluator.hpp"
#include "coldetect/network.hpp"

namespace coldetect {

struct TrainingSchedule {
  double lr0 = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int stage1_epochs = 60;
  int stage1_decay_every = 20;
  /// S: epochs trained after each negative insertion.
  int epochs_per_insertion = 15;
  /// One interpolation factor per insertion, ascending.
  std::vector<double> alphas{0.1, 0.2, 0.3, 0.4};
  double stage2_lr0 = 1e-4;
  /// Drives minibatch order. Weight initialization uses ModelConfig::seed.
  std::uint64_t seed = 0;

  void validate() const;
  int insertions() const { return static_cast<int>(alphas.size()); }
  /// lr0 * 10^-floor(epoch / stage1_decay_every), epoch 0-based.
  double stage1_lr(int epoch) const;
  /// stage2_lr0 * 10^-insertion, insertion 0-based.
  double stage2_lr(int insertion) const;
  /// First 1-based epoch within an insertion whose model becomes a candidate.
  int first_candidate_epoch() const { return (epochs_per_insertion + 1) / 2; }
};

struct EnhanceParams {
  double beta = 2.0;
};

/// theta = beta * error_rate when error_rate >= 1 %, otherwise 2 %.
double compute_threshold(double error_rate, double beta);

struct CurveRecord {
  int stage = 1;
  /// Global 0-based epoch; stage 2 continues the stage-1 numbering.
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  /// Running accuracy over the epoch's minibatches, percent.
  double train_accuracy = 0.0;
  /// Error on the natural validation set, percent; NaN when none is given.
  double validation_error = 0.0;
  /// HTER on each monitored test set, percent.
  std::vector<std::pair<std::string, double>> monitors;

  bool operator==(const CurveRecord&) const = default;
};

struct LearningCurve {
  std::vector<CurveRecord> records;

  /// First stage-2 epoch, or -1 when the curve has a single stage.
  int stage_boundary() const;
};

void write_curve(const std::filesystem::path& path, const LearningCurve& curve);
void append_curve(const std::filesystem::path& path, const LearningCurve& curve);
LearningCurve read_curve(const std::filesystem::path& path);

/// Optional per-epoch evaluation. Everything here is evaluated in eval mode.
struct Monitor {
  std::vector<ImageRef> validation;
  std::vector<TestSet> tests;
};

using EpochCallback = std::function<void(const CurveRecord&)>;

/// SGD with heavy-ball momentum: v = mu * v + (g + wd * w); w -= lr * v.
/// Decay only touches parameters flagged for it.
class SgdMomentum {
 public:
  SgdMomentum(Network& network, double momentum, double weight_decay);

  void step(double learning_rate);
  std::vector<NamedArray> state() const;
  void load_state(const std::vector<NamedArray>& state);

 private:
  Network& network_;
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

struct TrainResult {
  Checkpoint checkpoint;
  LearningCurve curve;
};

/// Stage 1: trains from scratch for schedule.stage1_epochs. Throws
/// DivergenceError on a non-finite loss.
TrainResult train_initial(const ModelConfig& config, const TrainingPool& data, const TrainingSchedule& schedule,
                          const Monitor& monitor = {}, const EpochCallback& on_epoch = {});

/// Percentage of `images` classified with their own label.
double training_accuracy(const Network& network, const TrainingPool& data);

struct Candidate {
  int insertion = 0;
  /// 1-based epoch within the insertion.
  int stage_epoch = 0;
  /// Global 0-based epoch.
  int epoch = 0;
  double error_rate = 0.0;
};

struct InsertionTrace {
  double alpha = 0.0;
  double learning_rate = 0.0;
  std::size_t pairs_at_start = 0;
  std::size_t negatives = 0;
  std::size_t removed = 0;
};

struct EnhanceTrace {
  double initial_error_rate = 0.0;
  double threshold = 0.0;
  std::vector<InsertionTrace> insertions;
  std::vector<Candidate> candidates;
  std::size_t selected = 0;
};

struct EnhanceResult {
  /// The selected candidate.
  Checkpoint checkpoint;
  /// State after the last insertion, for inspection or resumption.
  Checkpoint last;
  LearningCurve curve;
  EnhanceTrace trace;
};

using CandidateCallback = std::function<void(const Candidate&, const Network&)>;

/// Stage 2: negative sample insertion starting from a stage-1 checkpoint.
/// `data` is the stage-1 training pool and `pairs` the pairs built from it.
/// Negatives accumulate in the CI pool; a pair whose negative is classified
/// NI after its stage leaves `pairs`.
EnhanceResult enhance_with_negatives(const Checkpoint& start, const TrainingPool& data, PairSet pairs,
                                     std::span<const ImageRef> validation, const TrainingSchedule& schedule,
                                     const EnhanceParams& params, const Monitor& monitor = {},
                                     const EpochCallback& on_epoch = {}, const CandidateCallback& on_candidate = {});

/// Largest r_i below theta (latest on ties); without one, the smallest r_i
/// (latest on ties).
std::size_t select_final_model(std::span<const double> error_rates, double theta);

void write_trace(const std::filesystem::path& path, const EnhanceTrace& trace);
EnhanceTrace read_trace(const std::filesystem::path& path);

}  // namespace coldetect
