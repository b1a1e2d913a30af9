#include "coldetect/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "coldetect/error.hpp"
#include "coldetect/rng.hpp"

namespace coldetect {

using nlohmann::ordered_json;

void TrainingSchedule::validate() const {
  if (!(lr0 > 0.0) || !(stage2_lr0 > 0.0)) throw Error("schedule: learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("schedule: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error("schedule: weight_decay must be non-negative");
  if (stage1_epochs < 1 || stage1_decay_every < 1 || epochs_per_insertion < 1) {
    throw Error("schedule: epoch counts must be positive");
  }
  if (alphas.empty()) throw Error("schedule: at least one insertion is required");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) throw Error("schedule: every alpha must lie in (0, 1)");
    if (i > 0 && !(alphas[i] > alphas[i - 1])) throw Error("schedule: alphas must be strictly ascending");
  }
}

double TrainingSchedule::stage1_lr(int epoch) const { return lr0 * std::pow(10.0, -(epoch / stage1_decay_every)); }

double TrainingSchedule::stage2_lr(int insertion) const { return stage2_lr0 * std::pow(10.0, -insertion); }

double compute_threshold(double error_rate, double beta) { return error_rate >= 1.0 ? beta * error_rate : 2.0; }

int LearningCurve::stage_boundary() const {
  for (const auto& r : records) {
    if (r.stage == 2) return r.epoch;
  }
  return -1;
}

SgdMomentum::SgdMomentum(Network& network, double momentum, double weight_decay)
    : network_(network), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : network_.parameters()) velocity_.emplace_back(p.value.size(), 0.0f);
}

void SgdMomentum::step(double learning_rate) {
  const auto params = network_.parameters();
  const float mu = static_cast<float>(momentum_);
  const float lr = static_cast<float>(learning_rate);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    const float wd = p.decay ? static_cast<float>(weight_decay_) : 0.0f;
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = mu * v[i] + (p.grad[i] + wd * p.value[i]);
      p.value[i] -= lr * v[i];
    }
  }
}

std::vector<NamedArray> SgdMomentum::state() const {
  std::vector<NamedArray> out;
  const auto params = network_.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) out.push_back({params[k].name, velocity_[k]});
  return out;
}

void SgdMomentum::load_state(const std::vector<NamedArray>& state) {
  const auto params = network_.parameters();
  if (state.size() != params.size()) throw Error("optimizer state does not match the network");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state[k].name != params[k].name || state[k].values.size() != velocity_[k].size()) {
      throw Error("optimizer state '" + state[k].name + "' does not match the network");
    }
    velocity_[k] = state[k].values;
  }
}

namespace {

struct EpochOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
};

EpochOutcome run_epoch(Network& network, SgdMomentum& optimizer, const TrainingPool& pool, std::uint64_t seed,
                       int epoch, double learning_rate) {
  const auto plans = epoch_batches(pool.natural.size(), pool.colorized.size(), seed, epoch);
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  for (const auto& plan : plans) {
    const Minibatch batch = assemble(pool, plan);
    network.zero_grad();
    const ClassScores scores = network.forward(batch.images, Mode::Train);
    const LossResult loss = cross_entropy(scores, batch.labels);
    if (!std::isfinite(loss.loss)) {
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
    }
    network.backward(loss.grad);
    optimizer.step(learning_rate);
    loss_sum += loss.loss;
    const auto predicted = predict(scores);
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
    seen += predicted.size();
  }
  return {loss_sum / static_cast<double>(plans.size()), 100.0 * static_cast<double>(correct) / seen};
}

CurveRecord make_record(int stage, int epoch, double lr, const EpochOutcome& outcome, const Network& network,
                        std::span<const ImageRef> validation, std::span<const TestSet> tests) {
  CurveRecord record;
  record.stage = stage;
  record.epoch = epoch;
  record.learning_rate = lr;
  record.train_loss = outcome.loss;
  record.train_accuracy = outcome.accuracy;
  const NetworkClassifier classifier(network);
  record.validation_error =
      validation.empty() ? std::numeric_limits<double>::quiet_NaN() : natural_error_rate(classifier, validation);
  for (const auto& t : tests) record.monitors.emplace_back(t.method, hter(classifier, t.natural, t.colorized).hter());
  return record;
}

Checkpoint snapshot(Network& network, const SgdMomentum& optimizer, int epochs_done, double lr,
                    std::uint64_t seed) {
  Checkpoint checkpoint = capture(network);
  checkpoint.momentum = optimizer.state();
  checkpoint.epoch = epochs_done;
  checkpoint.learning_rate = lr;
  checkpoint.rng_state = Rng(seed).state();
  return checkpoint;
}

}  // namespace

TrainResult train_initial(const ModelConfig& config, const TrainingPool& data, const TrainingSchedule& schedule,
                          const Monitor& monitor, const EpochCallback& on_epoch) {
  schedule.validate();
  Network network(config);
  SgdMomentum optimizer(network, schedule.momentum, schedule.weight_decay);
  TrainResult result;
  double lr = schedule.lr0;
  for (int epoch = 0; epoch < schedule.stage1_epochs; ++epoch) {
    lr = schedule.stage1_lr(epoch);
    const auto outcome = run_epoch(network, optimizer, data, schedule.seed, epoch, lr);
    result.curve.records.push_back(make_record(1, epoch, lr, outcome, network, monitor.validation, monitor.tests));
    if (on_epoch) on_epoch(result.curve.records.back());
  }
  result.checkpoint = snapshot(network, optimizer, schedule.stage1_epochs, lr, schedule.seed);
  return result;
}

double training_accuracy(const Network& network, const TrainingPool& data) {
  const NetworkClassifier classifier(network);
  const auto report = report_from_predictions(classifier.classify(data.natural), classifier.classify(data.colorized));
  const auto& c = report.counts;
  return 100.0 * static_cast<double>(c.ni_total + c.ci_total - c.ni_wrong - c.ci_wrong) /
         static_cast<double>(c.ni_total + c.ci_total);
}

std::size_t select_final_model(std::span<const double> error_rates, double theta) {
  if (error_rates.empty()) throw Error("select_final_model: no candidates");
  std::optional<std::size_t> below;
  std::size_t lowest = 0;
  for (std::size_t i = 0; i < error_rates.size(); ++i) {
    const double r = error_rates[i];
    if (r < theta && (!below || r >= error_rates[*below])) below = i;
    if (r <= error_rates[lowest]) lowest = i;
  }
  return below.value_or(lowest);
}

EnhanceResult enhance_with_negatives(const Checkpoint& start, const TrainingPool& data, PairSet pairs,
                                     std::span<const ImageRef> validation, const TrainingSchedule& schedule,
                                     const EnhanceParams& params, const Monitor& monitor,
                                     const EpochCallback& on_epoch, const CandidateCallback& on_candidate) {
  schedule.validate();
  if (!(params.beta > 0.0)) throw Error("enhance: beta must be positive");
  if (validation.empty()) throw Error("enhance: empty natural validation set");

  Network network = restore_network(start);
  SgdMomentum optimizer(network, schedule.momentum, schedule.weight_decay);
  if (!start.momentum.empty()) optimizer.load_state(start.momentum);

  EnhanceResult result;
  EnhanceTrace& trace = result.trace;
  trace.initial_error_rate = natural_error_rate(NetworkClassifier(network), validation);
  trace.threshold = compute_threshold(trace.initial_error_rate, params.beta);

  // Only the candidates select_final_model can return are kept in memory.
  std::vector<double> rates;
  std::optional<std::size_t> below_index;
  std::size_t lowest_index = 0;
  Checkpoint below_state, lowest_state;

  TrainingPool pool = data;
  int epoch = start.epoch;
  double lr = schedule.stage2_lr0;
  for (int k = 0; k < schedule.insertions(); ++k) {
    if (pairs.empty()) {
      throw Error("enhance: pair set is empty at insertion " + std::to_string(k + 1) +
                  "; every negative of the previous stage was classified natural");
    }
    InsertionTrace step;
    step.alpha = schedule.alphas[k];
    step.learning_rate = lr = schedule.stage2_lr(k);
    step.pairs_at_start = pairs.size();

    std::vector<ImageRef> negatives;
    negatives.reserve(pairs.size());
    for (const auto& pair : pairs) {
      negatives.push_back(std::make_shared<const NormalizedImage>(make_negative_sample(pair, step.alpha).image));
    }
    step.negatives = negatives.size();
    pool.colorized.insert(pool.colorized.end(), negatives.begin(), negatives.end());

    for (int e = 1; e <= schedule.epochs_per_insertion; ++e, ++epoch) {
      const auto outcome = run_epoch(network, optimizer, pool, schedule.seed, epoch, lr);
      result.curve.records.push_back(make_record(2, epoch, lr, outcome, network, validation, monitor.tests));
      const CurveRecord& record = result.curve.records.back();
      if (on_epoch) on_epoch(record);
      if (e < schedule.first_candidate_epoch()) continue;

      const Candidate candidate{k, e, epoch, record.validation_error};
      const std::size_t index = rates.size();
      trace.candidates.push_back(candidate);
      rates.push_back(candidate.error_rate);
      const double r = candidate.error_rate;
      if (r < trace.threshold && (!below_index || r >= rates[*below_index])) {
        below_index = index;
        below_state = snapshot(network, optimizer, epoch + 1, lr, schedule.seed);
      }
      if (index == 0 || r <= rates[lowest_index]) {
        lowest_index = index;
        if (!below_index) lowest_state = snapshot(network, optimizer, epoch + 1, lr, schedule.seed);
      }
      if (on_candidate) on_candidate(candidate, network);
    }

    const auto predicted = NetworkClassifier(network).classify(negatives);
    PairSet kept;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (predicted[i] == kNatural) {
        ++step.removed;
      } else {
        kept.push_back(std::move(pairs[i]));
      }
    }
    pairs = std::move(kept);
    trace.insertions.push_back(step);
  }

  trace.selected = select_final_model(rates, trace.threshold);
  if (below_index) {
    if (trace.selected != *below_index) throw Error("enhance: internal selection mismatch");
    result.checkpoint = std::move(below_state);
  } else {
    if (trace.selected != lowest_index) throw Error("enhance: internal selection mismatch");
    result.checkpoint = std::move(lowest_state);
  }
  result.last = snapshot(network, optimizer, epoch, lr, schedule.seed);
  return result;
}

namespace {

ordered_json to_json(const CurveRecord& r) {
  ordered_json monitors = ordered_json::object();
  for (const auto& [name, value] : r.monitors) monitors[name] = value;
  ordered_json j{{"stage", r.stage},
                 {"epoch", r.epoch},
                 {"learning_rate", r.learning_rate},
                 {"train_loss", r.train_loss},
                 {"train_accuracy", r.train_accuracy}};
  j["validation_error"] = std::isnan(r.validation_error) ? ordered_json(nullptr) : ordered_json(r.validation_error);
  j["monitors"] = std::move(monitors);
  return j;
}

void write_records(std::ofstream& out, const LearningCurve& curve) {
  for (const auto& r : curve.records) out << to_json(r).dump() << '\n';
}

}  // namespace

void write_curve(const std::filesystem::path& path, const LearningCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_records(out, curve);
}

void append_curve(const std::filesystem::path& path, const LearningCurve& curve) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  write_records(out, curve);
}

LearningCurve read_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  LearningCurve curve;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      CurveRecord r;
      r.stage = j.at("stage");
      r.epoch = j.at("epoch");
      r.learning_rate = j.at("learning_rate");
      r.train_loss = j.at("train_loss");
      r.train_accuracy = j.at("train_accuracy");
      const auto& v = j.at("validation_error");
      r.validation_error = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
      for (const auto& [name, value] : j.at("monitors").items()) r.monitors.emplace_back(name, value.get<double>());
      curve.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return curve;
}

void write_trace(const std::filesystem::path& path, const EnhanceTrace& trace) {
  ordered_json insertions = ordered_json::array();
  for (const auto& s : trace.insertions) {
    insertions.push_back({{"alpha", s.alpha},
                          {"learning_rate", s.learning_rate},
                          {"pairs_at_start", s.pairs_at_start},
                          {"negatives", s.negatives},
                          {"removed", s.removed}});
  }
  ordered_json candidates = ordered_json::array();
  for (const auto& c : trace.candidates) {
    candidates.push_back(
        {{"insertion", c.insertion}, {"stage_epoch", c.stage_epoch}, {"epoch", c.epoch}, {"error_rate", c.error_rate}});
  }
  const ordered_json j{{"initial_error_rate", trace.initial_error_rate},
                       {"threshold", trace.threshold},
                       {"insertions", insertions},
                       {"candidates", candidates},
                       {"selected", trace.selected}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

EnhanceTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    const auto j = ordered_json::parse(in);
    EnhanceTrace trace;
    trace.initial_error_rate = j.at("initial_error_rate");
    trace.threshold = j.at("threshold");
    for (const auto& s : j.at("insertions")) {
      trace.insertions.push_back({s.at("alpha"), s.at("learning_rate"), s.at("pairs_at_start"), s.at("negatives"),
                                  s.at("removed")});
    }
    for (const auto& c : j.at("candidates")) {
      trace.candidates.push_back({c.at("insertion"), c.at("stage_epoch"), c.at("epoch"), c.at("error_rate")});
    }
    trace.selected = j.at("selected");
    return trace;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace coldetect
