#include "coldetect/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coldetect/error.hpp"
#include "coldetect/rng.hpp"

namespace coldetect {

std::vector<int> NetworkClassifier::classify(std::span<const ImageRef> images) const {
  std::vector<int> labels;
  labels.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += batch_size_) {
    const std::size_t end = std::min(images.size(), begin + batch_size_);
    const auto batch = stack_images(images.subspan(begin, end - begin));
    const auto predicted = predict(network_.infer(batch));
    labels.insert(labels.end(), predicted.begin(), predicted.end());
  }
  return labels;
}

namespace {

double percent(std::size_t wrong, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(wrong) / static_cast<double>(total);
}

std::size_t count_label(std::span<const int> predictions, int label) {
  return static_cast<std::size_t>(std::count(predictions.begin(), predictions.end(), label));
}

}  // namespace

double EvalReport::ni_error() const { return percent(counts.ni_wrong, counts.ni_total); }
double EvalReport::ci_error() const { return percent(counts.ci_wrong, counts.ci_total); }
double EvalReport::hter() const { return 0.5 * (ni_error() + ci_error()); }

EvalReport report_from_predictions(std::span<const int> ni_predictions, std::span<const int> ci_predictions) {
  if (ni_predictions.empty() || ci_predictions.empty()) throw Error("hter: empty NI or CI set");
  EvalReport report;
  report.counts.ni_total = ni_predictions.size();
  report.counts.ni_wrong = count_label(ni_predictions, kColorized);
  report.counts.ci_total = ci_predictions.size();
  report.counts.ci_wrong = count_label(ci_predictions, kNatural);
  return report;
}

EvalReport hter(const Classifier& model, std::span<const ImageRef> ni_set, std::span<const ImageRef> ci_set) {
  if (ni_set.empty() || ci_set.empty()) throw Error("hter: empty NI or CI set");
  const auto ni = model.classify(ni_set);
  const auto ci = model.classify(ci_set);
  return report_from_predictions(ni, ci);
}

double natural_error_rate(const Classifier& model, std::span<const ImageRef> validation) {
  if (validation.empty()) throw Error("natural_error_rate: empty validation set");
  const auto predicted = model.classify(validation);
  return percent(count_label(predicted, kColorized), predicted.size());
}

double GeneralizationMatrix::off_diagonal_average(std::size_t row) const {
  double sum = 0.0;
  int count = 0;
  for (std::size_t j = 0; j < test_methods.size(); ++j) {
    if (test_methods[j] == train_methods[row]) continue;
    sum += cells[row][j].hter();
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

GeneralizationMatrix generalization_matrix(std::span<const TrainedModel> models, std::span<const TestSet> tests) {
  if (models.size() < 1 || tests.size() < 2) {
    throw Error("generalization_matrix: need at least two methods");
  }
  for (const auto& m : models) {
    if (m.model == nullptr) throw Error("generalization_matrix: missing model for " + m.method);
    const bool has_test = std::any_of(tests.begin(), tests.end(), [&](const TestSet& t) { return t.method == m.method; });
    if (!has_test) throw Error("generalization_matrix: no test set for " + m.method);
  }
  GeneralizationMatrix matrix;
  for (const auto& t : tests) matrix.test_methods.push_back(t.method);
  for (const auto& m : models) {
    matrix.train_methods.push_back(m.method);
    auto& row = matrix.cells.emplace_back();
    for (const auto& t : tests) {
      auto report = hter(*m.model, t.natural, t.colorized);
      report.model_id = m.method;
      report.test_id = t.method;
      row.push_back(std::move(report));
    }
  }
  return matrix;
}

SubsampleStats subsample_stats(std::span<const int> ni_predictions, std::span<const int> ci_predictions, int runs,
                               int pairs, std::uint64_t seed) {
  if (runs < 1 || pairs < 1) throw Error("subsample_stats: runs and pairs must be positive");
  if (ni_predictions.size() < static_cast<std::size_t>(pairs) ||
      ci_predictions.size() < static_cast<std::size_t>(pairs)) {
    throw Error("subsample_stats: each set needs at least " + std::to_string(pairs) + " images");
  }
  SubsampleStats stats;
  stats.runs = runs;
  stats.pairs_per_run = pairs;
  Rng rng(seed);
  std::vector<std::size_t> ni_order(ni_predictions.size()), ci_order(ci_predictions.size());
  std::vector<int> ni_draw(pairs), ci_draw(pairs);
  auto draw = [&](std::vector<std::size_t>& order, std::span<const int> source, std::vector<int>& out) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int k = 0; k < pairs; ++k) {
      std::swap(order[k], order[k + rng.index(order.size() - k)]);
      out[k] = source[order[k]];
    }
  };
  for (int r = 0; r < runs; ++r) {
    draw(ni_order, ni_predictions, ni_draw);
    draw(ci_order, ci_predictions, ci_draw);
    stats.hters.push_back(report_from_predictions(ni_draw, ci_draw).hter());
  }
  stats.max = *std::max_element(stats.hters.begin(), stats.hters.end());
  stats.min = *std::min_element(stats.hters.begin(), stats.hters.end());
  stats.mean = std::accumulate(stats.hters.begin(), stats.hters.end(), 0.0) / runs;
  return stats;
}

SubsampleStats subsample_stats(const Classifier& model, std::span<const ImageRef> ni_set,
                               std::span<const ImageRef> ci_set, int runs, int pairs, std::uint64_t seed) {
  if (ni_set.size() < static_cast<std::size_t>(pairs) || ci_set.size() < static_cast<std::size_t>(pairs)) {
    throw Error("subsample_stats: each set needs at least " + std::to_string(pairs) + " images");
  }
  return subsample_stats(model.classify(ni_set), model.classify(ci_set), runs, pairs, seed);
}

void export_embeddings(const Network& network, std::span<const LabeledImage> images,
                       const std::filesystem::path& out_path) {
  std::ofstream out(out_path);
  if (!out) throw Error("export_embeddings: cannot write " + out_path.string());
  out << "id\tlabel\tpredicted\tmethod";
  for (int d = 0; d < network.feature_dim(); ++d) out << "\tf" << d;
  out << '\n';
  constexpr std::size_t kBatch = 2 * kHalfBatch;
  char buffer[32];
  for (std::size_t begin = 0; begin < images.size(); begin += kBatch) {
    const std::size_t end = std::min(images.size(), begin + kBatch);
    std::vector<ImageRef> refs;
    for (std::size_t i = begin; i < end; ++i) refs.push_back(images[i].image);
    Embeddings features;
    const auto predicted = predict(network.infer(stack_images(refs), features));
    for (std::size_t i = begin; i < end; ++i) {
      const auto& record = images[i].record;
      const auto id = record.pair_id.empty() ? record.path.stem().string() : record.pair_id;
      out << id << '\t' << record.label << '\t' << predicted[i - begin] << '\t' << record.method;
      for (Eigen::Index d = 0; d < features.cols(); ++d) {
        std::snprintf(buffer, sizeof(buffer), "%.9g", features(static_cast<Eigen::Index>(i - begin), d));
        out << '\t' << buffer;
      }
      out << '\n';
    }
  }
  if (!out) throw Error("export_embeddings: write failed for " + out_path.string());
}

std::vector<MetricRecord> report_records(const EvalReport& report, const std::string& run_id,
                                         const std::string& train_method, const std::string& test_method) {
  return {
      {run_id, train_method, test_method, "ni_error", report.ni_error()},
      {run_id, train_method, test_method, "ci_error", report.ci_error()},
      {run_id, train_method, test_method, "hter", report.hter()},
  };
}

std::vector<MetricRecord> matrix_records(const GeneralizationMatrix& matrix, const std::string& run_id) {
  std::vector<MetricRecord> records;
  for (std::size_t i = 0; i < matrix.train_methods.size(); ++i) {
    for (std::size_t j = 0; j < matrix.test_methods.size(); ++j) {
      records.push_back({run_id, matrix.train_methods[i], matrix.test_methods[j], "hter", matrix.cells[i][j].hter()});
    }
    records.push_back({run_id, matrix.train_methods[i], "others", "avg_hter", matrix.off_diagonal_average(i)});
  }
  return records;
}

void write_records(std::ostream& out, std::span<const MetricRecord> records) {
  for (const auto& r : records) {
    const nlohmann::ordered_json line{{"run_id", r.run_id},
                                      {"train_method", r.train_method},
                                      {"test_method", r.test_method},
                                      {"metric", r.metric},
                                      {"value", r.value}};
    out << line.dump() << '\n';
  }
}

void write_records(const std::filesystem::path& path, std::span<const MetricRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_records(out, records);
}

std::vector<MetricRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<MetricRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("run_id"), j.at("train_method"), j.at("test_method"), j.at("metric"), j.at("value")});
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return records;
}

std::string format_report(const EvalReport& report) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer),
                "%-12s %-12s NI %5zu/%-5zu (%6.2f%%)  CI %5zu/%-5zu (%6.2f%%)  HTER %6.2f%%\n",
                report.model_id.c_str(), report.test_id.c_str(), report.counts.ni_wrong, report.counts.ni_total,
                report.ni_error(), report.counts.ci_wrong, report.counts.ci_total, report.ci_error(), report.hter());
  return buffer;
}

std::string format_matrix(const GeneralizationMatrix& matrix) {
  std::ostringstream out;
  char cell[32];
  out << "train \\ test ";
  for (const auto& t : matrix.test_methods) {
    std::snprintf(cell, sizeof(cell), "%10s", t.c_str());
    out << cell;
  }
  out << "   Avg HTER\n";
  for (std::size_t i = 0; i < matrix.train_methods.size(); ++i) {
    std::snprintf(cell, sizeof(cell), "%-13s", matrix.train_methods[i].c_str());
    out << cell;
    for (const auto& report : matrix.cells[i]) {
      std::snprintf(cell, sizeof(cell), "%10.2f", report.hter());
      out << cell;
    }
    std::snprintf(cell, sizeof(cell), "%11.2f", matrix.off_diagonal_average(i));
    out << cell << '\n';
  }
  return out.str();
}

}  // namespace coldetect
