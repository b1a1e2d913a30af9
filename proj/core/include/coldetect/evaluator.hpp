#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coldetect/dataset.hpp"
#include "coldetect/network.hpp"

namespace coldetect {

/// Anything that labels preprocessed images as CI (0) or NI (1).
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<int> classify(std::span<const ImageRef> images) const = 0;
};

/// Eval-mode network wrapper. Never mutates the network.
class NetworkClassifier final : public Classifier {
 public:
  explicit NetworkClassifier(const Network& network, int batch_size = 2 * kHalfBatch)
      : network_(network), batch_size_(batch_size) {}
  std::vector<int> classify(std::span<const ImageRef> images) const override;

 private:
  const Network& network_;
  int batch_size_;
};

struct ConfusionCounts {
  std::size_t ni_total = 0;
  std::size_t ni_wrong = 0;
  std::size_t ci_total = 0;
  std::size_t ci_wrong = 0;

  bool operator==(const ConfusionCounts&) const = default;
};

struct EvalReport {
  ConfusionCounts counts;
  std::string model_id;
  std::string test_id;
  std::uint64_t seed = 0;

  /// Percentages.
  double ni_error() const;
  double ci_error() const;
  double hter() const;
};

/// Builds a report from predictions for the NI set and the CI set.
EvalReport report_from_predictions(std::span<const int> ni_predictions, std::span<const int> ci_predictions);
EvalReport hter(const Classifier& model, std::span<const ImageRef> ni_set, std::span<const ImageRef> ci_set);

/// Percentage of an NI-only set predicted as CI.
double natural_error_rate(const Classifier& model, std::span<const ImageRef> validation);

/// Test images of one colorization method.
struct TestSet {
  std::string method;
  std::vector<ImageRef> natural;
  std::vector<ImageRef> colorized;
};

struct TrainedModel {
  std::string method;
  const Classifier* model = nullptr;
};

struct GeneralizationMatrix {
  std::vector<std::string> train_methods;
  std::vector<std::string> test_methods;
  /// cells[i][j]: model trained on train_methods[i], tested on test_methods[j].
  std::vector<std::vector<EvalReport>> cells;

  /// Mean HTER over test methods other than the row's training method.
  double off_diagonal_average(std::size_t row) const;
};

GeneralizationMatrix generalization_matrix(std::span<const TrainedModel> models, std::span<const TestSet> tests);

struct SubsampleStats {
  int runs = 0;
  int pairs_per_run = 0;
  double max = 0.0;
  double mean = 0.0;
  double min = 0.0;
  std::vector<double> hters;
};

/// Predicts every image once, then draws `pairs` NIs and `pairs` CIs without
/// replacement per run.
SubsampleStats subsample_stats(const Classifier& model, std::span<const ImageRef> ni_set,
                               std::span<const ImageRef> ci_set, int runs, int pairs, std::uint64_t seed);
SubsampleStats subsample_stats(std::span<const int> ni_predictions, std::span<const int> ci_predictions, int runs,
                               int pairs, std::uint64_t seed);

/// Header line, then `id label predicted method f0 .. f{d-1}` per image.
void export_embeddings(const Network& network, std::span<const LabeledImage> images,
                       const std::filesystem::path& out_path);

/// One metric per line in the JSONL report files.
struct MetricRecord {
  std::string run_id;
  std::string train_method;
  std::string test_method;
  std::string metric;
  double value = 0.0;

  bool operator==(const MetricRecord&) const = default;
};

/// ni_error, ci_error and hter records for one report.
std::vector<MetricRecord> report_records(const EvalReport& report, const std::string& run_id,
                                         const std::string& train_method, const std::string& test_method);
std::vector<MetricRecord> matrix_records(const GeneralizationMatrix& matrix, const std::string& run_id);

void write_records(std::ostream& out, std::span<const MetricRecord> records);
void write_records(const std::filesystem::path& path, std::span<const MetricRecord> records);
std::vector<MetricRecord> read_records(const std::filesystem::path& path);

std::string format_report(const EvalReport& report);
std::string format_matrix(const GeneralizationMatrix& matrix);

}  // namespace coldetect
