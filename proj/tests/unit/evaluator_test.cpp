#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "coldetect/error.hpp"
#include "coldetect/evaluator.hpp"
#include "test_support.hpp"

namespace coldetect {
namespace {

using testing::random_ref;

/// Returns a preassigned label per image; unknown images count as NI.
class ScriptedClassifier : public Classifier {
 public:
  void set(const ImageRef& image, int label) { labels_[image.get()] = label; }
  std::vector<int> classify(std::span<const ImageRef> images) const override {
    std::vector<int> out;
    for (const auto& image : images) {
      const auto it = labels_.find(image.get());
      out.push_back(it == labels_.end() ? kNatural : it->second);
    }
    return out;
  }

 private:
  std::map<const NormalizedImage*, int> labels_;
};

class ConstantClassifier : public Classifier {
 public:
  explicit ConstantClassifier(int label) : label_(label) {}
  std::vector<int> classify(std::span<const ImageRef> images) const override {
    return std::vector<int>(images.size(), label_);
  }

 private:
  int label_;
};

std::vector<ImageRef> images(int n, std::uint64_t seed) {
  std::vector<ImageRef> out;
  for (int i = 0; i < n; ++i) out.push_back(random_ref(2, seed * 100000 + i));
  return out;
}

/// NI set of `n_ni` with `ni_wrong` misclassified, CI set likewise.
struct Scripted {
  std::vector<ImageRef> ni, ci;
  ScriptedClassifier model;
};

Scripted scripted(int n_ni, int ni_wrong, int n_ci, int ci_wrong, std::uint64_t seed = 1) {
  Scripted s{images(n_ni, seed), images(n_ci, seed + 1), {}};
  for (int i = 0; i < n_ni; ++i) s.model.set(s.ni[i], i < ni_wrong ? kColorized : kNatural);
  for (int i = 0; i < n_ci; ++i) s.model.set(s.ci[i], i < ci_wrong ? kNatural : kColorized);
  return s;
}

TEST(Hter, PerfectClassifierScoresZero) {
  auto s = scripted(10, 0, 10, 0);
  const auto report = hter(s.model, s.ni, s.ci);
  EXPECT_EQ(report.hter(), 0.0);
  EXPECT_EQ(report.counts, (ConfusionCounts{10, 0, 10, 0}));
}

TEST(Hter, AveragesClassErrors) {
  auto s = scripted(100, 2, 100, 4);
  const auto report = hter(s.model, s.ni, s.ci);
  EXPECT_DOUBLE_EQ(report.ni_error(), 2.0);
  EXPECT_DOUBLE_EQ(report.ci_error(), 4.0);
  EXPECT_DOUBLE_EQ(report.hter(), 3.0);
}

TEST(Hter, AlwaysNaturalScoresFifty) {
  const ConstantClassifier always_ni(kNatural);
  const auto ni = images(7, 1), ci = images(13, 2);
  EXPECT_DOUBLE_EQ(hter(always_ni, ni, ci).hter(), 50.0);
}

TEST(Hter, EmptySetThrows) {
  const ConstantClassifier model(kNatural);
  const auto some = images(2, 1);
  EXPECT_THROW(hter(model, {}, some), Error);
  EXPECT_THROW(hter(model, some, {}), Error);
}

TEST(Hter, InvariantToClassRatio) {
  auto balanced = scripted(100, 2, 100, 4);
  auto skewed = scripted(100, 2, 400, 16);
  EXPECT_DOUBLE_EQ(hter(balanced.model, balanced.ni, balanced.ci).hter(),
                   hter(skewed.model, skewed.ni, skewed.ci).hter());
}

// Exhaustive check over every prediction vector for 3 NIs and 3 CIs.
TEST(Hter, MatchesBruteForceConfusionMatrix) {
  for (int mask = 0; mask < 64; ++mask) {
    std::vector<int> ni(3), ci(3);
    for (int i = 0; i < 3; ++i) {
      ni[i] = (mask >> i) & 1;
      ci[i] = (mask >> (i + 3)) & 1;
    }
    int matrix[2][2] = {{0, 0}, {0, 0}};  // [true][predicted]
    for (int p : ni) ++matrix[kNatural][p];
    for (int p : ci) ++matrix[kColorized][p];
    const double expected =
        50.0 * (static_cast<double>(matrix[kNatural][kColorized]) / 3.0 + matrix[kColorized][kNatural] / 3.0);
    ASSERT_NEAR(report_from_predictions(ni, ci).hter(), expected, 1e-12) << mask;
  }
}

TEST(NaturalErrorRate, Examples) {
  const auto validation = images(200, 3);
  EXPECT_EQ(natural_error_rate(ConstantClassifier(kNatural), validation), 0.0);
  EXPECT_EQ(natural_error_rate(ConstantClassifier(kColorized), validation), 100.0);
  ScriptedClassifier three_wrong;
  for (int i = 0; i < 3; ++i) three_wrong.set(validation[i], kColorized);
  EXPECT_DOUBLE_EQ(natural_error_rate(three_wrong, validation), 1.5);
  EXPECT_THROW(natural_error_rate(three_wrong, {}), Error);
}

std::vector<TestSet> three_tests() {
  std::vector<TestSet> tests;
  for (int m = 0; m < 3; ++m) tests.push_back({"M" + std::to_string(m), images(20, 10 + m), images(20, 20 + m)});
  return tests;
}

TEST(GeneralizationMatrix, ShapeAndRowAverages) {
  const auto tests = three_tests();
  // Model m catches CIs of method m and of no other method.
  std::vector<ScriptedClassifier> classifiers(3);
  for (int m = 0; m < 3; ++m) {
    for (const auto& ci : tests[m].colorized) classifiers[m].set(ci, kColorized);
  }
  std::vector<TrainedModel> models;
  for (int m = 0; m < 3; ++m) models.push_back({tests[m].method, &classifiers[m]});
  const auto matrix = generalization_matrix(models, tests);
  ASSERT_EQ(matrix.cells.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    ASSERT_EQ(matrix.cells[i].size(), 3u);
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(matrix.cells[i][j].hter(), i == j ? 0.0 : 50.0);
    EXPECT_DOUBLE_EQ(matrix.off_diagonal_average(i), 50.0);
  }
  const auto text = format_matrix(matrix);
  EXPECT_NE(text.find("Avg HTER"), std::string::npos);
  EXPECT_NE(text.find("M2"), std::string::npos);
  const auto records = matrix_records(matrix, "run0");
  EXPECT_EQ(records.size(), 12u);
  EXPECT_EQ(records.back().metric, "avg_hter");
}

TEST(GeneralizationMatrix, RejectsMissingPieces) {
  const auto tests = three_tests();
  const ConstantClassifier model(kNatural);
  std::vector<TrainedModel> models{{"M0", &model}, {"M1", &model}};
  EXPECT_NO_THROW(generalization_matrix(models, tests));
  EXPECT_THROW(generalization_matrix(models, std::span(tests).first(1)), Error);
  models.push_back({"M9", &model});
  EXPECT_THROW(generalization_matrix(models, tests), Error);
  models.back() = {"M2", nullptr};
  EXPECT_THROW(generalization_matrix(models, tests), Error);
}

TEST(Subsample, SingleRunCollapses) {
  auto s = scripted(50, 5, 50, 10);
  const auto stats = subsample_stats(s.model, s.ni, s.ci, 1, 20, 3);
  EXPECT_EQ(stats.max, stats.mean);
  EXPECT_EQ(stats.min, stats.mean);
  EXPECT_EQ(stats.hters.size(), 1u);
}

TEST(Subsample, FullDrawEqualsFullSetHter) {
  auto s = scripted(40, 4, 40, 8);
  const auto stats = subsample_stats(s.model, s.ni, s.ci, 5, 40, 3);
  EXPECT_DOUBLE_EQ(stats.min, 15.0);
  EXPECT_DOUBLE_EQ(stats.max, 15.0);
}

TEST(Subsample, MeanWithinBinomialInterval) {
  // Fixed per-class error rates 3 % and 7 % over 5,000 images per class.
  auto s = scripted(5000, 150, 5000, 350);
  const double full = hter(s.model, s.ni, s.ci).hter();
  const int pairs = 1000;
  const auto stats = subsample_stats(s.model, s.ni, s.ci, 500, pairs, 11);
  const double pn = 0.03, pc = 0.07;
  const double sd = 100.0 * 0.5 * std::sqrt(pn * (1 - pn) / pairs + pc * (1 - pc) / pairs);
  EXPECT_NEAR(stats.mean, full, 2.576 * sd);
  EXPECT_LE(stats.min, stats.mean);
  EXPECT_LE(stats.mean, stats.max);
  EXPECT_LT(stats.min, stats.max);
}

TEST(Subsample, SeededAndValidated) {
  auto s = scripted(300, 30, 300, 60);
  const auto a = subsample_stats(s.model, s.ni, s.ci, 20, 100, 5);
  const auto b = subsample_stats(s.model, s.ni, s.ci, 20, 100, 5);
  const auto c = subsample_stats(s.model, s.ni, s.ci, 20, 100, 6);
  EXPECT_EQ(a.hters, b.hters);
  EXPECT_NE(a.hters, c.hters);
  EXPECT_THROW(subsample_stats(s.model, s.ni, s.ci, 1, 301, 5), Error);
  EXPECT_THROW(subsample_stats(s.model, s.ni, s.ci, 0, 10, 5), Error);
}

TEST(NetworkClassifier, AgreesWithDirectPrediction) {
  ModelConfig config;
  config.width_multiplier = 0.125;
  Network net(config);
  std::vector<ImageRef> refs;
  for (int i = 0; i < 5; ++i) refs.push_back(random_ref(256, 50 + i));
  const NetworkClassifier classifier(net, 2);
  EXPECT_EQ(classifier.classify(refs), predict(net.infer(stack_images(refs))));
}

TEST(Embeddings, OneRecordPerImageAndStable) {
  testing::TempDir dir;
  ModelConfig config;
  config.width_multiplier = 0.125;
  Network net(config);
  std::vector<LabeledImage> labeled;
  for (int i = 0; i < 5; ++i) {
    labeled.push_back(testing::labeled(random_ref(256, i), i % 2, i % 2 ? "natural" : "SynthA", "p" + std::to_string(i)));
  }
  export_embeddings(net, labeled, dir / "a.tsv");
  export_embeddings(net, labeled, dir / "b.tsv");
  std::ifstream a(dir / "a.tsv"), b(dir / "b.tsv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());

  std::istringstream lines(sa.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("id\tlabel\tpredicted\tmethod\tf0", 0), 0u);
  int rows = 0;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string field;
    int count = 0;
    while (std::getline(fields, field, '\t')) ++count;
    EXPECT_EQ(count, 4 + net.feature_dim());
    ++rows;
  }
  EXPECT_EQ(rows, 5);
  EXPECT_THROW(export_embeddings(net, labeled, dir / "missing" / "x.tsv"), Error);
}

TEST(Records, JsonLinesRoundTrip) {
  testing::TempDir dir;
  auto s = scripted(100, 2, 100, 4);
  const auto records = report_records(hter(s.model, s.ni, s.ci), "seed-1", "SynthA", "SynthB");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[2].metric, "hter");
  EXPECT_DOUBLE_EQ(records[2].value, 3.0);
  write_records(dir / "r.jsonl", records);
  EXPECT_EQ(read_records(dir / "r.jsonl"), records);
  std::ostringstream out;
  write_records(out, records);
  EXPECT_NE(out.str().find("\"run_id\":\"seed-1\""), std::string::npos);
}

TEST(Records, FormatReportMentionsHter) {
  auto s = scripted(100, 2, 100, 4);
  auto report = hter(s.model, s.ni, s.ci);
  report.model_id = "m";
  report.test_id = "t";
  EXPECT_NE(format_report(report).find("HTER   3.00%"), std::string::npos);
}

}  // namespace
}  // namespace coldetect
