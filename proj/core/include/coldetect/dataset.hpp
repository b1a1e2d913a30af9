#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coldetect/image.hpp"
#include "coldetect/loss.hpp"

namespace coldetect {

inline constexpr std::string_view kNaturalMethod = "natural";
/// Luma agreement required between the two images of a pair (0..255 scale).
inline constexpr double kLumaTolerance = 2.0;
/// Images per class in every minibatch.
inline constexpr int kHalfBatch = 10;

struct ImageRecord {
  std::filesystem::path path;
  int label = kNatural;
  std::string method;
  std::string pair_id;

  bool operator==(const ImageRecord&) const = default;
};

struct Dataset {
  std::vector<ImageRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t count(int label) const;
  Dataset with_label(int label) const;
};

/// Tab-separated manifest with header `path label method pair_id`.
/// Relative paths resolve against the manifest's directory.
Dataset load_manifest(const std::filesystem::path& path);
/// Paths are written relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& path, const Dataset& dataset);

/// Loads and preprocesses each path once.
class ImageStore {
 public:
  explicit ImageStore(int side = 256) : side_(side) {}
  ImageRef load(const std::filesystem::path& path);
  std::vector<ImageRef> load_all(const Dataset& dataset);
  int side() const { return side_; }

 private:
  int side_;
  std::map<std::filesystem::path, ImageRef> cache_;
};

struct LabeledImage {
  ImageRecord record;
  ImageRef image;
};

std::vector<LabeledImage> load_labeled(const Dataset& dataset, ImageStore& store);

/// A natural image and a colorized version sharing its grayscale.
struct PairedSample {
  ImageRef natural;
  ImageRef colorized;
  std::string pair_id;
  std::string method;
};

using PairSet = std::vector<PairedSample>;

struct PairRejection {
  std::string pair_id;
  std::string method;
  double max_luma_difference = 0.0;
};

struct PairBuildResult {
  PairSet pairs;
  /// Pairs dropped because their luma planes disagree beyond kLumaTolerance.
  std::vector<PairRejection> rejected;
};

/// One pair per (pair_id, method). Throws when a colorized record has no
/// natural counterpart.
PairBuildResult build_pairs(std::span<const LabeledImage> naturals, std::span<const LabeledImage> colorized);
PairBuildResult build_pairs(const Dataset& naturals, const Dataset& colorized, ImageStore& store);

/// alpha * natural + (1 - alpha) * colorized, labeled CI.
struct NegativeSample {
  NormalizedImage image;
  double alpha = 0.0;
  std::string pair_id;

  int label() const { return kColorized; }
};

/// Interpolates in the normalized domain without re-quantization.
/// alpha must lie in [0, 1].
NegativeSample make_negative_sample(const PairedSample& pair, double alpha);

/// Indices into the natural and colorized pools for one minibatch.
struct BatchPlan {
  std::vector<std::size_t> natural;
  std::vector<std::size_t> colorized;
};

/// Balanced minibatches for one epoch: kHalfBatch NIs and kHalfBatch samples
/// from the CI pool each; the order is a pure function of (seed, epoch) and
/// any trailing partial batch is dropped.
std::vector<BatchPlan> epoch_batches(std::size_t natural_count, std::size_t colorized_count, std::uint64_t seed,
                                     int epoch);

/// Training data as two class pools. Negative samples join the CI pool.
struct TrainingPool {
  std::vector<ImageRef> natural;
  std::vector<ImageRef> colorized;
};

struct Minibatch {
  Tensor images;
  std::vector<int> labels;
};

Minibatch assemble(const TrainingPool& pool, const BatchPlan& plan);

}  // namespace coldetect
