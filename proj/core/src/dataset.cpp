#include "coldetect/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "coldetect/error.hpp"
#include "coldetect/rng.hpp"

namespace coldetect {

namespace {

constexpr std::string_view kManifestHeader = "path\tlabel\tmethod\tpair_id";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::size_t Dataset::count(int label) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [label](const ImageRecord& r) { return r.label == label; }));
}

Dataset Dataset::with_label(int label) const {
  Dataset subset;
  std::copy_if(records.begin(), records.end(), std::back_inserter(subset.records),
               [label](const ImageRecord& r) { return r.label == label; });
  return subset;
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  Dataset dataset;
  std::set<std::filesystem::path> seen;
  std::string line;
  int line_number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_number) + ": ";
    if (!header_seen) {
      if (line != kManifestHeader) throw Error(where + "expected header 'path<TAB>label<TAB>method<TAB>pair_id'");
      header_seen = true;
      continue;
    }
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw Error(where + "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    ImageRecord record;
    if (fields[0].empty()) throw Error(where + "empty path");
    record.path = std::filesystem::path(fields[0]).is_absolute() ? std::filesystem::path(fields[0]) : base / fields[0];
    if (fields[1] == "0") {
      record.label = kColorized;
    } else if (fields[1] == "1") {
      record.label = kNatural;
    } else {
      throw Error(where + "label must be 0 (CI) or 1 (NI), got '" + fields[1] + "'");
    }
    record.method = fields[2];
    record.pair_id = fields[3];
    if (record.method.empty() || record.pair_id.empty()) throw Error(where + "empty method or pair_id");
    if ((record.method == kNaturalMethod) != (record.label == kNatural)) {
      throw Error(where + "label " + fields[1] + " is inconsistent with method '" + record.method + "'");
    }
    if (!seen.insert(record.path.lexically_normal()).second) {
      throw Error(where + "duplicate path " + fields[0]);
    }
    dataset.records.push_back(std::move(record));
  }
  if (dataset.records.empty()) throw Error("empty manifest " + path.string());
  return dataset;
}

void write_manifest(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  out << kManifestHeader << '\n';
  for (const auto& r : dataset.records) {
    auto stored = r.path;
    if (!base.empty()) {
      const auto relative = r.path.lexically_relative(base);
      if (!relative.empty() && *relative.begin() != "..") stored = relative;
    }
    out << stored.generic_string() << '\t' << r.label << '\t' << r.method << '\t' << r.pair_id << '\n';
  }
  if (!out) throw Error("failed writing manifest " + path.string());
}

ImageRef ImageStore::load(const std::filesystem::path& path) {
  const auto key = path.lexically_normal();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  auto image = std::make_shared<const NormalizedImage>(preprocess_image(read_image(path), side_));
  cache_.emplace(key, image);
  return image;
}

std::vector<ImageRef> ImageStore::load_all(const Dataset& dataset) {
  std::vector<ImageRef> images;
  images.reserve(dataset.size());
  for (const auto& r : dataset.records) images.push_back(load(r.path));
  return images;
}

std::vector<LabeledImage> load_labeled(const Dataset& dataset, ImageStore& store) {
  std::vector<LabeledImage> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.records) out.push_back({r, store.load(r.path)});
  return out;
}

PairBuildResult build_pairs(std::span<const LabeledImage> naturals, std::span<const LabeledImage> colorized) {
  std::unordered_map<std::string, const LabeledImage*> by_id;
  for (const auto& n : naturals) {
    if (n.record.label != kNatural) throw Error("build_pairs: natural set contains CI " + n.record.path.string());
    if (!by_id.emplace(n.record.pair_id, &n).second) {
      throw Error("build_pairs: pair_id '" + n.record.pair_id + "' used by more than one natural image");
    }
  }
  std::vector<std::string> orphans;
  for (const auto& c : colorized) {
    if (!by_id.contains(c.record.pair_id)) orphans.push_back(c.record.pair_id);
  }
  if (!orphans.empty()) {
    std::string list;
    for (std::size_t i = 0; i < orphans.size() && i < 20; ++i) list += (i ? ", " : "") + orphans[i];
    if (orphans.size() > 20) list += ", ...";
    throw Error("build_pairs: " + std::to_string(orphans.size()) + " colorized image(s) without a natural counterpart: " +
                list);
  }
  PairBuildResult result;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : colorized) {
    if (c.record.label != kColorized) throw Error("build_pairs: colorized set contains NI " + c.record.path.string());
    if (!seen.emplace(c.record.pair_id, c.record.method).second) {
      throw Error("build_pairs: duplicate (pair_id, method) = (" + c.record.pair_id + ", " + c.record.method + ")");
    }
    const auto& natural = *by_id.at(c.record.pair_id);
    const double diff = max_luma_difference(*natural.image, *c.image);
    if (diff > kLumaTolerance + 1e-9) {
      result.rejected.push_back({c.record.pair_id, c.record.method, diff});
      continue;
    }
    result.pairs.push_back({natural.image, c.image, c.record.pair_id, c.record.method});
  }
  return result;
}

PairBuildResult build_pairs(const Dataset& naturals, const Dataset& colorized, ImageStore& store) {
  const auto n = load_labeled(naturals, store);
  const auto c = load_labeled(colorized, store);
  return build_pairs(n, c);
}

NegativeSample make_negative_sample(const PairedSample& pair, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error("negative sample: interpolation factor " + std::to_string(alpha) + " outside [0, 1]");
  }
  const auto& natural = *pair.natural;
  const auto& colorized = *pair.colorized;
  if (natural.side != colorized.side) throw Error("negative sample: pair images differ in size");
  NegativeSample sample;
  sample.alpha = alpha;
  sample.pair_id = pair.pair_id;
  sample.image.side = natural.side;
  sample.image.chw.resize(natural.chw.size());
  for (std::size_t i = 0; i < natural.chw.size(); ++i) {
    sample.image.chw[i] = static_cast<float>(alpha * natural.chw[i] + (1.0 - alpha) * colorized.chw[i]);
  }
  return sample;
}

std::vector<BatchPlan> epoch_batches(std::size_t natural_count, std::size_t colorized_count, std::uint64_t seed,
                                     int epoch) {
  if (natural_count < kHalfBatch || colorized_count < kHalfBatch) {
    throw Error("epoch_batches: each class pool needs at least " + std::to_string(kHalfBatch) + " samples (have " +
                std::to_string(natural_count) + " NI, " + std::to_string(colorized_count) + " CI)");
  }
  const std::uint64_t epoch_seed = mix_seed(seed, static_cast<std::uint64_t>(epoch));
  std::vector<std::size_t> natural(natural_count), colorized(colorized_count);
  std::iota(natural.begin(), natural.end(), 0);
  std::iota(colorized.begin(), colorized.end(), 0);
  Rng natural_rng(mix_seed(epoch_seed, 1));
  Rng colorized_rng(mix_seed(epoch_seed, 2));
  natural_rng.shuffle(natural);
  colorized_rng.shuffle(colorized);

  const std::size_t batches = std::min(natural_count, colorized_count) / kHalfBatch;
  std::vector<BatchPlan> plans(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    plans[b].natural.assign(natural.begin() + b * kHalfBatch, natural.begin() + (b + 1) * kHalfBatch);
    plans[b].colorized.assign(colorized.begin() + b * kHalfBatch, colorized.begin() + (b + 1) * kHalfBatch);
  }
  return plans;
}

Minibatch assemble(const TrainingPool& pool, const BatchPlan& plan) {
  std::vector<const NormalizedImage*> images;
  Minibatch batch;
  for (auto i : plan.natural) {
    images.push_back(pool.natural.at(i).get());
    batch.labels.push_back(kNatural);
  }
  for (auto i : plan.colorized) {
    images.push_back(pool.colorized.at(i).get());
    batch.labels.push_back(kColorized);
  }
  batch.images = stack_images(std::span<const NormalizedImage* const>(images));
  return batch;
}

}  // namespace coldetect
