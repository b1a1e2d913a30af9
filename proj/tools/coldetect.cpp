// coldetect: command-line front end for data generation, training,
// enhancement, evaluation and plotting.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coldetect/checkpoint.hpp"
#include "coldetect/dataset.hpp"
#include "coldetect/error.hpp"
#include "coldetect/evaluator.hpp"
#include "coldetect/image.hpp"
#include "coldetect/plot.hpp"
#include "coldetect/run_config.hpp"
#include "coldetect/synth.hpp"
#include "coldetect/trainer.hpp"

namespace fs = std::filesystem;

namespace coldetect::cli {
namespace {

constexpr const char* kResolvedConfig = "config.resolved.yaml";
constexpr const char* kStage1Checkpoint = "stage1.ckpt";
constexpr const char* kFinalCheckpoint = "final.ckpt";
constexpr const char* kLastCheckpoint = "last.ckpt";
constexpr const char* kCurveFile = "curve.jsonl";
constexpr const char* kTraceFile = "trace.json";

void info(const std::string& message) { std::fprintf(stderr, "%s\n", message.c_str()); }
void warn(const std::string& message) { std::fprintf(stderr, "warning: %s\n", message.c_str()); }

fs::path seed_dir(const fs::path& run, std::uint64_t seed) { return run / ("seed-" + std::to_string(seed)); }

/// Refuses to touch a non-empty directory unless `force`; with `force` it is
/// cleared first.
void prepare_fresh_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw Error(dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void refuse_overwrite(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) throw Error(file.string() + " already exists; pass --force to overwrite");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

struct Split {
  std::vector<LabeledImage> natural;
  std::vector<LabeledImage> colorized;
};

Split load_split(const fs::path& manifest, ImageStore& store) {
  Split split;
  for (auto& image : load_labeled(load_manifest(manifest), store)) {
    (image.record.label == kNatural ? split.natural : split.colorized).push_back(std::move(image));
  }
  return split;
}

std::vector<ImageRef> refs(const std::vector<LabeledImage>& images) {
  std::vector<ImageRef> out;
  out.reserve(images.size());
  for (const auto& i : images) out.push_back(i.image);
  return out;
}

TestSet load_test_set(const fs::path& manifest, ImageStore& store) {
  const Split split = load_split(manifest, store);
  if (split.natural.empty() || split.colorized.empty()) {
    throw Error(manifest.string() + ": a test manifest needs both natural and colorized images");
  }
  std::set<std::string> methods;
  for (const auto& c : split.colorized) methods.insert(c.record.method);
  const std::string method = methods.size() == 1 ? *methods.begin() : manifest.stem().string();
  return {method, refs(split.natural), refs(split.colorized)};
}

struct RunData {
  TrainingPool pool;
  PairSet pairs;
  Monitor monitor;
};

RunData load_run_data(const RunConfig& config, bool need_pairs) {
  if (config.train_manifest.empty()) throw Error("train_manifest is not set");
  ImageStore store(config.model.input_side);
  RunData data;
  const Split train = load_split(config.train_manifest, store);
  data.pool.natural = refs(train.natural);
  data.pool.colorized = refs(train.colorized);
  if (need_pairs) {
    auto built = build_pairs(train.natural, train.colorized);
    for (const auto& r : built.rejected) {
      warn("pair " + r.pair_id + " (" + r.method + ") rejected: luma differs by " + std::to_string(r.max_luma_difference));
    }
    data.pairs = std::move(built.pairs);
  }
  if (!config.validation_manifest.empty()) {
    data.monitor.validation = refs(load_split(config.validation_manifest, store).natural);
  }
  for (const auto& t : config.test_manifests) data.monitor.tests.push_back(load_test_set(t, store));
  return data;
}

void log_epoch(const CurveRecord& r) {
  std::string line = "stage " + std::to_string(r.stage) + " epoch " + std::to_string(r.epoch);
  char buffer[128];
  std::snprintf(buffer, sizeof buffer, " lr %.3g loss %.4f acc %.2f%% val-err %.2f%%", r.learning_rate, r.train_loss,
                r.train_accuracy, r.validation_error);
  line += buffer;
  for (const auto& [method, h] : r.monitors) {
    std::snprintf(buffer, sizeof buffer, " %s %.2f%%", method.c_str(), h);
    line += buffer;
  }
  info(line);
}

Network load_model(const fs::path& path) { return restore_network(load_checkpoint(path)); }

void emit_records(const fs::path& out, const std::vector<MetricRecord>& records, bool force) {
  if (out.empty()) {
    write_records(std::cout, records);
    return;
  }
  refuse_overwrite(out, force);
  write_records(out, records);
  info("wrote " + out.string());
}

// Shared by train and enhance.
struct RunOptions {
  fs::path config;
  std::vector<std::uint64_t> seeds;
  fs::path out;
  bool force = false;
  std::string width;
  std::string variant;
  std::string activation;
  std::vector<std::string> overrides;
};

void add_run_options(CLI::App* app, RunOptions& o) {
  app->add_option("--seed", o.seeds, "Seed to run (repeatable); defaults to the config's seed list");
  app->add_flag("--force", o.force, "Overwrite existing outputs");
  app->add_option("--width-multiplier", o.width, "Channel width multiplier");
  app->add_option("--variant", o.variant, "basenet, basenetplus or decnet");
  app->add_option("--activation", o.activation, "First-layer activation: none, tanh or relu");
  app->add_option("--set", o.overrides, "Override any config key (key=value, repeatable)");
}

void apply_run_options(RunConfig& config, const RunOptions& o) {
  if (!o.width.empty()) apply_override(config, "width_multiplier", o.width);
  if (!o.variant.empty()) apply_override(config, "variant", o.variant);
  if (!o.activation.empty()) apply_override(config, "activation", o.activation);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.seeds.empty()) config.seeds = o.seeds;
  config.model.validate();
  config.schedule.validate();
}

fs::path default_run_dir(const fs::path& config_path) {
  const char* root = std::getenv("COLDETECT_RUN_ROOT");
  return fs::path(root && *root ? root : "runs") / config_path.stem();
}

// ------------------------------------------------------------------ commands

int cmd_synth(const fs::path& out, const CorpusSpec& spec, bool force) {
  prepare_fresh_dir(out, force);
  const auto manifests = write_synthetic_corpus(out, spec);
  // A ready-to-use config: train on the first method, monitor the others.
  RunConfig config;
  config.train_manifest = fs::absolute(manifests.train.front().second);
  config.validation_manifest = fs::absolute(manifests.validation);
  for (const auto& [method, path] : manifests.test) config.test_manifests.push_back(fs::absolute(path));
  std::ofstream(out / "run.yaml") << to_yaml(config);
  for (const auto& [method, path] : manifests.train) std::printf("train\t%s\t%s\n", to_string(method).data(), path.c_str());
  for (const auto& [method, path] : manifests.test) std::printf("test\t%s\t%s\n", to_string(method).data(), path.c_str());
  std::printf("validation\t-\t%s\nconfig\t-\t%s\n", manifests.validation.c_str(), (out / "run.yaml").c_str());
  return 0;
}

int cmd_train(const RunOptions& o) {
  RunConfig config = load_run_config(o.config);
  apply_run_options(config, o);
  const fs::path run = o.out.empty() ? default_run_dir(o.config) : o.out;
  prepare_fresh_dir(run, o.force);
  std::ofstream(run / kResolvedConfig) << to_yaml(config);

  const RunData data = load_run_data(config, false);
  info("training on " + std::to_string(data.pool.natural.size()) + " NI / " +
       std::to_string(data.pool.colorized.size()) + " CI images");
  for (const auto seed : config.seeds) {
    const RunConfig one = config.for_seed(seed);
    const fs::path dir = seed_dir(run, seed);
    fs::create_directories(dir);
    info("seed " + std::to_string(seed));
    const auto result = train_initial(one.model, data.pool, one.schedule, data.monitor, log_epoch);
    save_checkpoint(result.checkpoint, dir / kStage1Checkpoint);
    write_curve(dir / kCurveFile, result.curve);
  }
  std::printf("%s\n", run.c_str());
  return 0;
}

int cmd_enhance(const fs::path& from, const RunOptions& o) {
  RunConfig config = load_run_config(from / kResolvedConfig);
  if (!o.seeds.empty()) config.seeds = o.seeds;
  const RunData data = load_run_data(config, true);
  if (data.monitor.validation.empty()) throw Error("enhance needs validation_manifest in the run config");
  info(std::to_string(data.pairs.size()) + " training pairs");

  for (const auto seed : config.seeds) {
    const RunConfig one = config.for_seed(seed);
    const fs::path dir = seed_dir(from, seed);
    const fs::path start_path = dir / kStage1Checkpoint;
    if (!fs::exists(start_path)) throw Error(start_path.string() + " not found; run train first");
    refuse_overwrite(dir / kTraceFile, o.force);
    info("seed " + std::to_string(seed));

    const auto result = enhance_with_negatives(load_checkpoint(start_path), data.pool, data.pairs,
                                               data.monitor.validation, one.schedule, config.enhance, data.monitor,
                                               log_epoch);
    save_checkpoint(result.checkpoint, dir / kFinalCheckpoint);
    save_checkpoint(result.last, dir / kLastCheckpoint);
    write_trace(dir / kTraceFile, result.trace);
    // Keep stage-1 records, replace any earlier stage-2 records.
    LearningCurve curve;
    if (fs::exists(dir / kCurveFile)) {
      for (const auto& r : read_curve(dir / kCurveFile).records) {
        if (r.stage == 1) curve.records.push_back(r);
      }
    }
    curve.records.insert(curve.records.end(), result.curve.records.begin(), result.curve.records.end());
    write_curve(dir / kCurveFile, curve);

    const auto& chosen = result.trace.candidates.at(result.trace.selected);
    char buffer[160];
    std::snprintf(buffer, sizeof buffer, "selected insertion %d epoch %d: r=%.2f%% (theta %.2f%%)",
                  chosen.insertion + 1, chosen.stage_epoch, chosen.error_rate, result.trace.threshold);
    info(buffer);
  }
  return 0;
}

int cmd_eval(const fs::path& model_path, const fs::path& test, const std::string& train_method,
             std::uint64_t seed, const fs::path& out, bool force) {
  const Network network = load_model(model_path);
  ImageStore store(network.config().input_side);
  const TestSet set = load_test_set(test, store);
  EvalReport report = hter(NetworkClassifier(network), set.natural, set.colorized);
  report.model_id = model_path.string();
  report.test_id = test.string();
  report.seed = seed;
  std::printf("%s", format_report(report).c_str());
  emit_records(out, report_records(report, model_path.string(), train_method, set.method), force);
  return 0;
}

int cmd_matrix(const std::vector<std::string>& model_specs, const std::vector<fs::path>& tests, const fs::path& out,
               bool force) {
  std::vector<std::string> methods;
  std::vector<Network> networks;
  networks.reserve(model_specs.size());
  for (const auto& spec : model_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw Error("--model expects METHOD=CHECKPOINT, got '" + spec + "'");
    methods.push_back(spec.substr(0, eq));
    networks.push_back(load_model(spec.substr(eq + 1)));
  }
  std::vector<NetworkClassifier> classifiers;
  classifiers.reserve(networks.size());
  std::vector<TrainedModel> models;
  for (std::size_t i = 0; i < networks.size(); ++i) {
    classifiers.emplace_back(networks[i]);
    models.push_back({methods[i], &classifiers[i]});
  }
  ImageStore store(networks.front().config().input_side);
  std::vector<TestSet> sets;
  for (const auto& t : tests) sets.push_back(load_test_set(t, store));
  const auto matrix = generalization_matrix(models, sets);
  std::printf("%s", format_matrix(matrix).c_str());
  emit_records(out, matrix_records(matrix, "matrix"), force);
  return 0;
}

int cmd_subsample(const fs::path& model_path, const fs::path& test, int runs, int pairs, std::uint64_t seed,
                  const fs::path& out, bool force) {
  const Network network = load_model(model_path);
  ImageStore store(network.config().input_side);
  const TestSet set = load_test_set(test, store);
  const auto stats = subsample_stats(NetworkClassifier(network), set.natural, set.colorized, runs, pairs, seed);
  std::printf("%d runs of %d pairs: max %.2f%% mean %.2f%% min %.2f%%\n", stats.runs, stats.pairs_per_run, stats.max,
              stats.mean, stats.min);
  const std::string id = model_path.string();
  emit_records(out,
               {{id, "", set.method, "hter_max", stats.max},
                {id, "", set.method, "hter_mean", stats.mean},
                {id, "", set.method, "hter_min", stats.min}},
               force);
  return 0;
}

int cmd_embed(const fs::path& model_path, const std::vector<fs::path>& manifests, const fs::path& out, bool force) {
  const Network network = load_model(model_path);
  ImageStore store(network.config().input_side);
  std::vector<LabeledImage> images;
  for (const auto& m : manifests) {
    for (auto& i : load_labeled(load_manifest(m), store)) images.push_back(std::move(i));
  }
  refuse_overwrite(out, force);
  export_embeddings(network, images, out);
  info("wrote " + std::to_string(images.size()) + " records to " + out.string());
  return 0;
}

void warn_nonstandard_width(const Network& network) {
  if (network.config().width_multiplier != 1.0) {
    warn("width multiplier " + std::to_string(network.config().width_multiplier) +
         " gives nonstandard channel counts; the grid will not match the reference layout");
  }
}

int cmd_plot(const std::string& kind, const fs::path& input, const fs::path& image, const fs::path& out, bool force) {
  refuse_overwrite(out, force);
  if (kind == "curves") {
    const fs::path curve = fs::is_directory(input) ? input / kCurveFile : input;
    plot_curves(read_curve(curve), out);
  } else if (kind == "kernels") {
    const Network network = load_model(input);
    warn_nonstandard_width(network);
    plot_kernels(network, out);
  } else if (kind == "featuremaps") {
    if (image.empty()) throw Error("featuremaps needs --image");
    const Network network = load_model(input);
    warn_nonstandard_width(network);
    const auto ref = std::make_shared<const NormalizedImage>(
        preprocess_image(read_image(image), network.config().input_side));
    const std::vector<ImageRef> batch{ref};
    plot_feature_maps(network.conv4_maps(stack_images(batch)), out);
  } else {
    plot_embedding(read_embedding_points(input), out);
  }
  info("wrote " + out.string());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Detector for colorized images: training, enhancement and evaluation"};
  app.require_subcommand(1);

  fs::path synth_out;
  CorpusSpec corpus;
  std::vector<std::string> synth_methods;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic NI/CI corpus with manifests");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--train-pairs", corpus.train_pairs)->check(CLI::PositiveNumber);
  synth->add_option("--test-pairs", corpus.test_pairs)->check(CLI::PositiveNumber);
  synth->add_option("--validation-images", corpus.validation_images)->check(CLI::PositiveNumber);
  synth->add_option("--side", corpus.side, "Image side in pixels")->check(CLI::Range(16, 4096));
  synth->add_option("--methods", synth_methods, "Subset of SynthA SynthB SynthC");
  synth->add_option("--seed", corpus.seed);
  synth->add_flag("--force", synth_force);

  RunOptions train_options;
  auto* train = app.add_subcommand("train", "Stage 1: train from scratch");
  train->add_option("--config", train_options.config, "Run configuration (YAML)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_options.out, "Run directory (default: $COLDETECT_RUN_ROOT/<config name>)");
  add_run_options(train, train_options);

  RunOptions enhance_options;
  fs::path enhance_from;
  auto* enhance = app.add_subcommand("enhance", "Stage 2: negative sample insertion on a trained run");
  enhance->add_option("--from", enhance_from, "Run directory created by train")->required()->check(CLI::ExistingDirectory);
  enhance->add_option("--seed", enhance_options.seeds, "Seed to enhance (repeatable)");
  enhance->add_flag("--force", enhance_options.force);

  fs::path model, test, out;
  std::string train_method = "-";
  std::uint64_t eval_seed = 0;
  bool force = false;
  auto* eval = app.add_subcommand("eval", "HTER of one model on one test manifest");
  eval->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", test, "Test manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--train-method", train_method, "Label stored in the records");
  eval->add_option("--seed", eval_seed, "Seed recorded in the report");
  eval->add_option("--out", out, "Record file (default: stdout)");
  eval->add_flag("--force", force);

  std::vector<std::string> matrix_models;
  std::vector<fs::path> matrix_tests;
  auto* matrix = app.add_subcommand("gen-matrix", "Cross-method generalization matrix");
  matrix->add_option("--model", matrix_models, "METHOD=CHECKPOINT (repeatable)")->required();
  matrix->add_option("--test", matrix_tests, "Test manifest, one per method (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  matrix->add_option("--out", out, "Record file (default: stdout)");
  matrix->add_flag("--force", force);

  int runs = 500, pairs = 1000;
  std::uint64_t subsample_seed = 0;
  auto* subsample = app.add_subcommand("subsample", "HTER spread over random subsets");
  subsample->add_option("--model", model)->required()->check(CLI::ExistingFile);
  subsample->add_option("--test", test)->required()->check(CLI::ExistingFile);
  subsample->add_option("--runs", runs)->check(CLI::PositiveNumber);
  subsample->add_option("--pairs", pairs)->check(CLI::PositiveNumber);
  subsample->add_option("--seed", subsample_seed);
  subsample->add_option("--out", out, "Record file (default: stdout)");
  subsample->add_flag("--force", force);

  std::vector<fs::path> embed_manifests;
  auto* embed = app.add_subcommand("embed", "Export conv8 features for external dimensionality reduction");
  embed->add_option("--model", model)->required()->check(CLI::ExistingFile);
  embed->add_option("--manifest", embed_manifests, "Images to embed (repeatable)")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", out, "Output TSV")->required();
  embed->add_flag("--force", force);

  std::string plot_kind;
  fs::path plot_input, plot_image;
  auto* plot = app.add_subcommand("plot", "Render curves, kernels, feature maps or an embedding");
  plot->add_option("kind", plot_kind, "curves | kernels | featuremaps | embedding")
      ->required()
      ->check(CLI::IsMember({"curves", "kernels", "featuremaps", "embedding"}));
  plot->add_option("--input", plot_input,
                   "Seed directory or curve file (curves), checkpoint (kernels, featuremaps), point TSV (embedding)")
      ->required()
      ->check(CLI::ExistingPath);
  plot->add_option("--image", plot_image, "Input image for featuremaps")->check(CLI::ExistingFile);
  plot->add_option("--out", out, "Output image")->required();
  plot->add_flag("--force", force);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      if (!synth_methods.empty()) {
        corpus.methods.clear();
        for (const auto& m : synth_methods) corpus.methods.push_back(parse_synth_method(m));
      }
      return cmd_synth(synth_out, corpus, synth_force);
    }
    if (*train) return cmd_train(train_options);
    if (*enhance) return cmd_enhance(enhance_from, enhance_options);
    if (*eval) return cmd_eval(model, test, train_method, eval_seed, out, force);
    if (*matrix) return cmd_matrix(matrix_models, matrix_tests, out, force);
    if (*subsample) return cmd_subsample(model, test, runs, pairs, subsample_seed, out, force);
    if (*embed) return cmd_embed(model, embed_manifests, out, force);
    if (*plot) return cmd_plot(plot_kind, plot_input, plot_image, out, force);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace
}  // namespace coldetect::cli

int main(int argc, char** argv) { return coldetect::cli::run(argc, argv); }
