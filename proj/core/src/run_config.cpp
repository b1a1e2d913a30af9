#include "coldetect/run_config.hpp"

#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "coldetect/error.hpp"

namespace coldetect {

namespace {

std::vector<std::string> as_list(const YAML::Node& node) {
  std::vector<std::string> items;
  if (node.IsSequence()) {
    for (const auto& item : node) items.push_back(item.as<std::string>());
    return items;
  }
  std::stringstream text(node.as<std::string>());
  std::string item;
  while (std::getline(text, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first != std::string::npos) items.push_back(item.substr(first, last - first + 1));
  }
  return items;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
  try {
    return YAML::Load(text).as<T>();
  } catch (const YAML::Exception&) {
    throw Error("config: bad value '" + text + "' for " + key);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
  std::filesystem::path path(text);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

void apply(RunConfig& c, const std::string& key, const YAML::Node& node, const std::filesystem::path& base) {
  try {
    if (key == "variant") c.model.variant = parse_variant(node.as<std::string>());
    else if (key == "activation") c.model.first_layer_activation = parse_activation(node.as<std::string>());
    else if (key == "width_multiplier") c.model.width_multiplier = node.as<double>();
    else if (key == "input_side") c.model.input_side = node.as<int>();
    else if (key == "lr0") c.schedule.lr0 = node.as<double>();
    else if (key == "momentum") c.schedule.momentum = node.as<double>();
    else if (key == "weight_decay") c.schedule.weight_decay = node.as<double>();
    else if (key == "stage1_epochs") c.schedule.stage1_epochs = node.as<int>();
    else if (key == "stage1_decay_every") c.schedule.stage1_decay_every = node.as<int>();
    else if (key == "epochs_per_insertion") c.schedule.epochs_per_insertion = node.as<int>();
    else if (key == "stage2_lr0") c.schedule.stage2_lr0 = node.as<double>();
    else if (key == "beta") c.enhance.beta = node.as<double>();
    else if (key == "train_manifest") c.train_manifest = resolve(base, node.as<std::string>());
    else if (key == "validation_manifest") c.validation_manifest = resolve(base, node.as<std::string>());
    else if (key == "alphas") {
      c.schedule.alphas.clear();
      for (const auto& item : as_list(node)) c.schedule.alphas.push_back(parse_scalar<double>(key, item));
    } else if (key == "test_manifests") {
      c.test_manifests.clear();
      for (const auto& item : as_list(node)) c.test_manifests.push_back(resolve(base, item));
    } else if (key == "seeds") {
      c.seeds.clear();
      for (const auto& item : as_list(node)) c.seeds.push_back(parse_scalar<std::uint64_t>(key, item));
    } else {
      throw Error("config: unknown key '" + key + "'");
    }
  } catch (const YAML::Exception& e) {
    throw Error("config: bad value for " + key + ": " + e.msg);
  }
}

void validate(const RunConfig& c) {
  c.model.validate();
  c.schedule.validate();
  if (!(c.enhance.beta > 0.0)) throw Error("config: beta must be positive");
  if (c.seeds.empty()) throw Error("config: at least one seed is required");
}

}  // namespace

RunConfig RunConfig::for_seed(std::uint64_t seed) const {
  RunConfig c = *this;
  c.model.seed = seed;
  c.schedule.seed = seed;
  c.seeds = {seed};
  return c;
}

RunConfig parse_run_config(std::string_view yaml, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  RunConfig config;
  if (root.IsNull()) return config;
  if (!root.IsMap()) throw Error("config: expected a key-value mapping");
  for (const auto& entry : root) apply(config, entry.first.as<std::string>(), entry.second, base_dir);
  validate(config);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot read " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), std::filesystem::absolute(path).parent_path());
}

void apply_override(RunConfig& config, std::string_view key, std::string_view value) {
  YAML::Node node;
  try {
    node = YAML::Load(std::string(value));
  } catch (const YAML::Exception&) {
    node = YAML::Node(std::string(value));
  }
  apply(config, std::string(key), node, std::filesystem::current_path());
  validate(config);
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto path = [](const std::filesystem::path& p) { return p.empty() ? std::string() : std::filesystem::absolute(p).string(); };
  out << YAML::BeginMap;
  out << YAML::Key << "variant" << YAML::Value << std::string(to_string(c.model.variant));
  out << YAML::Key << "activation" << YAML::Value << std::string(to_string(c.model.first_layer_activation));
  out << YAML::Key << "width_multiplier" << YAML::Value << c.model.width_multiplier;
  out << YAML::Key << "input_side" << YAML::Value << c.model.input_side;
  out << YAML::Key << "lr0" << YAML::Value << c.schedule.lr0;
  out << YAML::Key << "momentum" << YAML::Value << c.schedule.momentum;
  out << YAML::Key << "weight_decay" << YAML::Value << c.schedule.weight_decay;
  out << YAML::Key << "stage1_epochs" << YAML::Value << c.schedule.stage1_epochs;
  out << YAML::Key << "stage1_decay_every" << YAML::Value << c.schedule.stage1_decay_every;
  out << YAML::Key << "epochs_per_insertion" << YAML::Value << c.schedule.epochs_per_insertion;
  out << YAML::Key << "alphas" << YAML::Value << YAML::Flow << c.schedule.alphas;
  out << YAML::Key << "stage2_lr0" << YAML::Value << c.schedule.stage2_lr0;
  out << YAML::Key << "beta" << YAML::Value << c.enhance.beta;
  if (!c.train_manifest.empty()) out << YAML::Key << "train_manifest" << YAML::Value << path(c.train_manifest);
  if (!c.validation_manifest.empty()) {
    out << YAML::Key << "validation_manifest" << YAML::Value << path(c.validation_manifest);
  }
  std::vector<std::string> tests;
  for (const auto& t : c.test_manifests) tests.push_back(path(t));
  out << YAML::Key << "test_manifests" << YAML::Value << YAML::Flow << tests;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace coldetect
