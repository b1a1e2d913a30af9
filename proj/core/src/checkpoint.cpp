#include "coldetect/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>

#include "coldetect/error.hpp"

namespace coldetect {

// Found by argument-dependent lookup, so these live in the library namespace.
template <class Archive>
void serialize(Archive& archive, ModelConfig& config) {
  int variant = static_cast<int>(config.variant);
  int activation = static_cast<int>(config.first_layer_activation);
  archive(variant, activation, config.width_multiplier, config.input_side, config.seed);
  config.variant = static_cast<Variant>(variant);
  config.first_layer_activation = static_cast<Activation>(activation);
}

template <class Archive>
void serialize(Archive& archive, NamedArray& array) {
  archive(array.name, array.values);
}

namespace {

constexpr char kMagic[8] = {'C', 'O', 'L', 'D', 'C', 'K', 'P', 'T'};

template <class View>
void copy_into(const std::vector<View>& views, const std::vector<NamedArray>& arrays, const char* what) {
  if (views.size() != arrays.size()) {
    throw Error(std::string("checkpoint: ") + what + " count mismatch (" + std::to_string(arrays.size()) +
                " stored, " + std::to_string(views.size()) + " expected)");
  }
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].name != arrays[i].name || views[i].value.size() != arrays[i].values.size()) {
      throw Error(std::string("checkpoint: ") + what + " '" + arrays[i].name + "' does not match the network layout");
    }
    std::copy(arrays[i].values.begin(), arrays[i].values.end(), views[i].value.begin());
  }
}

}  // namespace

Checkpoint capture(Network& network) {
  Checkpoint checkpoint;
  checkpoint.config = network.config();
  for (const auto& p : network.parameters()) {
    checkpoint.parameters.push_back({p.name, {p.value.begin(), p.value.end()}});
  }
  for (const auto& b : network.buffers()) {
    checkpoint.running_stats.push_back({b.name, {b.value.begin(), b.value.end()}});
  }
  return checkpoint;
}

void load_state(Network& network, const Checkpoint& checkpoint) {
  if (!(network.config().variant == checkpoint.config.variant &&
        network.config().first_layer_activation == checkpoint.config.first_layer_activation &&
        network.config().width_multiplier == checkpoint.config.width_multiplier &&
        network.config().input_side == checkpoint.config.input_side)) {
    throw Error("checkpoint: architecture does not match the network");
  }
  copy_into(network.parameters(), checkpoint.parameters, "parameter");
  copy_into(network.buffers(), checkpoint.running_stats, "running statistic");
}

Network restore_network(const Checkpoint& checkpoint) {
  Network network(checkpoint.config);
  load_state(network, checkpoint);
  return network;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  cereal::PortableBinaryOutputArchive archive(out);
  std::uint32_t version = Checkpoint::kFormatVersion;
  auto copy = checkpoint;
  archive(version, copy.config, copy.parameters, copy.running_stats, copy.momentum, copy.epoch, copy.learning_rate,
          copy.rng_state);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw Error(path.string() + " is not a checkpoint file");
  }
  Checkpoint checkpoint;
  try {
    cereal::PortableBinaryInputArchive archive(in);
    std::uint32_t version = 0;
    archive(version);
    if (version != Checkpoint::kFormatVersion) {
      throw Error("unsupported checkpoint version " + std::to_string(version));
    }
    archive(checkpoint.config, checkpoint.parameters, checkpoint.running_stats, checkpoint.momentum,
            checkpoint.epoch, checkpoint.learning_rate, checkpoint.rng_state);
  } catch (const cereal::Exception& e) {
    throw Error("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint;
}

}  // namespace coldetect
