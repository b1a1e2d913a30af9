#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coldetect/dataset.hpp"
#include "coldetect/image.hpp"

namespace coldetect {

/// Desk-scale colorizer stand-ins. All three keep BT.601 luma and only
/// replace chroma.
enum class SynthMethod {
  SynthA,  ///< chroma from a per-image polynomial palette of luma
  SynthB,  ///< chroma planes quantized to 8 levels each
  SynthC,  ///< saturation x0.6, hue rotated by 10 degrees
};

std::string_view to_string(SynthMethod method);
SynthMethod parse_synth_method(std::string_view text);

/// Full-range YCbCr (JPEG convention) with an exact inverse.
struct YCbCr {
  double y, cb, cr;
};
YCbCr to_ycbcr(double r, double g, double b);
void from_ycbcr(const YCbCr& ycc, double& r, double& g, double& b);
/// Largest t in [0, 1] with from_ycbcr(y, t*cb, t*cr) inside [0, 255]^3.
double gamut_scale(double y, double cb, double cr);

/// Procedural stand-in for a photograph: smooth illumination, textured
/// objects with independent colors, mild blur and per-channel sensor noise.
RawImage synth_natural_image(int side, std::uint64_t seed);

/// Recolors `natural` keeping its luma. Output is not quantized.
RawImage synth_colorize(const RawImage& natural, SynthMethod method, std::uint64_t seed);

struct CorpusSpec {
  int train_pairs = 200;
  int test_pairs = 100;
  int validation_images = 100;
  int side = 256;
  std::vector<SynthMethod> methods{SynthMethod::SynthA, SynthMethod::SynthB, SynthMethod::SynthC};
  std::uint64_t seed = 0;
};

/// Files written by write_synthetic_corpus, keyed by role.
struct CorpusManifests {
  /// One manifest per method: training NIs plus that method's CIs.
  std::vector<std::pair<SynthMethod, std::filesystem::path>> train;
  std::vector<std::pair<SynthMethod, std::filesystem::path>> test;
  std::filesystem::path validation;
};

/// Writes PNG images and TSV manifests under `dir`.
CorpusManifests write_synthetic_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

/// In-memory variant of one split: naturals and per-method colorized images,
/// both passed through 8-bit quantization as if stored on disk.
struct SyntheticSplit {
  std::vector<LabeledImage> naturals;
  std::vector<std::pair<SynthMethod, std::vector<LabeledImage>>> colorized;

  const std::vector<LabeledImage>& of(SynthMethod method) const;
};

SyntheticSplit make_synthetic_split(const std::string& prefix, int count, int side,
                                    const std::vector<SynthMethod>& methods, std::uint64_t seed);

}  // namespace coldetect
