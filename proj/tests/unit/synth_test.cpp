#include <array>
#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "coldetect/error.hpp"
#include "coldetect/synth.hpp"
#include "test_support.hpp"

namespace coldetect {
namespace {

const std::vector<SynthMethod> kAll{SynthMethod::SynthA, SynthMethod::SynthB, SynthMethod::SynthC};

double max_luma_gap(const RawImage& a, const RawImage& b) {
  const auto la = luma_plane(a), lb = luma_plane(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < la.size(); ++i) worst = std::max(worst, std::abs(la[i] - lb[i]));
  return worst;
}

TEST(YCbCr, InverseIsExact) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double r = rng.uniform(0, 255), g = rng.uniform(0, 255), b = rng.uniform(0, 255);
    double r2, g2, b2;
    from_ycbcr(to_ycbcr(r, g, b), r2, g2, b2);
    ASSERT_NEAR(r, r2, 1e-9);
    ASSERT_NEAR(g, g2, 1e-9);
    ASSERT_NEAR(b, b2, 1e-9);
  }
  const auto white = to_ycbcr(255, 255, 255);
  EXPECT_NEAR(white.y, 255.0, 1e-9);
  EXPECT_NEAR(white.cb, 0.0, 1e-9);
  EXPECT_NEAR(white.cr, 0.0, 1e-9);
  EXPECT_NEAR(to_ycbcr(0, 0, 255).cb, 127.5, 1e-9);
  EXPECT_NEAR(to_ycbcr(255, 0, 0).cr, 127.5, 1e-9);
}

TEST(GamutScale, LargestFeasibleFactor) {
  EXPECT_EQ(gamut_scale(128, 10, -10), 1.0);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const double y = rng.uniform(1, 254), cb = rng.uniform(-300, 300), cr = rng.uniform(-300, 300);
    const double t = gamut_scale(y, cb, cr);
    ASSERT_GE(t, 0.0);
    ASSERT_LE(t, 1.0);
    double r, g, b;
    from_ycbcr({y, t * cb, t * cr}, r, g, b);
    for (double v : {r, g, b}) {
      ASSERT_GE(v, -1e-9);
      ASSERT_LE(v, 255 + 1e-9);
    }
    if (t < 1.0) {
      from_ycbcr({y, (t + 1e-6) * cb, (t + 1e-6) * cr}, r, g, b);
      EXPECT_TRUE(r < 0 || g < 0 || b < 0 || r > 255 || g > 255 || b > 255);
    }
  }
}

TEST(NaturalImage, DeterministicAndVaried) {
  const auto a = synth_natural_image(64, 5);
  EXPECT_EQ(a.pixels, synth_natural_image(64, 5).pixels);
  EXPECT_NE(a.pixels, synth_natural_image(64, 6).pixels);
  EXPECT_EQ(a.width, 64);
  EXPECT_EQ(a.channels, 3);
  double mean = 0.0, sq = 0.0;
  for (float v : a.pixels) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 255.0f);
    mean += v;
    sq += static_cast<double>(v) * v;
  }
  mean /= a.pixels.size();
  EXPECT_GT(sq / a.pixels.size() - mean * mean, 100.0);
}

TEST(Colorize, PreservesLuma) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto natural = quantize_8bit(synth_natural_image(96, seed));
    for (auto method : kAll) {
      const auto colorized = synth_colorize(natural, method, seed);
      EXPECT_LE(max_luma_gap(natural, colorized), 1e-4) << to_string(method);
      EXPECT_LE(max_luma_gap(natural, quantize_8bit(colorized)), kLumaTolerance) << to_string(method);
    }
  }
}

TEST(Colorize, DeterministicGivenSeed) {
  const auto natural = synth_natural_image(48, 1);
  for (auto method : kAll) {
    EXPECT_EQ(synth_colorize(natural, method, 7).pixels, synth_colorize(natural, method, 7).pixels);
  }
  EXPECT_NE(synth_colorize(natural, SynthMethod::SynthA, 7).pixels,
            synth_colorize(natural, SynthMethod::SynthA, 8).pixels);
}

TEST(Colorize, SynthBUsesAtMost64ChromaPairs) {
  const auto natural = synth_natural_image(128, 3);
  const auto colorized = synth_colorize(natural, SynthMethod::SynthB, 0);
  std::set<std::pair<long, long>> pairs;
  for (std::size_t i = 0; i < colorized.pixels.size(); i += 3) {
    const auto ycc = to_ycbcr(colorized.pixels[i], colorized.pixels[i + 1], colorized.pixels[i + 2]);
    pairs.emplace(std::lround(ycc.cb), std::lround(ycc.cr));
  }
  EXPECT_LE(pairs.size(), 64u);
  EXPECT_GT(pairs.size(), 1u);
}

TEST(Colorize, SynthCRotatesAndDesaturates) {
  const auto natural = synth_natural_image(96, 4);
  const auto colorized = synth_colorize(natural, SynthMethod::SynthC, 0);
  int checked = 0;
  for (std::size_t i = 0; i < natural.pixels.size(); i += 3) {
    const auto in = to_ycbcr(natural.pixels[i], natural.pixels[i + 1], natural.pixels[i + 2]);
    const auto out = to_ycbcr(colorized.pixels[i], colorized.pixels[i + 1], colorized.pixels[i + 2]);
    const double rin = std::hypot(in.cb, in.cr), rout = std::hypot(out.cb, out.cr);
    if (rin < 10.0) continue;
    EXPECT_LE(rout, 0.6 * rin + 1e-3);
    if (rout > 0.6 * rin - 1e-3) {
      double turn = std::atan2(out.cr, out.cb) - std::atan2(in.cr, in.cb);
      turn = std::remainder(turn, 2 * std::numbers::pi);
      ASSERT_NEAR(turn * 180.0 / std::numbers::pi, 10.0, 1e-2);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Colorize, MethodsHaveDistinctChromaStatistics) {
  // Mean and spread of both chroma planes per method.
  const auto natural = quantize_8bit(synth_natural_image(96, 9));
  std::vector<std::array<double, 4>> stats;
  for (auto method : kAll) {
    const auto colorized = synth_colorize(natural, method, 9);
    std::array<double, 4> s{};
    const double n = colorized.pixels.size() / 3.0;
    for (std::size_t i = 0; i < colorized.pixels.size(); i += 3) {
      const auto ycc = to_ycbcr(colorized.pixels[i], colorized.pixels[i + 1], colorized.pixels[i + 2]);
      s[0] += ycc.cb / n;
      s[1] += ycc.cr / n;
      s[2] += ycc.cb * ycc.cb / n;
      s[3] += ycc.cr * ycc.cr / n;
    }
    s[2] = std::sqrt(std::max(0.0, s[2] - s[0] * s[0]));
    s[3] = std::sqrt(std::max(0.0, s[3] - s[1] * s[1]));
    stats.push_back(s);
  }
  for (std::size_t i = 0; i < stats.size(); ++i) {
    for (std::size_t j = i + 1; j < stats.size(); ++j) {
      double d = 0.0;
      for (int k = 0; k < 4; ++k) d += std::pow(stats[i][k] - stats[j][k], 2);
      EXPECT_GT(std::sqrt(d), 1.0) << i << " vs " << j;
    }
  }
}

TEST(SynthMethodNames, RoundTrip) {
  for (auto method : kAll) EXPECT_EQ(parse_synth_method(to_string(method)), method);
  EXPECT_THROW(parse_synth_method("SynthZ"), Error);
}

TEST(SyntheticSplit, PairsPassValidation) {
  const auto split = make_synthetic_split("train", 6, 64, kAll, 11);
  EXPECT_EQ(split.naturals.size(), 6u);
  for (auto method : kAll) {
    const auto& images = split.of(method);
    ASSERT_EQ(images.size(), 6u);
    const auto result = build_pairs(split.naturals, images);
    EXPECT_EQ(result.pairs.size(), 6u);
    EXPECT_TRUE(result.rejected.empty());
  }
  EXPECT_EQ(split.naturals[3].record.pair_id, "train-000003");
}

TEST(SyntheticCorpus, DiskCorpusMatchesInMemorySplit) {
  testing::TempDir dir;
  CorpusSpec spec;
  spec.train_pairs = 3;
  spec.test_pairs = 2;
  spec.validation_images = 2;
  spec.side = 64;
  spec.seed = 4;
  const auto manifests = write_synthetic_corpus(dir.path(), spec);
  ASSERT_EQ(manifests.train.size(), 3u);
  ASSERT_EQ(manifests.test.size(), 3u);

  const auto split = make_synthetic_split("train", 3, 64, kAll, 4);
  ImageStore store(64);
  for (const auto& [method, path] : manifests.train) {
    const auto dataset = load_manifest(path);
    EXPECT_EQ(dataset.count(kNatural), 3u);
    EXPECT_EQ(dataset.count(kColorized), 3u);
    const auto images = load_labeled(dataset, store);
    const auto pairs = build_pairs(load_labeled(dataset.with_label(kNatural), store),
                                   load_labeled(dataset.with_label(kColorized), store));
    EXPECT_EQ(pairs.pairs.size(), 3u);
    for (const auto& image : images) {
      const auto& expected = image.record.label == kNatural ? split.naturals : split.of(method);
      bool found = false;
      for (const auto& e : expected) {
        if (e.record.pair_id != image.record.pair_id) continue;
        EXPECT_EQ(e.image->chw, image.image->chw) << image.record.path;
        found = true;
      }
      EXPECT_TRUE(found) << image.record.pair_id;
    }
  }
  const auto validation = load_manifest(manifests.validation);
  EXPECT_EQ(validation.size(), 2u);
  EXPECT_EQ(validation.count(kNatural), 2u);
}

}  // namespace
}  // namespace coldetect
