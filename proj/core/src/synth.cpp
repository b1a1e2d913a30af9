#include "coldetect/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "coldetect/error.hpp"
#include "coldetect/rng.hpp"

namespace coldetect {

namespace {

// Exact inverse of the BT.601 luma weights.
constexpr double kCrToR = 2.0 * (1.0 - kLumaR);
constexpr double kCbToB = 2.0 * (1.0 - kLumaB);
constexpr double kCbToG = 2.0 * kLumaB * (1.0 - kLumaB) / kLumaG;
constexpr double kCrToG = 2.0 * kLumaR * (1.0 - kLumaR) / kLumaG;

constexpr std::uint64_t kNaturalStream = 0x4e41545552414cULL;
constexpr std::uint64_t kPaletteStream = 0x50414c45545445ULL;

std::uint64_t hash_text(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

cv::Vec3f hsv_to_rgb(double hue, double sat, double val) {
  const double c = val * sat;
  const double h = std::fmod(hue, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = val - c;
  return {static_cast<float>(255.0 * (r + m)), static_cast<float>(255.0 * (g + m)),
          static_cast<float>(255.0 * (b + m))};
}

cv::Vec3f random_color(Rng& rng, double max_saturation) {
  return hsv_to_rgb(rng.uniform(0.0, 360.0), rng.uniform(0.1, max_saturation), rng.uniform(0.2, 0.95));
}

// Paints one object into `canvas` through `mask`: a blend of two colors
// driven by one sinusoid plus a luminance texture from a second one.
void paint_object(cv::Mat& canvas, const cv::Mat& mask, Rng& rng) {
  const cv::Vec3f first = random_color(rng, 0.9);
  const cv::Vec3f second = random_color(rng, 0.9);
  const double blend_depth = rng.uniform(0.0, 0.7);
  const double blend_freq = rng.uniform(0.005, 0.06);
  const double blend_angle = rng.uniform(0.0, std::numbers::pi);
  const double blend_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double texture_amp = rng.uniform(0.0, 30.0);
  const double texture_freq = rng.uniform(0.03, 0.3);
  const double texture_angle = rng.uniform(0.0, std::numbers::pi);
  const double bc = std::cos(blend_angle), bs = std::sin(blend_angle);
  const double tc = std::cos(texture_angle), ts = std::sin(texture_angle);
  for (int y = 0; y < canvas.rows; ++y) {
    const auto* m = mask.ptr<std::uint8_t>(y);
    auto* row = canvas.ptr<cv::Vec3f>(y);
    for (int x = 0; x < canvas.cols; ++x) {
      if (m[x] == 0) continue;
      const double w = blend_depth * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * blend_freq * (x * bc + y * bs) +
                                                             blend_phase));
      const double t = texture_amp * std::sin(2.0 * std::numbers::pi * texture_freq * (x * tc + y * ts));
      for (int c = 0; c < 3; ++c) {
        row[x][c] = static_cast<float>((1.0 - w) * first[c] + w * second[c] + t);
      }
    }
  }
}

cv::Mat random_shape_mask(int side, Rng& rng) {
  cv::Mat mask = cv::Mat::zeros(side, side, CV_8UC1);
  const cv::Point center(static_cast<int>(rng.uniform(0.0, side)), static_cast<int>(rng.uniform(0.0, side)));
  const double scale = rng.uniform(0.08, 0.35) * side;
  switch (rng.index(3)) {
    case 0: {
      const cv::Size axes(static_cast<int>(scale), static_cast<int>(scale * rng.uniform(0.3, 1.0)));
      cv::ellipse(mask, center, axes, rng.uniform(0.0, 180.0), 0.0, 360.0, cv::Scalar(255), cv::FILLED,
                  cv::LINE_AA);
      break;
    }
    case 1: {
      const cv::RotatedRect rect(center, cv::Size2f(static_cast<float>(scale * 1.6),
                                                    static_cast<float>(scale * rng.uniform(0.3, 1.4))),
                                 static_cast<float>(rng.uniform(0.0, 180.0)));
      cv::Point2f corners[4];
      rect.points(corners);
      std::vector<cv::Point> polygon(corners, corners + 4);
      cv::fillConvexPoly(mask, polygon, cv::Scalar(255), cv::LINE_AA);
      break;
    }
    default: {
      const int vertices = 3 + static_cast<int>(rng.index(5));
      std::vector<cv::Point> polygon;
      for (int i = 0; i < vertices; ++i) {
        const double angle = 2.0 * std::numbers::pi * (i + rng.uniform(0.0, 0.8)) / vertices;
        const double radius = scale * rng.uniform(0.4, 1.0);
        polygon.emplace_back(center.x + static_cast<int>(radius * std::cos(angle)),
                             center.y + static_cast<int>(radius * std::sin(angle)));
      }
      cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{polygon}, cv::Scalar(255), cv::LINE_AA);
      break;
    }
  }
  cv::threshold(mask, mask, 127, 255, cv::THRESH_BINARY);
  return mask;
}

RawImage from_mat(const cv::Mat& mat) {
  RawImage image(mat.cols, mat.rows, 3);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3f>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = std::clamp(row[x][c], 0.0f, 255.0f);
    }
  }
  return image;
}

template <class ChromaFn>
RawImage recolor(const RawImage& natural, ChromaFn&& chroma) {
  if (natural.channels != 3) throw Error("synth_colorize: expected a 3-channel image");
  RawImage out(natural.width, natural.height, 3);
  for (std::size_t i = 0; i < static_cast<std::size_t>(natural.width) * natural.height; ++i) {
    const float* p = natural.pixels.data() + 3 * i;
    YCbCr ycc = to_ycbcr(p[0], p[1], p[2]);
    chroma(ycc);
    double r, g, b;
    from_ycbcr(ycc, r, g, b);
    float* q = out.pixels.data() + 3 * i;
    q[0] = static_cast<float>(std::clamp(r, 0.0, 255.0));
    q[1] = static_cast<float>(std::clamp(g, 0.0, 255.0));
    q[2] = static_cast<float>(std::clamp(b, 0.0, 255.0));
  }
  return out;
}

void fit_gamut(YCbCr& ycc) {
  const double t = gamut_scale(ycc.y, ycc.cb, ycc.cr);
  ycc.cb *= t;
  ycc.cr *= t;
}

}  // namespace

std::string_view to_string(SynthMethod method) {
  switch (method) {
    case SynthMethod::SynthA: return "SynthA";
    case SynthMethod::SynthB: return "SynthB";
    case SynthMethod::SynthC: return "SynthC";
  }
  throw Error("unknown synthetic method");
}

SynthMethod parse_synth_method(std::string_view text) {
  if (text == "SynthA" || text == "A") return SynthMethod::SynthA;
  if (text == "SynthB" || text == "B") return SynthMethod::SynthB;
  if (text == "SynthC" || text == "C") return SynthMethod::SynthC;
  throw Error("unknown synthetic method '" + std::string(text) + "'");
}

YCbCr to_ycbcr(double r, double g, double b) {
  const double y = kLumaR * r + kLumaG * g + kLumaB * b;
  return {y, (b - y) / kCbToB, (r - y) / kCrToR};
}

void from_ycbcr(const YCbCr& ycc, double& r, double& g, double& b) {
  r = ycc.y + kCrToR * ycc.cr;
  g = ycc.y - kCbToG * ycc.cb - kCrToG * ycc.cr;
  b = ycc.y + kCbToB * ycc.cb;
}

double gamut_scale(double y, double cb, double cr) {
  const std::array<double, 3> slope{kCrToR * cr, -kCbToG * cb - kCrToG * cr, kCbToB * cb};
  double t = 1.0;
  for (double k : slope) {
    if (k > 0.0) t = std::min(t, (255.0 - y) / k);
    if (k < 0.0) t = std::min(t, -y / k);
  }
  return std::max(t, 0.0);
}

RawImage synth_natural_image(int side, std::uint64_t seed) {
  if (side < 8) throw Error("synth_natural_image: side too small");
  Rng rng(mix_seed(seed, kNaturalStream));
  cv::Mat canvas(side, side, CV_32FC3);

  const cv::Vec3f c00 = random_color(rng, 0.6), c01 = random_color(rng, 0.6);
  const cv::Vec3f c10 = random_color(rng, 0.6), c11 = random_color(rng, 0.6);
  for (int y = 0; y < side; ++y) {
    const float v = static_cast<float>(y) / (side - 1);
    auto* row = canvas.ptr<cv::Vec3f>(y);
    for (int x = 0; x < side; ++x) {
      const float u = static_cast<float>(x) / (side - 1);
      row[x] = (1 - v) * ((1 - u) * c00 + u * c01) + v * ((1 - u) * c10 + u * c11);
    }
  }

  // Low-frequency illumination and color drift.
  cv::Mat coarse(6, 6, CV_32FC3);
  for (int y = 0; y < coarse.rows; ++y) {
    for (int x = 0; x < coarse.cols; ++x) {
      const float shade = static_cast<float>(15.0 * rng.normal());
      for (int c = 0; c < 3; ++c) coarse.at<cv::Vec3f>(y, x)[c] = shade + static_cast<float>(8.0 * rng.normal());
    }
  }
  cv::Mat drift;
  cv::resize(coarse, drift, cv::Size(side, side), 0, 0, cv::INTER_CUBIC);
  canvas += drift;

  const int objects = 5 + static_cast<int>(rng.index(10));
  for (int i = 0; i < objects; ++i) paint_object(canvas, random_shape_mask(side, rng), rng);

  cv::GaussianBlur(canvas, canvas, cv::Size(5, 5), 0.8);
  for (int y = 0; y < side; ++y) {
    auto* row = canvas.ptr<cv::Vec3f>(y);
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) row[x][c] += static_cast<float>(2.0 * rng.normal());
    }
  }
  return from_mat(canvas);
}

RawImage synth_colorize(const RawImage& natural, SynthMethod method, std::uint64_t seed) {
  switch (method) {
    case SynthMethod::SynthA: {
      Rng rng(mix_seed(seed, kPaletteStream));
      std::array<double, 4> cb{}, cr{};
      const std::array<double, 4> range{40.0, 160.0, 200.0, 300.0};
      for (int j = 0; j < 4; ++j) {
        cb[j] = rng.uniform(-range[j], range[j]);
        cr[j] = rng.uniform(-range[j], range[j]);
      }
      return recolor(natural, [&](YCbCr& ycc) {
        const double t = ycc.y / 255.0 - 0.5;
        ycc.cb = cb[0] + t * (cb[1] + t * (cb[2] + t * cb[3]));
        ycc.cr = cr[0] + t * (cr[1] + t * (cr[2] + t * cr[3]));
        fit_gamut(ycc);
      });
    }
    case SynthMethod::SynthB: {
      constexpr int kLevels = 8;
      constexpr double kStep = 32.0;
      return recolor(natural, [](YCbCr& ycc) {
        double best_cb = 0.0, best_cr = 0.0, best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < kLevels; ++i) {
          const double qcb = (i - kLevels / 2) * kStep;
          for (int j = 0; j < kLevels; ++j) {
            const double qcr = (j - kLevels / 2) * kStep;
            const double d = (qcb - ycc.cb) * (qcb - ycc.cb) + (qcr - ycc.cr) * (qcr - ycc.cr);
            if (d < best && gamut_scale(ycc.y, qcb, qcr) >= 1.0) {
              best = d;
              best_cb = qcb;
              best_cr = qcr;
            }
          }
        }
        ycc.cb = best_cb;
        ycc.cr = best_cr;
      });
    }
    case SynthMethod::SynthC: {
      const double angle = 10.0 * std::numbers::pi / 180.0;
      const double c = std::cos(angle), s = std::sin(angle);
      return recolor(natural, [c, s](YCbCr& ycc) {
        const double cb = 0.6 * (c * ycc.cb - s * ycc.cr);
        const double cr = 0.6 * (s * ycc.cb + c * ycc.cr);
        ycc.cb = cb;
        ycc.cr = cr;
        fit_gamut(ycc);
      });
    }
  }
  throw Error("unknown synthetic method");
}

const std::vector<LabeledImage>& SyntheticSplit::of(SynthMethod method) const {
  for (const auto& [m, images] : colorized) {
    if (m == method) return images;
  }
  throw Error("split has no images for " + std::string(to_string(method)));
}

namespace {

std::string pair_name(const std::string& prefix, int index) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%06d", index);
  return prefix + "-" + buffer;
}

std::uint64_t image_seed(std::uint64_t seed, const std::string& prefix, int index) {
  return mix_seed(mix_seed(seed, hash_text(prefix)), static_cast<std::uint64_t>(index));
}

std::uint64_t colorize_seed(std::uint64_t seed, const std::string& prefix, int index, SynthMethod method) {
  return mix_seed(image_seed(seed, prefix, index), static_cast<std::uint64_t>(method) + 1);
}

}  // namespace

SyntheticSplit make_synthetic_split(const std::string& prefix, int count, int side,
                                    const std::vector<SynthMethod>& methods, std::uint64_t seed) {
  SyntheticSplit split;
  for (auto method : methods) split.colorized.push_back({method, {}});
  for (int i = 0; i < count; ++i) {
    const auto id = pair_name(prefix, i);
    const RawImage natural = quantize_8bit(synth_natural_image(side, image_seed(seed, prefix, i)));
    split.naturals.push_back({{"mem://" + prefix + "/natural/" + id, kNatural, std::string(kNaturalMethod), id},
                              std::make_shared<const NormalizedImage>(preprocess_image(natural, side))});
    for (auto& [method, images] : split.colorized) {
      const RawImage colorized = quantize_8bit(synth_colorize(natural, method, colorize_seed(seed, prefix, i, method)));
      const std::string name(to_string(method));
      images.push_back({{"mem://" + prefix + "/" + name + "/" + id, kColorized, name, id},
                        std::make_shared<const NormalizedImage>(preprocess_image(colorized, side))});
    }
  }
  return split;
}

CorpusManifests write_synthetic_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  if (spec.train_pairs < 1 || spec.test_pairs < 1 || spec.validation_images < 1) {
    throw Error("synthetic corpus: every split needs at least one image");
  }
  std::filesystem::create_directories(dir);
  CorpusManifests manifests;

  auto write_split = [&](const std::string& prefix, int count,
                         std::vector<std::pair<SynthMethod, std::filesystem::path>>& out) {
    Dataset naturals;
    std::vector<Dataset> colorized(spec.methods.size());
    std::filesystem::create_directories(dir / prefix / "natural");
    for (auto method : spec.methods) std::filesystem::create_directories(dir / prefix / std::string(to_string(method)));
    for (int i = 0; i < count; ++i) {
      const auto id = pair_name(prefix, i);
      const RawImage natural = quantize_8bit(synth_natural_image(spec.side, image_seed(spec.seed, prefix, i)));
      const auto natural_path = dir / prefix / "natural" / (id + ".png");
      write_image(natural_path, natural);
      naturals.records.push_back({natural_path, kNatural, std::string(kNaturalMethod), id});
      for (std::size_t m = 0; m < spec.methods.size(); ++m) {
        const auto method = spec.methods[m];
        const std::string name(to_string(method));
        const auto path = dir / prefix / name / (id + ".png");
        write_image(path, synth_colorize(natural, method, colorize_seed(spec.seed, prefix, i, method)));
        colorized[m].records.push_back({path, kColorized, name, id});
      }
    }
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      Dataset manifest = naturals;
      manifest.records.insert(manifest.records.end(), colorized[m].records.begin(), colorized[m].records.end());
      const auto path = dir / (prefix + "_" + std::string(to_string(spec.methods[m])) + ".tsv");
      write_manifest(path, manifest);
      out.emplace_back(spec.methods[m], path);
    }
  };

  write_split("train", spec.train_pairs, manifests.train);
  write_split("test", spec.test_pairs, manifests.test);

  Dataset validation;
  std::filesystem::create_directories(dir / "validation");
  for (int i = 0; i < spec.validation_images; ++i) {
    const auto id = pair_name("val", i);
    const auto path = dir / "validation" / (id + ".png");
    write_image(path, synth_natural_image(spec.side, image_seed(spec.seed, "val", i)));
    validation.records.push_back({path, kNatural, std::string(kNaturalMethod), id});
  }
  manifests.validation = dir / "validation.tsv";
  write_manifest(manifests.validation, validation);
  return manifests;
}

}  // namespace coldetect
