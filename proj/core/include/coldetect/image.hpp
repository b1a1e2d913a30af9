#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "coldetect/tensor.hpp"

namespace coldetect {

/// Interleaved raster on the 0..255 scale, channels in RGB order.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> pixels;

  RawImage() = default;
  RawImage(int w, int h, int c = 3) : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

/// Network input: 3 x side x side planar, values in [-1, 1].
struct NormalizedImage {
  int side = 0;
  std::vector<float> chw;

  float at(int c, int y, int x) const { return chw[(static_cast<std::size_t>(c) * side + y) * side + x]; }
};

using ImageRef = std::shared_ptr<const NormalizedImage>;

/// BT.601 luma weights.
inline constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

/// Decodes any raster format OpenCV understands. The channel count of the
/// file is preserved (1 for grayscale, 4 with alpha).
RawImage read_image(const std::filesystem::path& path);
/// Rounds to 8 bits and encodes by extension (PNG recommended: lossless).
void write_image(const std::filesystem::path& path, const RawImage& image);
/// Rounds every value to the nearest 8-bit level.
RawImage quantize_8bit(const RawImage& image);

/// Bicubic resize to side x side, then linear map [0,255] -> [-1,1].
/// Rejects images that do not have exactly three channels.
NormalizedImage preprocess_image(const RawImage& image, int side = 256);
RawImage denormalize(const NormalizedImage& image);

std::vector<double> luma_plane(const RawImage& image);
std::vector<double> luma_plane(const NormalizedImage& image);
/// Largest per-pixel luma difference on the 0..255 scale.
double max_luma_difference(const NormalizedImage& a, const NormalizedImage& b);

/// Stacks images into an N x 3 x side x side batch.
Tensor stack_images(std::span<const ImageRef> images);
Tensor stack_images(std::span<const NormalizedImage* const> images);

}  // namespace coldetect
