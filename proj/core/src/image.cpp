#include "coldetect/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "coldetect/error.hpp"

namespace coldetect {

RawImage read_image(const std::filesystem::path& path) {
  cv::Mat decoded = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw Error("cannot decode image " + path.string());
  if (decoded.depth() != CV_8U) {
    throw Error(path.string() + ": only 8-bit images are supported");
  }
  const int channels = decoded.channels();
  if (channels == 3) {
    cv::cvtColor(decoded, decoded, cv::COLOR_BGR2RGB);
  } else if (channels == 4) {
    cv::cvtColor(decoded, decoded, cv::COLOR_BGRA2RGBA);
  }
  RawImage image(decoded.cols, decoded.rows, channels);
  for (int y = 0; y < decoded.rows; ++y) {
    const auto* row = decoded.ptr<std::uint8_t>(y);
    std::copy(row, row + static_cast<std::size_t>(decoded.cols) * channels,
              image.pixels.begin() + static_cast<std::ptrdiff_t>(y) * decoded.cols * channels);
  }
  return image;
}

void write_image(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels != 3 && image.channels != 1) throw Error("write_image: unsupported channel count");
  cv::Mat mat(image.height, image.width, image.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < image.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int i = 0; i < image.width * image.channels; ++i) {
      const float v = image.pixels[static_cast<std::size_t>(y) * image.width * image.channels + i];
      row[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  if (image.channels == 3) cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
  bool written = false;
  try {
    written = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw Error("cannot write image " + path.string() + ": " + e.what());
  }
  if (!written) throw Error("cannot write image " + path.string());
}

RawImage quantize_8bit(const RawImage& image) {
  RawImage out = image;
  for (auto& v : out.pixels) v = static_cast<float>(std::clamp(std::lround(v), 0L, 255L));
  return out;
}

NormalizedImage preprocess_image(const RawImage& image, int side) {
  if (image.channels != 3) {
    throw Error("preprocess: expected a 3-channel RGB image, got " + std::to_string(image.channels) +
                " channel(s)");
  }
  if (image.width < 1 || image.height < 1) throw Error("preprocess: empty image");
  if (side < 1) throw Error("preprocess: invalid target side");
  cv::Mat source(image.height, image.width, CV_32FC3, const_cast<float*>(image.pixels.data()));
  cv::Mat resized;
  if (image.width == side && image.height == side) {
    resized = source;
  } else {
    cv::resize(source, resized, cv::Size(side, side), 0, 0, cv::INTER_CUBIC);
  }
  NormalizedImage out;
  out.side = side;
  out.chw.resize(static_cast<std::size_t>(3) * side * side);
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (int y = 0; y < side; ++y) {
    const float* row = resized.ptr<float>(y);
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(row[x * 3 + c]), 0.0, 255.0);
        out.chw[c * plane + static_cast<std::size_t>(y) * side + x] = static_cast<float>(v / 127.5 - 1.0);
      }
    }
  }
  return out;
}

RawImage denormalize(const NormalizedImage& image) {
  RawImage out(image.side, image.side, 3);
  for (int y = 0; y < image.side; ++y) {
    for (int x = 0; x < image.side; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>((image.at(c, y, x) + 1.0) * 127.5);
    }
  }
  return out;
}

std::vector<double> luma_plane(const RawImage& image) {
  if (image.channels != 3) throw Error("luma: expected 3 channels");
  std::vector<double> luma(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < luma.size(); ++i) {
    const float* p = image.pixels.data() + 3 * i;
    luma[i] = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
  }
  return luma;
}

std::vector<double> luma_plane(const NormalizedImage& image) {
  const std::size_t plane = static_cast<std::size_t>(image.side) * image.side;
  std::vector<double> luma(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = (image.chw[i] + 1.0) * 127.5;
    const double g = (image.chw[plane + i] + 1.0) * 127.5;
    const double b = (image.chw[2 * plane + i] + 1.0) * 127.5;
    luma[i] = kLumaR * r + kLumaG * g + kLumaB * b;
  }
  return luma;
}

double max_luma_difference(const NormalizedImage& a, const NormalizedImage& b) {
  if (a.side != b.side) throw Error("luma comparison: image sizes differ");
  const auto la = luma_plane(a);
  const auto lb = luma_plane(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < la.size(); ++i) worst = std::max(worst, std::abs(la[i] - lb[i]));
  return worst;
}

Tensor stack_images(std::span<const NormalizedImage* const> images) {
  if (images.empty()) throw Error("stack_images: no images");
  const int side = images.front()->side;
  Tensor batch;
  batch.reshape_uninitialized(static_cast<int>(images.size()), 3, side, side);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->side != side) throw Error("stack_images: mixed image sizes");
    std::memcpy(batch.sample(static_cast<int>(i)), images[i]->chw.data(), sizeof(float) * images[i]->chw.size());
  }
  return batch;
}

Tensor stack_images(std::span<const ImageRef> images) {
  std::vector<const NormalizedImage*> raw;
  raw.reserve(images.size());
  for (const auto& image : images) raw.push_back(image.get());
  return stack_images(std::span<const NormalizedImage* const>(raw));
}

}  // namespace coldetect
