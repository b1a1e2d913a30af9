#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "coldetect/error.hpp"
#include "coldetect/image.hpp"
#include "test_support.hpp"

namespace coldetect {
namespace {

RawImage constant(int w, int h, float value) {
  RawImage image(w, h);
  std::fill(image.pixels.begin(), image.pixels.end(), value);
  return image;
}

TEST(Preprocess, LinearMapEndpoints) {
  for (auto [value, expected] : {std::pair{255.0f, 1.0f}, {0.0f, -1.0f}, {127.5f, 0.0f}}) {
    const auto out = preprocess_image(constant(40, 30, value));
    EXPECT_EQ(out.side, 256);
    ASSERT_EQ(out.chw.size(), 3u * 256 * 256);
    for (float v : out.chw) ASSERT_NEAR(v, expected, 1e-5);
  }
}

TEST(Preprocess, PlanarChannelOrder) {
  RawImage image(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      image.at(y, x, 0) = 255.0f;
      image.at(y, x, 1) = 0.0f;
      image.at(y, x, 2) = 127.5f;
    }
  }
  const auto out = preprocess_image(image, 8);
  EXPECT_NEAR(out.at(0, 3, 3), 1.0f, 1e-5);
  EXPECT_NEAR(out.at(1, 3, 3), -1.0f, 1e-5);
  EXPECT_NEAR(out.at(2, 3, 3), 0.0f, 1e-5);
}

TEST(Preprocess, SameSizeIsIdentityUpToScale) {
  RawImage image(16, 16);
  Rng rng(1);
  for (auto& v : image.pixels) v = static_cast<float>(std::round(rng.uniform(0.0, 255.0)));
  const auto out = preprocess_image(image, 16);
  const auto back = denormalize(out);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) ASSERT_NEAR(back.pixels[i], image.pixels[i], 1e-3);
}

TEST(Preprocess, RejectsNonRgb) {
  EXPECT_THROW(preprocess_image(RawImage(8, 8, 1)), Error);
  EXPECT_THROW(preprocess_image(RawImage(8, 8, 4)), Error);
  EXPECT_THROW(preprocess_image(RawImage(0, 0, 3)), Error);
}

TEST(ImageIo, PngRoundTripIsLossless) {
  testing::TempDir dir;
  RawImage image(9, 7);
  Rng rng(2);
  for (auto& v : image.pixels) v = static_cast<float>(rng.index(256));
  write_image(dir / "a.png", image);
  const auto back = read_image(dir / "a.png");
  EXPECT_EQ(back.width, 9);
  EXPECT_EQ(back.height, 7);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.pixels, image.pixels);
}

TEST(ImageIo, ReadsRgbNotBgr) {
  testing::TempDir dir;
  RawImage image(2, 2);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) image.at(y, x, 0) = 200.0f;
  }
  write_image(dir / "red.png", image);
  const auto back = read_image(dir / "red.png");
  EXPECT_EQ(back.at(1, 1, 0), 200.0f);
  EXPECT_EQ(back.at(1, 1, 2), 0.0f);
}

TEST(ImageIo, MissingOrCorruptFileThrows) {
  testing::TempDir dir;
  EXPECT_THROW(read_image(dir / "missing.png"), Error);
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(read_image(dir / "junk.png"), Error);
}

TEST(Quantize, RoundsAndClamps) {
  RawImage image(1, 1);
  image.pixels = {12.4f, 12.6f, 300.0f};
  const auto q = quantize_8bit(image);
  EXPECT_EQ(q.pixels, (std::vector<float>{12.0f, 13.0f, 255.0f}));
}

TEST(Luma, Bt601Weights) {
  RawImage image(1, 1);
  image.pixels = {100.0f, 50.0f, 200.0f};
  EXPECT_NEAR(luma_plane(image)[0], 0.299 * 100 + 0.587 * 50 + 0.114 * 200, 1e-9);
}

TEST(Luma, NormalizedPlaneUsesPixelScale) {
  auto a = preprocess_image(constant(8, 8, 100.0f), 8);
  auto b = a;
  b.chw[0] += 2.0f * 10.0f / 255.0f;  // red +10 levels at pixel 0
  EXPECT_NEAR(max_luma_difference(a, b), 0.299 * 10.0, 1e-3);
  EXPECT_NEAR(luma_plane(a)[5], 100.0, 1e-3);
}

TEST(Stack, BuildsBatchAndRejectsMixedSizes) {
  const auto a = testing::random_ref(8, 1);
  const auto b = testing::random_ref(8, 2);
  const std::vector<ImageRef> refs{a, b};
  const auto batch = stack_images(refs);
  EXPECT_EQ(batch.batch(), 2);
  EXPECT_EQ(batch.height(), 8);
  EXPECT_EQ(batch.at(1, 2, 7, 7), b->at(2, 7, 7));
  const std::vector<ImageRef> mixed{a, testing::random_ref(4, 3)};
  EXPECT_THROW(stack_images(mixed), Error);
  EXPECT_THROW(stack_images(std::vector<ImageRef>{}), Error);
}

}  // namespace
}  // namespace coldetect
