#include "coldetect/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "coldetect/error.hpp"

namespace coldetect {

namespace {

const cv::Scalar kBlack(0, 0, 0), kGray(160, 160, 160), kWhite(255, 255, 255);

const std::vector<cv::Scalar>& palette() {
  static const std::vector<cv::Scalar> colors{{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                                              {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};
  return colors;
}

void save(const cv::Mat& image, const std::filesystem::path& out) {
  bool written = false;
  try {
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    written = cv::imwrite(out.string(), image);
  } catch (const std::exception& e) {
    throw Error("plot: cannot write " + out.string() + ": " + e.what());
  }
  if (!written) throw Error("plot: cannot write " + out.string());
}

void dotted_vertical(cv::Mat& canvas, int x, int top, int bottom) {
  for (int y = top; y < bottom; y += 8) cv::line(canvas, {x, y}, {x, std::min(y + 3, bottom)}, kBlack, 1);
}

/// Min-max scales a float matrix to 8 bits.
cv::Mat to_u8(const cv::Mat& values) {
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(values, &lo, &hi);
  cv::Mat out;
  values.convertTo(out, CV_8U, hi > lo ? 255.0 / (hi - lo) : 0.0, hi > lo ? -lo * 255.0 / (hi - lo) : 0.0);
  return out;
}

cv::Mat tile_grid(const std::vector<cv::Mat>& tiles, int columns, int gap) {
  if (tiles.empty()) return cv::Mat(1, 1, CV_8UC3, kWhite);
  const int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
  const int w = tiles[0].cols, h = tiles[0].rows;
  cv::Mat grid(rows * (h + gap) + gap, columns * (w + gap) + gap, CV_8UC3, kWhite);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const int r = static_cast<int>(i) / columns, c = static_cast<int>(i) % columns;
    tiles[i].copyTo(grid(cv::Rect(gap + c * (w + gap), gap + r * (h + gap), w, h)));
  }
  return grid;
}

cv::Mat map_grid(const Tensor& maps, const std::string& title) {
  const int count = std::min(64, maps.channels());
  std::vector<cv::Mat> tiles;
  for (int c = 0; c < count; ++c) {
    const cv::Mat plane(maps.height(), maps.width(), CV_32F, const_cast<float*>(maps.plane(0, c)));
    cv::Mat scaled, color;
    cv::resize(to_u8(plane), scaled, cv::Size(64, 64), 0, 0, cv::INTER_NEAREST);
    cv::cvtColor(scaled, color, cv::COLOR_GRAY2BGR);
    tiles.push_back(color);
  }
  cv::Mat grid = tile_grid(tiles, 8, 2);
  cv::Mat framed(grid.rows + 30, grid.cols, CV_8UC3, kWhite);
  grid.copyTo(framed(cv::Rect(0, 30, grid.cols, grid.rows)));
  cv::putText(framed, title, {4, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.6, kBlack, 1, cv::LINE_AA);
  return framed;
}

}  // namespace

void plot_curves(const LearningCurve& curve, const std::filesystem::path& out) {
  if (curve.records.empty()) throw Error("plot: empty learning curve");
  struct Series {
    std::string name;
    std::vector<cv::Point2d> points;
  };
  std::vector<Series> series{{"validation NI error", {}}};
  std::map<std::string, std::size_t> index;
  for (const auto& r : curve.records) {
    if (!std::isnan(r.validation_error)) series[0].points.emplace_back(r.epoch, r.validation_error);
    for (const auto& [name, value] : r.monitors) {
      auto [it, inserted] = index.emplace(name, series.size());
      if (inserted) series.push_back({"HTER " + name, {}});
      series[it->second].points.emplace_back(r.epoch, value);
    }
  }
  const double first = curve.records.front().epoch, last = std::max(first + 1.0, double(curve.records.back().epoch));
  double top = 10.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) top = std::max(top, p.y);
  }
  top = std::ceil(top / 10.0) * 10.0;

  const int width = 960, height = 540, left = 70, right = 230, upper = 30, lower = 60;
  cv::Mat canvas(height, width, CV_8UC3, kWhite);
  const int plot_w = width - left - right, plot_h = height - upper - lower;
  auto to_px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>(std::lround((x - first) / (last - first) * plot_w)),
                     upper + plot_h - static_cast<int>(std::lround(y / top * plot_h)));
  };
  cv::rectangle(canvas, {left, upper}, {left + plot_w, upper + plot_h}, kBlack, 1);
  for (int k = 0; k <= 5; ++k) {
    const double y = top * k / 5.0;
    const auto p = to_px(first, y);
    cv::line(canvas, p, {left + plot_w, p.y}, cv::Scalar(230, 230, 230), 1);
    cv::putText(canvas, std::to_string(static_cast<int>(y)), {p.x - 40, p.y + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                kBlack, 1, cv::LINE_AA);
  }
  const int ticks = std::min(10, static_cast<int>(last - first));
  for (int k = 0; k <= ticks; ++k) {
    const int epoch = static_cast<int>(std::lround(first + (last - first) * k / std::max(1, ticks)));
    const auto p = to_px(epoch, 0.0);
    cv::putText(canvas, std::to_string(epoch), {p.x - 8, p.y + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kBlack, 1,
                cv::LINE_AA);
  }
  cv::putText(canvas, "epoch", {left + plot_w / 2 - 20, height - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, kBlack, 1,
              cv::LINE_AA);
  cv::putText(canvas, "error (%)", {5, upper - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, kBlack, 1, cv::LINE_AA);
  if (const int boundary = curve.stage_boundary(); boundary >= 0) {
    dotted_vertical(canvas, to_px(boundary - 0.5, 0.0).x, upper, upper + plot_h);
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto color = palette()[s % palette().size()];
    std::vector<cv::Point> pixels;
    for (const auto& p : series[s].points) pixels.push_back(to_px(p.x, p.y));
    if (pixels.size() > 1) cv::polylines(canvas, pixels, false, color, 2, cv::LINE_AA);
    for (const auto& p : pixels) cv::circle(canvas, p, 2, color, cv::FILLED, cv::LINE_AA);
    const int y = upper + 20 + static_cast<int>(s) * 22;
    cv::line(canvas, {left + plot_w + 15, y - 4}, {left + plot_w + 40, y - 4}, color, 2);
    cv::putText(canvas, series[s].name, {left + plot_w + 46, y}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kBlack, 1,
                cv::LINE_AA);
  }
  save(canvas, out);
}

void plot_kernels(const Network& network, const std::filesystem::path& out) {
  const auto& weights = network.first_layer_kernels();
  const int kernels = network.channels().conv1;
  cv::Mat all(1, static_cast<int>(weights.size()), CV_32F, const_cast<float*>(weights.data()));
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(all, &lo, &hi);
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::vector<cv::Mat> tiles;
  for (int k = 0; k < kernels; ++k) {
    cv::Mat tile(3, 3, CV_8UC3);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) {
        for (int c = 0; c < 3; ++c) {
          const float w = weights[static_cast<std::size_t>(k) * 27 + c * 9 + y * 3 + x];
          // Input channel c is R, G, B; OpenCV stores BGR.
          tile.at<cv::Vec3b>(y, x)[2 - c] = cv::saturate_cast<std::uint8_t>((w - lo) * scale);
        }
      }
    }
    cv::Mat big;
    cv::resize(tile, big, cv::Size(48, 48), 0, 0, cv::INTER_NEAREST);
    tiles.push_back(big);
  }
  save(tile_grid(tiles, 8, 4), out);
}

void plot_feature_maps(const BranchMaps& maps, const std::filesystem::path& out) {
  cv::Mat image = map_grid(maps.base, "base branch conv4");
  if (maps.second) {
    const cv::Mat second = map_grid(*maps.second, "new branch conv4");
    cv::Mat joined(std::max(image.rows, second.rows), image.cols + second.cols + 20, CV_8UC3, kWhite);
    image.copyTo(joined(cv::Rect(0, 0, image.cols, image.rows)));
    second.copyTo(joined(cv::Rect(image.cols + 20, 0, second.cols, second.rows)));
    image = joined;
  }
  save(image, out);
}

std::vector<EmbeddingPoint> read_embedding_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("plot: cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EmbeddingPoint> points;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::istringstream fields(line);
    EmbeddingPoint p;
    if (!(fields >> p.x >> p.y >> p.label >> p.predicted >> p.method)) {
      throw Error(path.string() + ":" + std::to_string(number) + ": expected x, y, label, predicted, method");
    }
    points.push_back(std::move(p));
  }
  if (points.empty()) throw Error("plot: no embedding points in " + path.string());
  return points;
}

void plot_embedding(const std::vector<EmbeddingPoint>& points, const std::filesystem::path& out) {
  if (points.empty()) throw Error("plot: no embedding points");
  double x0 = points[0].x, x1 = x0, y0 = points[0].y, y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  const int side = 720, margin = 30, legend = 200;
  cv::Mat canvas(side, side + legend, CV_8UC3, kWhite);
  std::map<std::string, cv::Scalar> colors;
  for (const auto& p : points) colors.emplace(p.method, cv::Scalar());
  std::size_t next = 0;
  for (auto& [method, color] : colors) color = palette()[next++ % palette().size()];
  auto to_px = [&](double x, double y) {
    const double sx = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5, sy = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
    return cv::Point(margin + static_cast<int>(sx * (side - 2 * margin)),
                     side - margin - static_cast<int>(sy * (side - 2 * margin)));
  };
  for (const auto& p : points) {
    const auto c = to_px(p.x, p.y);
    const auto& color = colors[p.method];
    // Filled: natural. Hollow: colorized. A gray ring marks a wrong prediction.
    cv::circle(canvas, c, 4, color, p.label == kNatural ? cv::FILLED : 1, cv::LINE_AA);
    if (p.predicted != p.label) cv::circle(canvas, c, 7, kGray, 1, cv::LINE_AA);
  }
  int y = 30;
  for (const auto& [method, color] : colors) {
    cv::circle(canvas, {side + 20, y - 4}, 5, color, cv::FILLED, cv::LINE_AA);
    cv::putText(canvas, method, {side + 32, y}, cv::FONT_HERSHEY_SIMPLEX, 0.5, kBlack, 1, cv::LINE_AA);
    y += 24;
  }
  cv::putText(canvas, "filled: NI, hollow: CI", {side + 10, y + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kBlack, 1,
              cv::LINE_AA);
  cv::putText(canvas, "ring: misclassified", {side + 10, y + 30}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kBlack, 1,
              cv::LINE_AA);
  save(canvas, out);
}

}  // namespace coldetect
