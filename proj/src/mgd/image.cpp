#include "mgd/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

#include "mgd/error.hpp"

namespace mgd {
namespace {

GrayImage from_mat(const cv::Mat& m) {
  GrayImage img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) std::copy_n(m.ptr<std::uint8_t>(y), m.cols, &img.at(0, y));
  return img;
}

cv::Mat as_mat(const GrayImage& img) {
  return cv::Mat(img.height, img.width, CV_8UC1, const_cast<std::uint8_t*>(img.pixels.data()));
}

}  // namespace

std::optional<GrayImage> decode_gray(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty() || m.depth() != CV_8U) return std::nullopt;
  return from_mat(m);
}

std::optional<GrayImage> decode_gray(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) return std::nullopt;
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (m.empty() || m.depth() != CV_8U) return std::nullopt;
  return from_mat(m);
}

GrayImage resize_area(const GrayImage& img, int width, int height) {
  require(width > 0 && height > 0 && !img.empty(), ErrorCode::kInvalidArgument, "resize to empty size");
  cv::Mat out;
  cv::resize(as_mat(img), out, cv::Size(width, height), 0, 0, cv::INTER_AREA);
  return from_mat(out);
}

GrayImage limit_size(const GrayImage& img, int max_side) {
  int side = std::max(img.width, img.height);
  if (side <= max_side) return img;
  double f = static_cast<double>(max_side) / side;
  int w = std::max(1, static_cast<int>(std::lround(img.width * f)));
  int h = std::max(1, static_cast<int>(std::lround(img.height * f)));
  return resize_area(img, std::min(w, max_side), std::min(h, max_side));
}

std::optional<GrayImage> load_for_features(const std::filesystem::path& path) {
  auto img = decode_gray(path);
  if (!img) return std::nullopt;
  return limit_size(*img);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  require(cv::imwrite(path.string(), as_mat(img)), ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace mgd
