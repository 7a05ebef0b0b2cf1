#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace mgd {

// 8-bit single-channel image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return width == 0 || height == 0; }
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

inline constexpr int kMaxFeatureSide = 1024;

// Decodes any format the codec backend understands. Returns nullopt when the
// file is missing or cannot be decoded.
std::optional<GrayImage> decode_gray(const std::filesystem::path& path);
std::optional<GrayImage> decode_gray(const std::vector<std::uint8_t>& bytes);

// Shrinks so that max(width, height) <= max_side, preserving aspect ratio.
// Images already within bounds are returned unchanged.
GrayImage limit_size(const GrayImage& img, int max_side = kMaxFeatureSide);

// Area-averaging resize to an exact size.
GrayImage resize_area(const GrayImage& img, int width, int height);

// Decode + grayscale + downscale, the form feature extraction consumes.
std::optional<GrayImage> load_for_features(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const GrayImage& img);

}  // namespace mgd
