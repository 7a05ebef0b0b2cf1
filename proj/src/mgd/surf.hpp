#pragma once

// SURF-style local features: integral image, Fast-Hessian detection and the
// oriented 64-d descriptor.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mgd/corpus.hpp"
#include "mgd/image.hpp"

namespace mgd {

inline constexpr int kDescriptorDim = 64;
inline constexpr int kDefaultFeatureCap = 2500;

class IntegralImage {
 public:
  IntegralImage() = default;
  explicit IntegralImage(const GrayImage& gray);

  int width() const { return width_; }
  int height() const { return height_; }

  // sums[i][j] = sum of pixels (y < i, x < j).
  std::int64_t sum_at(int i, int j) const { return sums_[static_cast<std::size_t>(i) * (width_ + 1) + j]; }

  // Sum over rows [row, row + rows) and columns [col, col + cols). The box
  // must lie inside the image.
  std::int64_t box(int row, int col, int rows, int cols) const {
    return sum_at(row + rows, col + cols) - sum_at(row, col + cols) - sum_at(row + rows, col) + sum_at(row, col);
  }

  bool contains(int row, int col, int rows, int cols) const {
    return row >= 0 && col >= 0 && rows >= 0 && cols >= 0 && row + rows <= height_ && col + cols <= width_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::int64_t> sums_;
};

struct Keypoint {
  float x = 0;
  float y = 0;
  float scale = 0;
  float orientation = 0;  // radians in [0, 2*pi)
  float response = 0;

  bool operator==(const Keypoint&) const = default;
};

struct FeatureSet {
  ImageId image_id = 0;
  std::vector<Keypoint> keypoints;
  std::vector<float> descriptors;  // keypoints.size() x kDescriptorDim, row-major
  std::size_t dropped = 0;         // keypoints rejected by describe(); not persisted

  std::size_t size() const { return keypoints.size(); }
  std::span<const float> descriptor(std::size_t i) const {
    return {descriptors.data() + i * kDescriptorDim, kDescriptorDim};
  }
};

struct SurfParams {
  int octaves = 3;
  int intervals = 4;
  // Blob responses at or below this are ignored; the cap then selects the
  // strongest survivors, so the effective threshold adapts per image.
  float response_floor = 2e-5f;
};

// Detects up to max_count keypoints, strongest first. Images too small for
// the first octave yield an empty list.
std::vector<Keypoint> detect_keypoints(const IntegralImage& integral, int max_count = kDefaultFeatureCap,
                                       const SurfParams& params = {});

// True when the orientation and descriptor windows of kp fit in the image.
bool describable(const IntegralImage& integral, const Keypoint& kp);

// Assigns orientations and computes unit-norm descriptors. Keypoints whose
// window leaves the image (or whose descriptor is identically zero) are
// dropped and counted in FeatureSet::dropped.
FeatureSet describe(const IntegralImage& integral, std::span<const Keypoint> keypoints, ImageId image_id = 0);

// Full per-image extraction: detect, discard undescribable keypoints, keep
// the strongest `cap`, describe.
FeatureSet extract_features(const GrayImage& gray, ImageId image_id, int cap = kDefaultFeatureCap,
                            const SurfParams& params = {});

// MGDF feature store.
void save_features(const std::filesystem::path& path, std::span<const FeatureSet> sets);
std::vector<FeatureSet> load_features(const std::filesystem::path& path);

}  // namespace mgd
