#include "mgd/surf.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "mgd/binio.hpp"
#include "mgd/error.hpp"

namespace mgd {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr float kScalePerFilter = 1.2f / 9.0f;
constexpr double kIntensityScale = 1.0 / 255.0;

int filter_size(int octave, int interval) { return 3 * ((1 << (octave + 1)) * (interval + 1) + 1); }

// Determinant-of-Hessian responses for one filter size, computed at every
// pixel where the whole filter fits; zero elsewhere.
struct ResponseLayer {
  int filter = 0;
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

ResponseLayer build_layer(const IntegralImage& ii, int filter) {
  ResponseLayer layer{filter, ii.width(), ii.height(), {}};
  layer.values.assign(static_cast<std::size_t>(ii.width()) * ii.height(), 0.0f);
  const int b = (filter - 1) / 2;
  const int l = filter / 3;
  const double norm = kIntensityScale / (static_cast<double>(filter) * filter);
  for (int r = b; r + b < ii.height(); ++r) {
    for (int c = b; c + b < ii.width(); ++c) {
      double dxx = static_cast<double>(ii.box(r - l + 1, c - b, 2 * l - 1, filter)) -
                   3.0 * static_cast<double>(ii.box(r - l + 1, c - l / 2, 2 * l - 1, l));
      double dyy = static_cast<double>(ii.box(r - b, c - l + 1, filter, 2 * l - 1)) -
                   3.0 * static_cast<double>(ii.box(r - l / 2, c - l + 1, l, 2 * l - 1));
      double dxy = static_cast<double>(ii.box(r - l, c + 1, l, l)) + static_cast<double>(ii.box(r + 1, c - l, l, l)) -
                   static_cast<double>(ii.box(r - l, c - l, l, l)) - static_cast<double>(ii.box(r + 1, c + 1, l, l));
      dxx *= norm;
      dyy *= norm;
      dxy *= norm;
      layer.values[static_cast<std::size_t>(r) * ii.width() + c] = static_cast<float>(dxx * dyy - 0.81 * dxy * dxy);
    }
  }
  return layer;
}

// Strict maximum over the 3x3x3 neighbourhood, ties resolved towards the
// first position in (layer, row, col) order so plateaus yield one point.
bool is_extremum(int r, int c, const ResponseLayer& below, const ResponseLayer& mid, const ResponseLayer& above,
                 float floor) {
  const float v = mid.at(r, c);
  if (!(v > floor)) return false;
  const ResponseLayer* layers[3] = {&below, &mid, &above};
  for (int s = 0; s < 3; ++s) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (s == 1 && dr == 0 && dc == 0) continue;
        float n = layers[s]->at(r + dr, c + dc);
        bool before = s < 1 || (s == 1 && (dr < 0 || (dr == 0 && dc < 0)));
        if (before ? n >= v : n > v) return false;
      }
    }
  }
  return true;
}

bool interpolate(int r, int c, const ResponseLayer& below, const ResponseLayer& mid, const ResponseLayer& above,
                 Keypoint& out) {
  const double v = mid.at(r, c);
  Eigen::Vector3d g;
  g << (mid.at(r, c + 1) - mid.at(r, c - 1)) / 2.0, (mid.at(r + 1, c) - mid.at(r - 1, c)) / 2.0,
      (above.at(r, c) - below.at(r, c)) / 2.0;
  Eigen::Matrix3d h;
  double dxx = mid.at(r, c + 1) + mid.at(r, c - 1) - 2.0 * v;
  double dyy = mid.at(r + 1, c) + mid.at(r - 1, c) - 2.0 * v;
  double dss = above.at(r, c) + below.at(r, c) - 2.0 * v;
  double dxy = (mid.at(r + 1, c + 1) - mid.at(r + 1, c - 1) - mid.at(r - 1, c + 1) + mid.at(r - 1, c - 1)) / 4.0;
  double dxs = (above.at(r, c + 1) - above.at(r, c - 1) - below.at(r, c + 1) + below.at(r, c - 1)) / 4.0;
  double dys = (above.at(r + 1, c) - above.at(r - 1, c) - below.at(r + 1, c) + below.at(r - 1, c)) / 4.0;
  h << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(h);
  if (!lu.isInvertible()) return false;
  Eigen::Vector3d off = -lu.solve(g);
  if (!off.allFinite() || off.cwiseAbs().maxCoeff() >= 0.5) return false;
  const double step = mid.filter - below.filter;
  out.x = static_cast<float>(c + off.x());
  out.y = static_cast<float>(r + off.y());
  out.scale = static_cast<float>(kScalePerFilter * (mid.filter + off.z() * step));
  out.orientation = 0;
  out.response = static_cast<float>(v);
  return out.scale > 0;
}

double haar_x(const IntegralImage& ii, int row, int col, int size) {
  int half = size / 2;
  return static_cast<double>(ii.box(row - half, col, size, half)) -
         static_cast<double>(ii.box(row - half, col - half, size, half));
}

double haar_y(const IntegralImage& ii, int row, int col, int size) {
  int half = size / 2;
  return static_cast<double>(ii.box(row, col - half, half, size)) -
         static_cast<double>(ii.box(row - half, col - half, half, size));
}

int round_scale(float scale) { return std::max(1, static_cast<int>(std::lround(scale))); }

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0) a += kTwoPi;
  if (a >= kTwoPi) a = 0;
  return a;
}

double dominant_orientation(const IntegralImage& ii, const Keypoint& kp) {
  const int s = round_scale(kp.scale);
  const int r = static_cast<int>(std::lround(kp.y));
  const int c = static_cast<int>(std::lround(kp.x));
  struct Sample {
    double dx, dy, angle;
  };
  std::vector<Sample> samples;
  samples.reserve(113);
  for (int i = -6; i <= 6; ++i) {
    for (int j = -6; j <= 6; ++j) {
      if (i * i + j * j >= 36) continue;
      double g = std::exp(-(i * i + j * j) / (2.0 * 2.5 * 2.5));
      double dx = g * haar_x(ii, r + j * s, c + i * s, 4 * s);
      double dy = g * haar_y(ii, r + j * s, c + i * s, 4 * s);
      if (dx == 0 && dy == 0) continue;
      samples.push_back({dx, dy, wrap_angle(std::atan2(dy, dx))});
    }
  }
  double best = 0, best_angle = 0;
  constexpr double kWindow = std::numbers::pi / 3.0;
  for (double start = 0; start < kTwoPi; start += 0.15) {
    double sx = 0, sy = 0;
    for (const auto& smp : samples) {
      double d = wrap_angle(smp.angle - start);
      if (d < kWindow) {
        sx += smp.dx;
        sy += smp.dy;
      }
    }
    double mag = sx * sx + sy * sy;
    if (mag > best) {
      best = mag;
      best_angle = wrap_angle(std::atan2(sy, sx));
    }
  }
  return best_angle;
}

// Returns false when the descriptor is identically zero.
bool compute_descriptor(const IntegralImage& ii, const Keypoint& kp, float* out) {
  const double scale = kp.scale;
  const int haar = 2 * round_scale(kp.scale);
  const double co = std::cos(kp.orientation);
  const double si = std::sin(kp.orientation);
  const double sigma = 3.3 * scale;
  double desc[kDescriptorDim] = {};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double sdx = 0, sadx = 0, sdy = 0, sady = 0;
      for (int k = 0; k < 5; ++k) {
        for (int l = 0; l < 5; ++l) {
          double u = (-10 + 5 * i + k + 0.5) * scale;
          double v = (-10 + 5 * j + l + 0.5) * scale;
          double px = kp.x + u * co - v * si;
          double py = kp.y + u * si + v * co;
          int row = static_cast<int>(std::lround(py));
          int col = static_cast<int>(std::lround(px));
          double g = std::exp(-(u * u + v * v) / (2.0 * sigma * sigma));
          double rx = haar_x(ii, row, col, haar);
          double ry = haar_y(ii, row, col, haar);
          double dx = g * (rx * co + ry * si);
          double dy = g * (-rx * si + ry * co);
          sdx += dx;
          sadx += std::abs(dx);
          sdy += dy;
          sady += std::abs(dy);
        }
      }
      double* d = desc + (i * 4 + j) * 4;
      d[0] = sdx;
      d[1] = sadx;
      d[2] = sdy;
      d[3] = sady;
    }
  }
  double norm = 0;
  for (double d : desc) norm += d * d;
  norm = std::sqrt(norm);
  if (!(norm > 1e-12)) return false;
  for (int k = 0; k < kDescriptorDim; ++k) out[k] = static_cast<float>(desc[k] / norm);
  return true;
}

}  // namespace

IntegralImage::IntegralImage(const GrayImage& gray) : width_(gray.width), height_(gray.height) {
  sums_.assign(static_cast<std::size_t>(width_ + 1) * (height_ + 1), 0);
  for (int y = 0; y < height_; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < width_; ++x) {
      row += gray.at(x, y);
      sums_[static_cast<std::size_t>(y + 1) * (width_ + 1) + x + 1] =
          sums_[static_cast<std::size_t>(y) * (width_ + 1) + x + 1] + row;
    }
  }
}

std::vector<Keypoint> detect_keypoints(const IntegralImage& integral, int max_count, const SurfParams& params) {
  require(max_count > 0, ErrorCode::kInvalidArgument, "max_count must be positive");
  require(params.octaves >= 1 && params.intervals >= 3, ErrorCode::kInvalidArgument,
          "need at least one octave of three intervals");
  std::vector<Keypoint> found;
  std::map<int, ResponseLayer> layers;
  auto layer = [&](int filter) -> const ResponseLayer& {
    auto it = layers.find(filter);
    if (it == layers.end()) it = layers.emplace(filter, build_layer(integral, filter)).first;
    return it->second;
  };
  for (int o = 0; o < params.octaves; ++o) {
    for (int i = 1; i + 1 < params.intervals; ++i) {
      const int top_filter = filter_size(o, i + 1);
      const int border = (top_filter - 1) / 2 + 1;
      if (integral.height() <= 2 * border || integral.width() <= 2 * border) continue;
      const auto& below = layer(filter_size(o, i - 1));
      const auto& mid = layer(filter_size(o, i));
      const auto& above = layer(top_filter);
      for (int r = border; r < integral.height() - border; ++r) {
        for (int c = border; c < integral.width() - border; ++c) {
          if (!is_extremum(r, c, below, mid, above, params.response_floor)) continue;
          Keypoint kp;
          if (interpolate(r, c, below, mid, above, kp)) found.push_back(kp);
        }
      }
    }
  }
  std::sort(found.begin(), found.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.scale < b.scale;
  });
  if (found.size() > static_cast<std::size_t>(max_count)) found.resize(static_cast<std::size_t>(max_count));
  return found;
}

bool describable(const IntegralImage& integral, const Keypoint& kp) {
  if (!(kp.scale > 0) || !std::isfinite(kp.x) || !std::isfinite(kp.y)) return false;
  const double extent = 13.5 * kp.scale + round_scale(kp.scale) + 2.0;
  const double orient_extent = 7.0 * round_scale(kp.scale) + 2.0;
  const double e = std::max(extent, orient_extent);
  return kp.x - e >= 0 && kp.y - e >= 0 && kp.x + e <= integral.width() - 1 && kp.y + e <= integral.height() - 1;
}

FeatureSet describe(const IntegralImage& integral, std::span<const Keypoint> keypoints, ImageId image_id) {
  FeatureSet fs;
  fs.image_id = image_id;
  fs.keypoints.reserve(keypoints.size());
  fs.descriptors.reserve(keypoints.size() * kDescriptorDim);
  float desc[kDescriptorDim];
  for (const auto& in : keypoints) {
    if (!describable(integral, in)) {
      ++fs.dropped;
      continue;
    }
    Keypoint kp = in;
    kp.orientation = static_cast<float>(dominant_orientation(integral, kp));
    if (kp.orientation >= static_cast<float>(kTwoPi)) kp.orientation = 0;
    if (!compute_descriptor(integral, kp, desc)) {
      ++fs.dropped;
      continue;
    }
    fs.keypoints.push_back(kp);
    fs.descriptors.insert(fs.descriptors.end(), desc, desc + kDescriptorDim);
  }
  return fs;
}

FeatureSet extract_features(const GrayImage& gray, ImageId image_id, int cap, const SurfParams& params) {
  require(cap > 0, ErrorCode::kInvalidArgument, "feature cap must be positive");
  if (gray.empty()) return FeatureSet{image_id, {}, {}, 0};
  IntegralImage ii(gray);
  auto all = detect_keypoints(ii, std::numeric_limits<int>::max(), params);
  std::vector<Keypoint> kept;
  kept.reserve(std::min<std::size_t>(all.size(), static_cast<std::size_t>(cap)));
  for (const auto& kp : all) {
    if (kept.size() == static_cast<std::size_t>(cap)) break;
    if (describable(ii, kp)) kept.push_back(kp);
  }
  return describe(ii, kept, image_id);
}

namespace {
constexpr std::uint16_t kFeatureVersion = 1;
}

void save_features(const std::filesystem::path& path, std::span<const FeatureSet> sets) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  binio::Writer w(out);
  w.put_magic("MGDF");
  w.put<std::uint16_t>(kFeatureVersion);
  for (const auto& fs : sets) {
    require(fs.descriptors.size() == fs.keypoints.size() * kDescriptorDim, ErrorCode::kInvalidArgument,
            "feature set descriptor count mismatch");
    w.put<std::uint32_t>(fs.image_id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(fs.keypoints.size()));
    for (const auto& kp : fs.keypoints) {
      w.put(kp.x);
      w.put(kp.y);
      w.put(kp.scale);
      w.put(kp.orientation);
      w.put(kp.response);
    }
    w.put_span<float>(fs.descriptors);
  }
  w.check();
}

std::vector<FeatureSet> load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "feature store not found: " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic("MGDF");
  require(r.get<std::uint16_t>() == kFeatureVersion, ErrorCode::kFormat, "unsupported feature store version");
  std::vector<FeatureSet> sets;
  while (!r.at_end()) {
    FeatureSet fs;
    fs.image_id = r.get<std::uint32_t>();
    auto n = r.get<std::uint32_t>();
    require(n <= 1u << 24, ErrorCode::kFormat, "implausible keypoint count");
    fs.keypoints.resize(n);
    for (auto& kp : fs.keypoints) {
      kp.x = r.get<float>();
      kp.y = r.get<float>();
      kp.scale = r.get<float>();
      kp.orientation = r.get<float>();
      kp.response = r.get<float>();
    }
    fs.descriptors.resize(static_cast<std::size_t>(n) * kDescriptorDim);
    r.get_span<float>(fs.descriptors);
    sets.push_back(std::move(fs));
  }
  return sets;
}

}  // namespace mgd
