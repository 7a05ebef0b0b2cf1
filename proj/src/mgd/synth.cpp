#include "mgd/synth.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "mgd/error.hpp"

namespace mgd::synth {
namespace fs = std::filesystem;

namespace {

cv::Mat to_mat(const GrayImage& img) {
  cv::Mat m(img.height, img.width, CV_8UC1);
  std::copy(img.pixels.begin(), img.pixels.end(), m.data);
  return m;
}

GrayImage from_mat(const cv::Mat& m) {
  GrayImage img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) std::copy_n(m.ptr<std::uint8_t>(y), m.cols, &img.at(0, y));
  return img;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void random_shapes(cv::Mat& m, std::mt19937_64& rng, int count, int min_r, int max_r) {
  for (int k = 0; k < count; ++k) {
    cv::Point c(uniform_int(rng, 0, m.cols - 1), uniform_int(rng, 0, m.rows - 1));
    cv::Scalar color(uniform_int(rng, 0, 255));
    switch (uniform_int(rng, 0, 3)) {
      case 0:
        cv::ellipse(m, c, cv::Size(uniform_int(rng, min_r, max_r), uniform_int(rng, min_r, max_r)),
                    uniform(rng, 0, 180), 0, 360, color, cv::FILLED, cv::LINE_AA);
        break;
      case 1: {
        int w = uniform_int(rng, min_r, 2 * max_r), h = uniform_int(rng, min_r, 2 * max_r);
        cv::RotatedRect rr(c, cv::Size2f(static_cast<float>(w), static_cast<float>(h)),
                           static_cast<float>(uniform(rng, 0, 180)));
        cv::Point2f pts[4];
        rr.points(pts);
        std::vector<cv::Point> poly(pts, pts + 4);
        cv::fillConvexPoly(m, poly, color, cv::LINE_AA);
        break;
      }
      case 2: {
        std::vector<cv::Point> tri;
        for (int v = 0; v < 3; ++v)
          tri.emplace_back(c.x + uniform_int(rng, -max_r, max_r), c.y + uniform_int(rng, -max_r, max_r));
        cv::fillConvexPoly(m, tri, color, cv::LINE_AA);
        break;
      }
      default:
        cv::line(m, c, cv::Point(c.x + uniform_int(rng, -2 * max_r, 2 * max_r), c.y + uniform_int(rng, -2 * max_r, 2 * max_r)),
                 color, uniform_int(rng, 1, 3), cv::LINE_AA);
        break;
    }
  }
}

const char* const kWords[] = {"WHEN", "YOU", "THE", "MEME", "FINALLY", "VOTE", "NOBODY", "ME", "EVERY", "TIME",
                              "ELECTION", "DAY", "SUCH", "WOW", "MUCH", "THEY", "SAID", "IT", "WAS", "OVER"};

}  // namespace

GrayImage make_object(std::mt19937_64& rng, int size) {
  cv::Mat m(size, size, CV_8UC1, cv::Scalar(uniform_int(rng, 60, 200)));
  random_shapes(m, rng, 10, std::max(2, size / 24), std::max(3, size / 7));
  random_shapes(m, rng, 14, std::max(1, size / 48), std::max(2, size / 14));
  cv::GaussianBlur(m, m, cv::Size(0, 0), 0.8);
  return from_mat(m);
}

GrayImage make_background(std::mt19937_64& rng, int width, int height) {
  cv::Mat f(height, width, CV_32FC1);
  double a = uniform(rng, 0, 2 * std::numbers::pi);
  double g0 = uniform(rng, 40, 210), g1 = uniform(rng, -80, 80);
  double fx[3], fy[3], ph[3], amp[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = uniform(rng, -0.03, 0.03);
    fy[k] = uniform(rng, -0.03, 0.03);
    ph[k] = uniform(rng, 0, 2 * std::numbers::pi);
    amp[k] = uniform(rng, 5, 25);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double t = ((x - width / 2.0) * std::cos(a) + (y - height / 2.0) * std::sin(a)) / std::max(width, height);
      double v = g0 + g1 * t;
      for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
      f.at<float>(y, x) = static_cast<float>(v);
    }
  }
  cv::Mat m;
  f.convertTo(m, CV_8UC1);
  random_shapes(m, rng, uniform_int(rng, 4, 12), 4, std::max(6, std::min(width, height) / 8));
  cv::GaussianBlur(m, m, cv::Size(0, 0), 1.0);
  return from_mat(m);
}

GrayImage make_scene(std::mt19937_64& rng, int width, int height) {
  GrayImage bg = make_background(rng, width, height);
  int objects = uniform_int(rng, 3, 5);
  for (int k = 0; k < objects; ++k) {
    int size = uniform_int(rng, std::min(width, height) / 5, std::min(width, height) / 3);
    GrayImage obj = make_object(rng, size);
    paste(bg, obj, {1.0, uniform(rng, -45, 45), uniform(rng, 0.2, 0.8) * width, uniform(rng, 0.2, 0.8) * height});
  }
  return bg;
}

void paste(GrayImage& dst, const GrayImage& object, const Placement& where) {
  cv::Mat obj = to_mat(object);
  cv::Mat canvas = to_mat(dst);
  cv::Point2f centre(static_cast<float>(object.width / 2.0), static_cast<float>(object.height / 2.0));
  cv::Mat m = cv::getRotationMatrix2D(centre, where.rotation_deg, where.scale);
  m.at<double>(0, 2) += where.cx - centre.x;
  m.at<double>(1, 2) += where.cy - centre.y;
  cv::Mat warped, mask;
  cv::warpAffine(obj, warped, m, canvas.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT);
  cv::Mat ones(obj.size(), CV_8UC1, cv::Scalar(255));
  cv::warpAffine(ones, mask, m, canvas.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT);
  for (int y = 0; y < canvas.rows; ++y) {
    for (int x = 0; x < canvas.cols; ++x) {
      int a = mask.at<std::uint8_t>(y, x);
      if (a == 0) continue;
      int v = (warped.at<std::uint8_t>(y, x) * a + canvas.at<std::uint8_t>(y, x) * (255 - a) + 127) / 255;
      canvas.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
  dst = from_mat(canvas);
}

void overlay_text(GrayImage& img, std::mt19937_64& rng) {
  cv::Mat m = to_mat(img);
  int lines = uniform_int(rng, 1, 2);
  for (int line = 0; line < lines; ++line) {
    std::string text;
    int words = uniform_int(rng, 2, 4);
    for (int w = 0; w < words; ++w) {
      if (w) text += ' ';
      text += kWords[uniform_int(rng, 0, static_cast<int>(std::size(kWords)) - 1)];
    }
    double font_scale = 0.5 + 0.4 * m.cols / 320.0 * uniform(rng, 0.8, 1.2);
    int baseline = 0;
    cv::Size sz = cv::getTextSize(text, cv::FONT_HERSHEY_DUPLEX, font_scale, 2, &baseline);
    int x = std::max(2, (m.cols - sz.width) / 2 + uniform_int(rng, -10, 10));
    int y = line == 0 ? sz.height + 6 : m.rows - baseline - 6;
    cv::putText(m, text, cv::Point(x, y), cv::FONT_HERSHEY_DUPLEX, font_scale, cv::Scalar(0), 4, cv::LINE_AA);
    cv::putText(m, text, cv::Point(x, y), cv::FONT_HERSHEY_DUPLEX, font_scale, cv::Scalar(255), 2, cv::LINE_AA);
  }
  img = from_mat(m);
}

GrayImage transformed_copy(const GrayImage& src, std::mt19937_64& rng, const CopyParams& params) {
  int cw = std::max(1, static_cast<int>(std::lround(src.width * (1.0 - params.crop_fraction))));
  int ch = std::max(1, static_cast<int>(std::lround(src.height * (1.0 - params.crop_fraction))));
  int x0 = uniform_int(rng, 0, src.width - cw);
  int y0 = uniform_int(rng, 0, src.height - ch);
  cv::Mat cropped = to_mat(src)(cv::Rect(x0, y0, cw, ch)).clone();

  double scale = std::exp(uniform(rng, std::log(params.min_scale), std::log(params.max_scale)));
  double angle = uniform(rng, -params.max_rotation_deg, params.max_rotation_deg);
  double rad = angle * std::numbers::pi / 180.0;
  int ow = static_cast<int>(std::ceil(scale * (std::abs(cw * std::cos(rad)) + std::abs(ch * std::sin(rad)))));
  int oh = static_cast<int>(std::ceil(scale * (std::abs(cw * std::sin(rad)) + std::abs(ch * std::cos(rad)))));
  cv::Point2f centre(cw / 2.0f, ch / 2.0f);
  cv::Mat m = cv::getRotationMatrix2D(centre, angle, scale);
  m.at<double>(0, 2) += ow / 2.0 - centre.x;
  m.at<double>(1, 2) += oh / 2.0 - centre.y;
  cv::Mat out;
  cv::warpAffine(cropped, out, m, cv::Size(std::max(ow, 1), std::max(oh, 1)), cv::INTER_AREA, cv::BORDER_CONSTANT,
                 cv::Scalar(uniform_int(rng, 0, 255)));
  GrayImage img = from_mat(out);
  if (params.text_overlay) overlay_text(img, rng);
  return img;
}

GrayImage noise_image(std::mt19937_64& rng, int width, int height) {
  GrayImage img(width, height);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
  return img;
}

GeneratedCorpus generate_genre_corpus(const fs::path& out_dir, const GenreCorpusParams& params) {
  require(params.genres >= 1 && params.per_genre >= 1, ErrorCode::kInvalidArgument, "empty synthetic corpus");
  fs::create_directories(out_dir / "images");
  std::mt19937_64 rng(params.seed);
  std::vector<GrayImage> objects;
  for (int g = 0; g < params.genres; ++g) objects.push_back(make_object(rng, params.object_size));

  GeneratedCorpus out;
  out.manifest = out_dir / "manifest.csv";
  out.labels = out_dir / "labels.csv";
  std::ofstream manifest(out.manifest), labels(out.labels);
  require(manifest && labels, ErrorCode::kIo, "cannot write synthetic manifest");
  manifest << "path,source_tag\n";
  labels << "path,genre\n";
  // Interleave genres so manifest order carries no label information.
  for (int i = 0; i < params.per_genre; ++i) {
    for (int g = 0; g < params.genres; ++g) {
      GrayImage img = make_background(rng, params.width, params.height);
      Placement where;
      where.scale = std::exp(uniform(rng, std::log(params.min_scale), std::log(params.max_scale)));
      where.rotation_deg = uniform(rng, -params.max_rotation_deg, params.max_rotation_deg);
      double half = params.object_size * where.scale * 0.72;
      double lo_x = std::min(half, params.width / 2.0), lo_y = std::min(half, params.height / 2.0);
      where.cx = uniform(rng, lo_x, params.width - lo_x);
      where.cy = uniform(rng, lo_y, params.height - lo_y);
      paste(img, objects[static_cast<std::size_t>(g)], where);
      if (params.text_overlay) overlay_text(img, rng);
      char name[64];
      std::snprintf(name, sizeof(name), "images/img_%05zu.png", out.paths.size());
      write_png(out_dir / name, img);
      out.paths.emplace_back(name);
      out.genre.push_back(g);
      manifest << name << ",synthetic\n";
      labels << name << ',' << g << '\n';
    }
  }
  return out;
}

}  // namespace mgd::synth
