#pragma once

// Procedural test corpora: "genres" built around a shared pasted object, and
// transformed near-duplicate copies of seed images.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mgd/image.hpp"

namespace mgd::synth {

struct GenreCorpusParams {
  int genres = 20;
  int per_genre = 25;
  int width = 320;
  int height = 320;
  int object_size = 96;
  double min_scale = 0.5;
  double max_scale = 2.0;
  double max_rotation_deg = 30.0;
  bool text_overlay = true;
  std::uint64_t seed = 1;
};

struct GeneratedCorpus {
  std::filesystem::path manifest;      // path,source_tag
  std::filesystem::path labels;        // path,genre
  std::vector<std::string> paths;      // relative to the output directory
  std::vector<int> genre;              // ground-truth genre per manifest row
};

// Writes images/ + manifest.csv + labels.csv under out_dir.
GeneratedCorpus generate_genre_corpus(const std::filesystem::path& out_dir, const GenreCorpusParams& params);

GrayImage make_object(std::mt19937_64& rng, int size);
GrayImage make_background(std::mt19937_64& rng, int width, int height);
// Seed photo for near-duplicate experiments: background plus several objects.
GrayImage make_scene(std::mt19937_64& rng, int width, int height);

struct Placement {
  double scale = 1.0;
  double rotation_deg = 0.0;
  double cx = 0.0;  // object centre in the destination image
  double cy = 0.0;
};

// Alpha-free paste of object onto dst under a similarity transform.
void paste(GrayImage& dst, const GrayImage& object, const Placement& where);

void overlay_text(GrayImage& img, std::mt19937_64& rng);

struct CopyParams {
  double max_rotation_deg = 30.0;
  double min_scale = 0.5;
  double max_scale = 2.0;
  double crop_fraction = 0.2;  // fraction of each dimension removed
  bool text_overlay = true;
};

// Crop, rotate/scale and caption a copy of src.
GrayImage transformed_copy(const GrayImage& src, std::mt19937_64& rng, const CopyParams& params = {});

// Uniform white noise.
GrayImage noise_image(std::mt19937_64& rng, int width, int height);

}  // namespace mgd::synth
