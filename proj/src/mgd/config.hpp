#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mgd {

struct RunConfig {
  std::uint64_t seed = 0;

  std::filesystem::path manifest;
  std::filesystem::path image_root;
  std::filesystem::path out_dir = "mgd_out";
  bool dedup = true;

  int feature_cap = 2500;

  int coarse_k = 2048;
  int subspaces = 8;
  int opq_iterations = 20;
  std::size_t train_sample = 200000;
  int coarse_iterations = 25;

  int knn = 20;
  int nprobe = 32;
  double query_fraction = 0.1;
  int top_j = 100;
  double ratio = 0.9;
  int ransac_iterations = 500;
  double inlier_px = 5.0;
  int min_inliers = 4;
  bool keypoint_consistency = true;
  double max_false_alarms = 1.0;
  bool debug_matches = false;

  int K = 20;
  int kmeans_restarts = 8;

  // none | phash | embedding
  std::string baseline = "none";
  int phash_max_distance = 10;
  int embedding_knn = 100;
  std::filesystem::path embeddings;

  int tasks_per_cluster = 200;
  int control_tasks = 100;

  // Canonical key=value text, one key per line, fixed order.
  std::string to_text() const;
};

// Parses key=value lines; '#' starts a comment. Unknown keys and bad values
// throw kInvalidArgument naming the key.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
void apply_line(RunConfig& config, const std::string& line);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

std::vector<std::string> config_keys();
// Canonical text of one key's value.
std::string config_value(const RunConfig& config, const std::string& key);

}  // namespace mgd
