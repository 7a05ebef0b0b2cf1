#include "mgd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mgd/error.hpp"

namespace mgd {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size(), ErrorCode::kInvalidArgument,
          "config key '" + key + "': not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::kInvalidArgument, "config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field integer(T RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<T>(k, v); },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}

Field real(double RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<double>(k, v); },
          [m](const RunConfig& c) { return fmt(c.*m); }};
}

Field boolean(bool RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); },
          [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field path(std::filesystem::path RunConfig::*m) {
  return {[m](RunConfig& c, const std::string&, const std::string& v) { c.*m = v; },
          [m](const RunConfig& c) { return (c.*m).string(); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      {"seed", integer(&RunConfig::seed)},
      {"manifest", path(&RunConfig::manifest)},
      {"image_root", path(&RunConfig::image_root)},
      {"out_dir", path(&RunConfig::out_dir)},
      {"dedup", boolean(&RunConfig::dedup)},
      {"feature_cap", integer(&RunConfig::feature_cap)},
      {"coarse_k", integer(&RunConfig::coarse_k)},
      {"subspaces", integer(&RunConfig::subspaces)},
      {"opq_iterations", integer(&RunConfig::opq_iterations)},
      {"train_sample", integer(&RunConfig::train_sample)},
      {"coarse_iterations", integer(&RunConfig::coarse_iterations)},
      {"knn", integer(&RunConfig::knn)},
      {"nprobe", integer(&RunConfig::nprobe)},
      {"query_fraction", real(&RunConfig::query_fraction)},
      {"top_j", integer(&RunConfig::top_j)},
      {"ratio", real(&RunConfig::ratio)},
      {"ransac_iterations", integer(&RunConfig::ransac_iterations)},
      {"inlier_px", real(&RunConfig::inlier_px)},
      {"min_inliers", integer(&RunConfig::min_inliers)},
      {"keypoint_consistency", boolean(&RunConfig::keypoint_consistency)},
      {"max_false_alarms", real(&RunConfig::max_false_alarms)},
      {"debug_matches", boolean(&RunConfig::debug_matches)},
      {"K", integer(&RunConfig::K)},
      {"kmeans_restarts", integer(&RunConfig::kmeans_restarts)},
      {"baseline",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          require(v == "none" || v == "phash" || v == "embedding", ErrorCode::kInvalidArgument,
                  "config key '" + k + "': expected none, phash or embedding");
          c.baseline = v;
        },
        [](const RunConfig& c) { return c.baseline; }}},
      {"phash_max_distance", integer(&RunConfig::phash_max_distance)},
      {"embedding_knn", integer(&RunConfig::embedding_knn)},
      {"embeddings", path(&RunConfig::embeddings)},
      {"tasks_per_cluster", integer(&RunConfig::tasks_per_cluster)},
      {"control_tasks", integer(&RunConfig::control_tasks)},
  };
  return f;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields()) out.push_back(k);
  return out;
}

std::string config_value(const RunConfig& config, const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f.get(config);
  fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream s;
  for (const auto& [k, f] : fields()) s << k << '=' << f.get(*this) << '\n';
  return s.str();
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : fields())
    if (k == key) {
      f.set(config, key, value);
      return;
    }
  fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
}

void apply_line(RunConfig& config, const std::string& raw) {
  std::string line = raw;
  if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
  line = trim(line);
  if (line.empty()) return;
  auto eq = line.find('=');
  require(eq != std::string::npos, ErrorCode::kInvalidArgument, "expected key=value, got '" + line + "'");
  apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

RunConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read config " + p.string());
  RunConfig c;
  std::string line;
  while (std::getline(in, line)) apply_line(c, line);
  return c;
}

void save_config(const std::filesystem::path& p, const RunConfig& config) {
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + p.string());
  out << config.to_text();
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + p.string());
}

}  // namespace mgd
