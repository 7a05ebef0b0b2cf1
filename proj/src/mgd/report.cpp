#include "mgd/report.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mgd/error.hpp"

namespace mgd {

using nlohmann::json;

ClusterReport build_report(const ClusterAssignment& assignment, const CorpusSnapshot& snapshot,
                           const SparseAffinity& affinity, std::size_t top) {
  require(assignment.assignments.size() == snapshot.size(), ErrorCode::kInvalidArgument,
          "assignment does not cover the corpus");
  require(affinity.n == snapshot.size(), ErrorCode::kInvalidArgument, "affinity does not cover the corpus");
  auto degree = affinity.degrees();
  std::vector<std::vector<ImageId>> members(static_cast<std::size_t>(assignment.K) + 1);
  for (std::size_t i = 0; i < assignment.assignments.size(); ++i) {
    auto c = assignment.assignments[i];
    require(c < members.size(), ErrorCode::kInvalidArgument, "cluster id out of range");
    members[c].push_back(static_cast<ImageId>(i));
  }
  ClusterReport out;
  out.K = assignment.K;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    if (m.empty()) continue;
    ClusterSection s;
    s.cluster = static_cast<std::uint32_t>(c);
    s.overflow = c == static_cast<std::size_t>(assignment.K);
    s.size = m.size();
    for (auto id : m) ++s.source_tags[snapshot.records[id].source_tag];
    std::stable_sort(m.begin(), m.end(), [&](ImageId a, ImageId b) { return degree[a] > degree[b]; });
    s.exemplars.assign(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(std::min(top, m.size())));
    out.sections.push_back(std::move(s));
  }
  return out;
}

std::string report_to_json(const ClusterReport& report, const CorpusSnapshot& snapshot) {
  json clusters = json::array();
  for (const auto& s : report.sections) {
    json ex = json::array();
    for (auto id : s.exemplars) ex.push_back({{"image_id", id}, {"path", snapshot.records[id].path.string()}});
    clusters.push_back({{"cluster", s.cluster},
                        {"overflow", s.overflow},
                        {"size", s.size},
                        {"exemplars", std::move(ex)},
                        {"source_tags", s.source_tags}});
  }
  json doc{{"K", report.K}, {"images", snapshot.size()}, {"clusters", std::move(clusters)}};
  return doc.dump(2);
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string report_to_html(const ClusterReport& report, const CorpusSnapshot& snapshot, const ClusterStats& stats) {
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Cluster report</title>\n"
    << "<style>body{font-family:sans-serif;margin:2em}section{margin-bottom:2em}"
    << ".grid{display:grid;grid-template-columns:repeat(3,160px);gap:4px}"
    << ".grid img{width:160px;height:160px;object-fit:cover}</style></head><body>\n";
  h << "<h1>Clusters</h1>\n<p>" << snapshot.size() << " images, K = " << report.K << ", " << stats.non_empty
    << " non-empty clusters. Size min " << stats.min << ", median " << stats.median << ", max " << stats.max
    << "; unclustered " << stats.overflow << ".</p>\n";
  for (const auto& s : report.sections) {
    h << "<section><h2>" << (s.overflow ? "Unclustered (no matches)" : "Cluster " + std::to_string(s.cluster))
      << " &middot; " << s.size << " images</h2>\n<p>";
    bool first = true;
    for (const auto& [tag, n] : s.source_tags) {
      h << (first ? "" : ", ") << escape(tag.empty() ? "(untagged)" : tag) << ": " << n;
      first = false;
    }
    h << "</p>\n<div class=\"grid\">";
    for (auto id : s.exemplars) {
      std::string src = "file://" + std::filesystem::absolute(snapshot.records[id].path).string();
      h << "<img src=\"" << escape(src) << "\" title=\"image " << id << "\" alt=\"image " << id << "\">";
    }
    h << "</div></section>\n";
  }
  h << "</body></html>\n";
  return h.str();
}

}  // namespace mgd
