#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgd/affinity.hpp"
#include "mgd/corpus.hpp"
#include "mgd/spectral.hpp"

namespace mgd {

struct ClusterSection {
  std::uint32_t cluster = 0;
  bool overflow = false;
  std::size_t size = 0;
  std::vector<ImageId> exemplars;  // highest degree first, ties by id
  std::map<std::string, std::size_t> source_tags;
};

struct ClusterReport {
  int K = 0;
  std::vector<ClusterSection> sections;  // non-empty clusters only, by id
};

ClusterReport build_report(const ClusterAssignment& assignment, const CorpusSnapshot& snapshot,
                           const SparseAffinity& affinity, std::size_t top = 9);

std::string report_to_json(const ClusterReport& report, const CorpusSnapshot& snapshot);
std::string report_to_html(const ClusterReport& report, const CorpusSnapshot& snapshot, const ClusterStats& stats);

}  // namespace mgd
