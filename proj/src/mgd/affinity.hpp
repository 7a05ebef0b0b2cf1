#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mgd/corpus.hpp"
#include "mgd/index.hpp"
#include "mgd/matcher.hpp"

namespace mgd {

struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;  // i < j
  double weight = 0;

  bool operator==(const Edge&) const = default;
};

// Symmetric non-negative graph stored as upper-triangle triplets sorted by
// (i, j). Weights are strictly positive, no self-loops.
struct SparseAffinity {
  std::uint32_t n = 0;
  std::vector<Edge> edges;
  // Provenance written to the file header.
  std::uint64_t seed = 0;
  int j = 0;

  std::vector<double> degrees() const;
  std::vector<std::uint32_t> edge_counts() const;
  // Throws kPrecondition on any invariant breach.
  void validate() const;
};

// Collects directed weights and symmetrizes by max(A, A^T).
class AffinityBuilder {
 public:
  explicit AffinityBuilder(std::uint32_t n) : n_(n) {}
  void add(std::uint32_t a, std::uint32_t b, double weight);
  SparseAffinity finish() const;

 private:
  std::uint32_t n_;
  std::vector<Edge> raw_;
};

struct QueryPlan {
  std::vector<ImageId> query_ids;  // unique, ascending
  double fraction = 0.1;
  std::uint64_t seed = 0;
};

QueryPlan sample_queries(std::size_t n, double fraction = 0.1, std::uint64_t seed = 0);

struct AffinityParams {
  SearchParams search;
  MatchParams match;
};

struct AffinityBuildReport {
  std::vector<std::string> warnings;
  std::vector<std::string> debug_records;  // filled when collect_debug is set
};

// One query per plan entry against the index; each query's top-J scores
// become edges.
SparseAffinity build_affinity(const OpqIvfIndex& index, std::span<const FeatureSet> features, std::uint32_t n,
                              const QueryPlan& plan, const AffinityParams& params,
                              AffinityBuildReport* report = nullptr, bool collect_debug = false);

// Component sizes, largest first; isolated nodes count as size-1 components.
std::vector<std::size_t> connected_components(const SparseAffinity& a);
// Component label per node (labels dense, ordered by smallest member).
std::vector<std::uint32_t> component_labels(const SparseAffinity& a);

void save_affinity(const std::filesystem::path& path, const SparseAffinity& a);
SparseAffinity load_affinity(const std::filesystem::path& path);

}  // namespace mgd
