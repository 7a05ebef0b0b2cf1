#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mgd/affinity.hpp"
#include "mgd/kmeans.hpp"

namespace mgd {

struct SpectralEmbedding {
  std::uint32_t n_active = 0;
  int k = 0;
  RowMatrix<double> coords;          // n_active x k, rows unit length
  std::vector<double> eigenvalues;   // k smallest of L_sym, ascending
  std::vector<ImageId> node_map;     // active row -> image id
  // Rows left at the origin because no selected eigenvector touches them
  // (only possible when k is below the component count).
  std::size_t zero_rows = 0;
};

struct EigenSolverParams {
  double tolerance = 1e-10;
  int max_restarts = 500;
  // Block width of the Krylov expansion; bounds the eigenvalue multiplicity
  // resolved inside a single connected component.
  int block = 8;
  std::uint64_t seed = 0x5eed;
};

struct EigenPairs {
  std::vector<double> values;  // descending
  Eigen::MatrixXd vectors;     // n x count, column per value
  int restarts = 0;
};

using MatVec = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& y)>;

// Largest `count` eigenpairs of a symmetric operator via block Krylov-Schur
// (thick-restart Lanczos) with full reorthogonalization. The search space is
// kept orthogonal to the columns of `locked` (orthonormal, may be empty).
EigenPairs largest_eigenpairs(const MatVec& op, Eigen::Index n, int count, const EigenSolverParams& params,
                              const Eigen::MatrixXd& locked = {});

// Nodes with at least one edge, ascending, and the induced subgraph on them.
std::pair<SparseAffinity, std::vector<ImageId>> active_subgraph(const SparseAffinity& a);

// Every node of `a` must have positive degree. node_map defaults to identity.
SpectralEmbedding spectral_embed(const SparseAffinity& a, int k, std::vector<ImageId> node_map = {},
                                 const EigenSolverParams& params = {});

struct ClusterAssignment {
  std::vector<std::uint32_t> assignments;  // per image id, in [0, K]
  int K = 0;
  double centroid_inertia = 0;
  int empty_clusters = 0;
  std::uint32_t overflow_id() const { return static_cast<std::uint32_t>(K); }
};

// K-means over embedding rows; images absent from node_map go to cluster K.
ClusterAssignment kmeans_assign(const SpectralEmbedding& e, int K, std::uint32_t n_images, int restarts = 8,
                                std::uint64_t seed = 0);

struct ClusterRun {
  ClusterAssignment assignment;
  SpectralEmbedding embedding;
  std::vector<std::string> warnings;
};

// Active subgraph, embedding with k = K and K-means. If fewer than K nodes
// carry edges both are lowered to the active count and a warning is added.
ClusterRun cluster_graph(const SparseAffinity& a, int K, std::uint64_t seed = 0, int restarts = 8);

struct ClusterStats {
  std::vector<std::size_t> sizes;  // per cluster id < K, including empties
  std::size_t non_empty = 0;
  std::size_t min = 0;
  double median = 0;
  std::size_t max = 0;
  std::size_t overflow = 0;
  // (lower bound, count) over power-of-two buckets of non-empty sizes.
  std::vector<std::pair<std::size_t, std::size_t>> histogram;
};

ClusterStats cluster_stats(const ClusterAssignment& a);
// Stats from bare sizes; used for reporting injected data too.
ClusterStats stats_from_sizes(std::vector<std::size_t> sizes, std::size_t overflow = 0);

void save_assignment(const std::filesystem::path& path, const ClusterAssignment& a);
ClusterAssignment load_assignment(const std::filesystem::path& path, int K);
void save_stats(const std::filesystem::path& path, const ClusterStats& s);

}  // namespace mgd
