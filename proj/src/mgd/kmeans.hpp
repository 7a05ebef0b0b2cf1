#pragma once

// Seeded k-means (k-means++ init, Lloyd iterations) over row-major
// matrices. Shared by the coarse quantizer, PQ codebooks and the spectral
// step.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace mgd {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KMeansParams {
  int k = 1;
  int max_iterations = 25;
  int restarts = 1;
  // Stop once no centroid moves more than this (Euclidean).
  double shift_tolerance = 0.0;
  // Cap on the number of points used for k-means++ seeding; 0 = all.
  std::size_t seeding_sample = 0;
  std::uint64_t seed = 0;
};

template <typename T>
struct KMeansResult {
  RowMatrix<T> centroids;
  std::vector<std::int32_t> assignment;
  double inertia = 0;
  int iterations = 0;
  // Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_history;
  // Number of clusters left empty by the winning restart.
  int empty_clusters = 0;
};

// k-means++ seeding only.
template <typename T>
RowMatrix<T> kmeans_plusplus(const RowMatrix<T>& data, int k, std::uint64_t seed, std::size_t sample = 0);

template <typename T>
KMeansResult<T> kmeans(const RowMatrix<T>& data, const KMeansParams& params);

// Lloyd iterations starting from the given centroids.
template <typename T>
KMeansResult<T> lloyd(const RowMatrix<T>& data, RowMatrix<T> centroids, int max_iterations,
                      double shift_tolerance = 0.0);

// Nearest centroid per row (ties to the lower index) and its squared distance.
template <typename T>
void assign_nearest(const RowMatrix<T>& data, const RowMatrix<T>& centroids, std::vector<std::int32_t>& index,
                    std::vector<T>& distance);

// The n closest centroids per row, nearest first. Output is rows x n.
template <typename T>
void nearest_n(const RowMatrix<T>& data, const RowMatrix<T>& centroids, int n,
               std::vector<std::int32_t>& index, std::vector<T>& distance);

}  // namespace mgd
