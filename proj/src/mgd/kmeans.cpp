#include "mgd/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "mgd/error.hpp"

namespace mgd {
namespace {

constexpr Eigen::Index kBlockRows = 4096;

// Squared distances of a row block to every centroid via the expansion
// |x|^2 - 2 x.c + |c|^2, clamped at zero.
template <typename T>
void block_distances(const RowMatrix<T>& data, Eigen::Index begin, Eigen::Index rows, const RowMatrix<T>& centroids,
                     const Eigen::Matrix<T, Eigen::Dynamic, 1>& cnorm, RowMatrix<T>& out) {
  auto block = data.middleRows(begin, rows);
  out.noalias() = -2 * block * centroids.transpose();
  Eigen::Matrix<T, Eigen::Dynamic, 1> xnorm = block.rowwise().squaredNorm();
  out.colwise() += xnorm;
  out.rowwise() += cnorm.transpose();
  out = out.cwiseMax(T(0));
}

}  // namespace

template <typename T>
void assign_nearest(const RowMatrix<T>& data, const RowMatrix<T>& centroids, std::vector<std::int32_t>& index,
                    std::vector<T>& distance) {
  require(data.cols() == centroids.cols(), ErrorCode::kInvalidArgument, "dimension mismatch");
  require(centroids.rows() > 0, ErrorCode::kInvalidArgument, "no centroids");
  const Eigen::Index n = data.rows();
  index.assign(static_cast<std::size_t>(n), 0);
  distance.assign(static_cast<std::size_t>(n), T(0));
  Eigen::Matrix<T, Eigen::Dynamic, 1> cnorm = centroids.rowwise().squaredNorm();
  RowMatrix<T> d;
  for (Eigen::Index b = 0; b < n; b += kBlockRows) {
    Eigen::Index rows = std::min(kBlockRows, n - b);
    block_distances(data, b, rows, centroids, cnorm, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      T v = d.row(r).minCoeff(&best);
      index[static_cast<std::size_t>(b + r)] = static_cast<std::int32_t>(best);
      distance[static_cast<std::size_t>(b + r)] = v;
    }
  }
}

template <typename T>
void nearest_n(const RowMatrix<T>& data, const RowMatrix<T>& centroids, int n, std::vector<std::int32_t>& index,
               std::vector<T>& distance) {
  require(n >= 1 && n <= centroids.rows(), ErrorCode::kInvalidArgument, "n out of range");
  const Eigen::Index rows_total = data.rows();
  index.assign(static_cast<std::size_t>(rows_total) * n, 0);
  distance.assign(static_cast<std::size_t>(rows_total) * n, T(0));
  Eigen::Matrix<T, Eigen::Dynamic, 1> cnorm = centroids.rowwise().squaredNorm();
  RowMatrix<T> d;
  std::vector<std::int32_t> order(static_cast<std::size_t>(centroids.rows()));
  for (Eigen::Index b = 0; b < rows_total; b += kBlockRows) {
    Eigen::Index rows = std::min(kBlockRows, rows_total - b);
    block_distances(data, b, rows, centroids, cnorm, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      std::iota(order.begin(), order.end(), 0);
      auto less = [&](std::int32_t a, std::int32_t c) { return d(r, a) < d(r, c) || (d(r, a) == d(r, c) && a < c); };
      std::partial_sort(order.begin(), order.begin() + n, order.end(), less);
      for (int j = 0; j < n; ++j) {
        std::size_t o = static_cast<std::size_t>(b + r) * n + j;
        index[o] = order[static_cast<std::size_t>(j)];
        distance[o] = d(r, order[static_cast<std::size_t>(j)]);
      }
    }
  }
}

template <typename T>
RowMatrix<T> kmeans_plusplus(const RowMatrix<T>& data, int k, std::uint64_t seed, std::size_t sample) {
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  require(data.rows() >= k, ErrorCode::kInsufficientData, "fewer points than clusters");
  std::mt19937_64 rng(seed);
  RowMatrix<T> pool;
  const RowMatrix<T>* src = &data;
  if (sample != 0 && static_cast<std::size_t>(data.rows()) > std::max<std::size_t>(sample, static_cast<std::size_t>(k))) {
    std::vector<Eigen::Index> ids(static_cast<std::size_t>(data.rows()));
    std::iota(ids.begin(), ids.end(), 0);
    std::size_t m = std::max<std::size_t>(sample, static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
      std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    pool.resize(static_cast<Eigen::Index>(m), data.cols());
    for (std::size_t i = 0; i < m; ++i) pool.row(static_cast<Eigen::Index>(i)) = data.row(ids[i]);
    src = &pool;
  }
  const RowMatrix<T>& x = *src;
  const Eigen::Index n = x.rows();
  RowMatrix<T> centroids(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = x.row(first(rng));
  Eigen::Matrix<double, Eigen::Dynamic, 1> d2 =
      (x.rowwise() - centroids.row(0)).rowwise().squaredNorm().template cast<double>();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0) {
      double target = unit(rng) * total, acc = 0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] <= 0 && chosen > 0) --chosen;
    } else {
      chosen = first(rng);
    }
    centroids.row(c) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm().template cast<double>());
  }
  return centroids;
}

template <typename T>
KMeansResult<T> lloyd(const RowMatrix<T>& data, RowMatrix<T> centroids, int max_iterations, double shift_tolerance) {
  KMeansResult<T> r;
  const Eigen::Index k = centroids.rows();
  std::vector<T> dist;
  for (int it = 0;; ++it) {
    assign_nearest(data, centroids, r.assignment, dist);
    double inertia = 0;
    for (T v : dist) inertia += static_cast<double>(v);
    r.inertia = inertia;
    r.inertia_history.push_back(inertia);
    if (it >= max_iterations) break;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sums =
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(k, data.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      auto c = r.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += data.row(i).template cast<double>();
      ++counts[static_cast<std::size_t>(c)];
    }
    double max_shift = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // empty: keep previous centroid
      Eigen::Matrix<T, 1, Eigen::Dynamic> next =
          (sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)])).template cast<T>();
      max_shift = std::max(max_shift, static_cast<double>((next - centroids.row(c)).norm()));
      centroids.row(c) = next;
    }
    r.iterations = it + 1;
    if (max_shift <= shift_tolerance) {
      assign_nearest(data, centroids, r.assignment, dist);
      inertia = 0;
      for (T v : dist) inertia += static_cast<double>(v);
      r.inertia = inertia;
      r.inertia_history.push_back(inertia);
      break;
    }
  }
  std::vector<bool> used(static_cast<std::size_t>(k), false);
  for (auto a : r.assignment) used[static_cast<std::size_t>(a)] = true;
  r.empty_clusters = static_cast<int>(std::count(used.begin(), used.end(), false));
  r.centroids = std::move(centroids);
  return r;
}

template <typename T>
KMeansResult<T> kmeans(const RowMatrix<T>& data, const KMeansParams& params) {
  require(params.k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  require(data.rows() >= params.k, ErrorCode::kInsufficientData, "fewer points than clusters");
  require(params.restarts >= 1, ErrorCode::kInvalidArgument, "restarts must be positive");
  std::mt19937_64 seeder(params.seed);
  KMeansResult<T> best;
  bool have = false;
  for (int r = 0; r < params.restarts; ++r) {
    std::uint64_t s = seeder();
    auto init = kmeans_plusplus(data, params.k, s, params.seeding_sample);
    auto res = lloyd(data, std::move(init), params.max_iterations, params.shift_tolerance);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

#define MGD_INSTANTIATE_KMEANS(T)                                                                                     \
  template RowMatrix<T> kmeans_plusplus<T>(const RowMatrix<T>&, int, std::uint64_t, std::size_t);                     \
  template KMeansResult<T> kmeans<T>(const RowMatrix<T>&, const KMeansParams&);                                      \
  template KMeansResult<T> lloyd<T>(const RowMatrix<T>&, RowMatrix<T>, int, double);                                 \
  template void assign_nearest<T>(const RowMatrix<T>&, const RowMatrix<T>&, std::vector<std::int32_t>&,               \
                                  std::vector<T>&);                                                                   \
  template void nearest_n<T>(const RowMatrix<T>&, const RowMatrix<T>&, int, std::vector<std::int32_t>&,               \
                             std::vector<T>&);

MGD_INSTANTIATE_KMEANS(float)
MGD_INSTANTIATE_KMEANS(double)

}  // namespace mgd
