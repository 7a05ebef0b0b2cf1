#include "doctest.h"

#include <random>
#include <set>

#include "mgd/kmeans.hpp"
#include "support/support.hpp"

using namespace mgd;

TEST_SUITE("kmeans") {
  TEST_CASE("duplicated points at K locations give zero inertia") {
    RowMatrix<double> data(60, 3);
    std::vector<int> truth;
    for (int i = 0; i < 60; ++i) {
      int g = (i * 7) % 5;
      truth.push_back(g);
      data.row(i) << g * 10.0, -g * 3.0, g * g;
    }
    KMeansParams p;
    p.k = 5;
    p.max_iterations = 50;
    p.restarts = 3;
    p.seed = 4;
    auto r = kmeans(data, p);
    CHECK(r.inertia == doctest::Approx(0.0));
    std::vector<std::uint32_t> got(r.assignment.begin(), r.assignment.end());
    std::vector<std::uint32_t> want(truth.begin(), truth.end());
    CHECK(test::same_partition(got, want));
    CHECK(r.empty_clusters == 0);
  }

  TEST_CASE("same seed gives identical results") {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> nd;
    RowMatrix<float> data(500, 8);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      for (Eigen::Index j = 0; j < data.cols(); ++j) data(i, j) = nd(rng);
    KMeansParams p;
    p.k = 12;
    p.seed = 99;
    p.restarts = 2;
    auto a = kmeans(data, p);
    auto b = kmeans(data, p);
    CHECK(a.assignment == b.assignment);
    CHECK(a.centroids == b.centroids);
    p.seed = 100;
    auto c = kmeans(data, p);
    CHECK(c.assignment.size() == a.assignment.size());
  }

  TEST_CASE("inertia never increases across Lloyd iterations") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
      RowMatrix<double> data(400, 4);
      for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j) data(i, j) = nd(rng) + (i % 6) * 0.8;
      KMeansParams p;
      p.k = 9;
      p.max_iterations = 40;
      p.seed = static_cast<std::uint64_t>(trial);
      auto r = kmeans(data, p);
      REQUIRE(r.inertia_history.size() >= 2);
      for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
        CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] * (1 + 1e-12));
    }
  }

  TEST_CASE("k-means++ seeds are distinct data rows") {
    RowMatrix<float> data(30, 2);
    for (int i = 0; i < 30; ++i) data.row(i) << static_cast<float>(i), static_cast<float>(i % 4);
    auto c = kmeans_plusplus(data, 10, 7);
    REQUIRE(c.rows() == 10);
    std::set<std::pair<float, float>> seen;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      bool found = false;
      for (Eigen::Index j = 0; j < data.rows(); ++j) found = found || (data.row(j) == c.row(i));
      CHECK(found);
      seen.insert({c(i, 0), c(i, 1)});
    }
    CHECK(seen.size() == 10);
  }

  TEST_CASE("nearest and n-nearest agree with brute force") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(-1, 1);
    RowMatrix<float> data(200, 5), cent(17, 5);
    for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < cent.size(); ++i) cent.data()[i] = u(rng);
    std::vector<std::int32_t> idx, idx3;
    std::vector<float> dist, dist3;
    assign_nearest(data, cent, idx, dist);
    nearest_n(data, cent, 3, idx3, dist3);
    auto oracle = test::exact_nearest(cent, data);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      CHECK(static_cast<std::size_t>(idx[i]) == oracle[i]);
      CHECK(idx3[i * 3] == idx[i]);
      CHECK(dist3[i * 3] <= dist3[i * 3 + 1]);
      CHECK(dist3[i * 3 + 1] <= dist3[i * 3 + 2]);
      CHECK(dist[i] == doctest::Approx((data.row(i) - cent.row(idx[i])).squaredNorm()).epsilon(1e-4));
    }
  }
}
