#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mgd/error.hpp"
#include "mgd/spectral.hpp"
#include "support/support.hpp"

using namespace mgd;

TEST_SUITE("spectral") {
  TEST_CASE("eigenvalues match a dense oracle on random graphs") {
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int g = 0; g < 20; ++g) {
      std::uint32_t n = 8 + static_cast<std::uint32_t>(rng() % 43);
      double p = 0.05 + 0.3 * static_cast<double>(rng() % 100) / 100.0;
      auto graph = test::random_graph(n, p, rng);
      auto oracle = test::dense_laplacian_spectrum(graph);
      for (int k : {1, std::min<int>(5, static_cast<int>(n)), static_cast<int>(n)}) {
        auto e = spectral_embed(graph, k);
        REQUIRE(e.eigenvalues.size() == static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) worst = std::max(worst, std::abs(e.eigenvalues[i] - oracle[i]));
      }
    }
    MESSAGE("worst eigenvalue error " << worst);
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("two cliques: two zero eigenvalues and identical rows") {
    auto g = test::clique_pair(6, 9);
    auto e = spectral_embed(g, 2);
    CHECK(std::abs(e.eigenvalues[0]) <= 1e-8);
    CHECK(std::abs(e.eigenvalues[1]) <= 1e-8);
    for (std::uint32_t i = 1; i < 15; ++i) {
      std::uint32_t ref = i < 6 ? 0 : 6;
      CHECK((e.coords.row(i) - e.coords.row(ref)).cwiseAbs().maxCoeff() <= 1e-6);
    }
    CHECK((e.coords.row(0) - e.coords.row(6)).norm() > 0.5);
    auto run = cluster_graph(g, 2, 5);
    std::vector<std::uint32_t> truth(15, 0);
    std::fill(truth.begin() + 6, truth.end(), 1);
    CHECK(test::same_partition(run.assignment.assignments, truth));
    CHECK(run.warnings.empty());
  }

  TEST_CASE("full spectrum stays within the Laplacian bound") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 5; ++t) {
      auto g = test::random_graph(30, 0.2, rng);
      auto e = spectral_embed(g, 30);
      CHECK(e.eigenvalues.size() == 30);
      for (double v : e.eigenvalues) {
        CHECK(v >= -1e-8);
        CHECK(v <= 2 + 1e-8);
      }
      CHECK(std::is_sorted(e.eigenvalues.begin(), e.eigenvalues.end()));
      for (Eigen::Index r = 0; r < e.coords.rows(); ++r) CHECK(std::abs(e.coords.row(r).norm() - 1.0) <= 1e-6);
    }
    // Bipartite graphs reach the upper bound exactly.
    AffinityBuilder b(6);
    for (std::uint32_t i = 0; i < 3; ++i)
      for (std::uint32_t j = 3; j < 6; ++j) b.add(i, j, 1 + i + j);
    auto e = spectral_embed(b.finish(), 6);
    CHECK(e.eigenvalues.back() == doctest::Approx(2.0).epsilon(1e-9));
  }

  TEST_CASE("zero eigenvalues count the connected components") {
    std::mt19937_64 rng(11);
    for (int comps = 1; comps <= 5; ++comps) {
      AffinityBuilder b(static_cast<std::uint32_t>(comps * 8));
      for (int c = 0; c < comps; ++c) {
        auto part = test::random_graph(8, 0.4, rng);
        for (const auto& ed : part.edges) b.add(ed.i + 8 * c, ed.j + 8 * c, ed.weight);
      }
      auto g = b.finish();
      auto e = spectral_embed(g, static_cast<int>(g.n));
      auto zeros = std::count_if(e.eigenvalues.begin(), e.eigenvalues.end(), [](double v) { return v < 1e-8; });
      CHECK(zeros == comps);
      CHECK(connected_components(g).size() == static_cast<std::size_t>(comps));
    }
  }

  TEST_CASE("relabelling permutes the clustering only") {
    std::mt19937_64 rng(13);
    // Four loosely joined communities.
    AffinityBuilder b(60);
    for (std::uint32_t i = 0; i < 60; ++i)
      for (std::uint32_t j = i + 1; j < 60; ++j) {
        bool same = i / 15 == j / 15;
        if ((same && rng() % 3 == 0) || (!same && rng() % 60 == 0)) b.add(i, j, same ? 5 + rng() % 5 : 1);
      }
    auto g = b.finish();
    std::vector<std::uint32_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto h = test::relabel(g, perm);
    auto e1 = spectral_embed(g, 4);
    auto e2 = spectral_embed(h, 4);
    for (int i = 0; i < 4; ++i) CHECK(e1.eigenvalues[i] == doctest::Approx(e2.eigenvalues[i]).epsilon(1e-9));
    auto r1 = cluster_graph(g, 4, 1);
    auto r2 = cluster_graph(h, 4, 1);
    std::vector<std::uint32_t> back(60);
    for (std::uint32_t i = 0; i < 60; ++i) back[i] = r2.assignment.assignments[perm[i]];
    CHECK(test::same_partition(r1.assignment.assignments, back));
    std::vector<int> truth(60);
    for (int i = 0; i < 60; ++i) truth[i] = i / 15;
    CHECK(test::purity(truth, r1.assignment.assignments) == doctest::Approx(1.0));
  }

  TEST_CASE("scaling every weight leaves assignments identical") {
    std::mt19937_64 rng(17);
    auto g = test::random_graph(45, 0.15, rng);
    auto scaled = g;
    for (auto& e : scaled.edges) e.weight *= 10;
    auto a = cluster_graph(g, 5, 3);
    auto b = cluster_graph(scaled, 5, 3);
    CHECK(a.assignment.assignments == b.assignment.assignments);
    CHECK(a.embedding.eigenvalues == b.embedding.eigenvalues);
  }

  TEST_CASE("preconditions") {
    auto g = test::clique_pair(3, 3);
    CHECK_THROWS_AS(spectral_embed(g, 7), Error);
    SparseAffinity with_isolated = g;
    with_isolated.n = 7;
    CHECK_THROWS_AS(spectral_embed(with_isolated, 2), Error);
  }

  TEST_CASE("isolated images go to the overflow cluster") {
    AffinityBuilder b(10);
    for (std::uint32_t i = 0; i < 4; ++i)
      for (std::uint32_t j = i + 1; j < 4; ++j) b.add(i, j, 3);
    for (std::uint32_t i = 5; i < 8; ++i)
      for (std::uint32_t j = i + 1; j < 8; ++j) b.add(i, j, 3);
    auto run = cluster_graph(b.finish(), 2, 0);
    const auto& a = run.assignment;
    CHECK(a.K == 2);
    for (std::uint32_t i : {4u, 8u, 9u}) CHECK(a.assignments[i] == a.overflow_id());
    CHECK(a.assignments[0] == a.assignments[3]);
    CHECK(a.assignments[5] == a.assignments[7]);
    CHECK(a.assignments[0] != a.assignments[5]);
    auto st = cluster_stats(a);
    CHECK(st.overflow == 3);
    CHECK(std::accumulate(st.sizes.begin(), st.sizes.end(), std::size_t{0}) + st.overflow == 10);
  }

  TEST_CASE("K above the active node count is lowered with a warning") {
    auto g = test::clique_pair(3, 2);
    auto run = cluster_graph(g, 8, 0);
    CHECK_FALSE(run.warnings.empty());
    CHECK(run.assignment.assignments.size() == 5);
    for (auto c : run.assignment.assignments) CHECK(c < static_cast<std::uint32_t>(run.assignment.K));
  }

  TEST_CASE("k-means on embeddings: duplicates, determinism") {
    SpectralEmbedding e;
    e.n_active = 12;
    e.k = 2;
    e.coords.resize(12, 2);
    for (int i = 0; i < 12; ++i) {
      double a = (i % 3) * 2.0;
      e.coords.row(i) << std::cos(a), std::sin(a);
      e.node_map.push_back(static_cast<ImageId>(i));
    }
    auto a = kmeans_assign(e, 3, 12, 4, 9);
    CHECK(a.centroid_inertia == doctest::Approx(0.0));
    std::vector<std::uint32_t> truth(12);
    for (int i = 0; i < 12; ++i) truth[i] = static_cast<std::uint32_t>(i % 3);
    CHECK(test::same_partition(a.assignments, truth));
    auto b = kmeans_assign(e, 3, 12, 4, 9);
    CHECK(a.assignments == b.assignments);
  }

  TEST_CASE("eigensolver on a known diagonal operator") {
    Eigen::VectorXd diag(40);
    for (int i = 0; i < 40; ++i) diag[i] = std::sin(i * 1.3) + (i == 17 || i == 29 ? 3.0 : 0.0);
    MatVec op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y = diag.cwiseProduct(x); };
    auto pairs = largest_eigenpairs(op, 40, 4, EigenSolverParams{});
    std::vector<double> sorted(diag.data(), diag.data() + 40);
    std::sort(sorted.rbegin(), sorted.rend());
    for (int i = 0; i < 4; ++i) CHECK(pairs.values[i] == doctest::Approx(sorted[i]).epsilon(1e-10));
    Eigen::MatrixXd vtv = pairs.vectors.transpose() * pairs.vectors;
    CHECK((vtv - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("cluster size statistics") {
    auto s = stats_from_sizes({8, 132, 7093});
    CHECK(s.min == 8);
    CHECK(s.median == 132);
    CHECK(s.max == 7093);
    s = stats_from_sizes({1, 1, 13, 5042});
    CHECK(s.median == 7);
    CHECK(s.min == 1);
    CHECK(s.max == 5042);
    s = stats_from_sizes({250});
    CHECK(s.min == 250);
    CHECK(s.median == 250);
    CHECK(s.max == 250);
    s = stats_from_sizes({0, 4, 9, 0}, 3);
    CHECK(s.non_empty == 2);
    CHECK(s.min == 4);
    CHECK(s.median == 6.5);
    CHECK(s.overflow == 3);
    CHECK(s.max >= s.median);
    CHECK(s.median >= s.min);
  }

  TEST_CASE("assignment file round trip") {
    test::TempDir dir;
    ClusterAssignment a;
    a.K = 3;
    a.assignments = {0, 2, 1, 3, 1};
    save_assignment(dir / "a.csv", a);
    CHECK(test::read_file(dir / "a.csv") == "image_id,cluster_id\n0,0\n1,2\n2,1\n3,3\n4,1\n");
    auto back = load_assignment(dir / "a.csv", 3);
    CHECK(back.assignments == a.assignments);
    CHECK_THROWS(load_assignment(dir / "a.csv", 2));
  }
}
