#include "mgd/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "mgd/csv.hpp"
#include "mgd/error.hpp"

namespace mgd {
namespace {

// Orthogonalizes w against the columns of `locked` and the first `cols`
// columns of V (two classical Gram-Schmidt passes). Coefficients against V are
// accumulated into h when given.
void orthogonalize(const Eigen::MatrixXd& locked, const Eigen::MatrixXd& V, Eigen::Index cols, Eigen::VectorXd& w,
                   Eigen::VectorXd* h) {
  if (h) h->setZero(cols);
  for (int pass = 0; pass < 2; ++pass) {
    if (locked.cols() > 0) w.noalias() -= locked * (locked.transpose() * w);
    if (cols > 0) {
      Eigen::VectorXd c = V.leftCols(cols).transpose() * w;
      w.noalias() -= V.leftCols(cols) * c;
      if (h) *h += c;
    }
  }
}

Eigen::VectorXd random_unit_orthogonal(std::mt19937_64& rng, const Eigen::MatrixXd& locked, const Eigen::MatrixXd& V,
                                       Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Eigen::VectorXd w(V.rows());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = g(rng);
    double before = w.norm();
    orthogonalize(locked, V, cols, w, nullptr);
    double after = w.norm();
    if (after > 1e-6 * before) return w / after;
  }
  fail(ErrorCode::kInternal, "eigensolver could not extend its basis");
}

}  // namespace

EigenPairs largest_eigenpairs(const MatVec& op, Eigen::Index n, int count, const EigenSolverParams& params,
                              const Eigen::MatrixXd& locked) {
  const Eigen::Index space = n - locked.cols();
  require(count >= 1 && count <= space, ErrorCode::kInvalidArgument, "eigenpair count out of range");
  require(params.block >= 1, ErrorCode::kInvalidArgument, "block width must be positive");
  const Eigen::Index p = std::min<Eigen::Index>({params.block, count, space});
  const Eigen::Index want = std::max<Eigen::Index>(2 * count + p, count + 32);
  const Eigen::Index m = std::min<Eigen::Index>(space, want + p);
  // Columns that may be expanded before a restart; the rest holds the
  // residual block.
  const Eigen::Index m_expand = m == space ? space : m - p;

  std::mt19937_64 rng(params.seed);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
  Eigen::Index s = 0, e = 0;
  for (Eigen::Index r = 0; r < p; ++r) {
    V.col(s) = random_unit_orthogonal(rng, locked, V, s);
    ++s;
  }

  EigenPairs out;
  Eigen::VectorXd w(n), h;
  for (int restart = 0;; ++restart) {
    while (e < m_expand) {
      if (e == s) {
        // Invariant subspace reached: continue in a fresh direction.
        if (s >= m) break;
        V.col(s) = random_unit_orthogonal(rng, locked, V, s);
        ++s;
      }
      Eigen::VectorXd x = V.col(e);
      op(x, w);
      double before = w.norm();
      orthogonalize(locked, V, s, w, &h);
      H.col(e).head(s) += h;
      double beta = w.norm();
      if (beta > 1e-12 * std::max(before, 1e-300) && s < m) {
        V.col(s) = w / beta;
        H(s, e) = beta;
        ++s;
      }
      ++e;
    }

    Eigen::MatrixXd T = H.topLeftCorner(e, e);
    T = 0.5 * (T + T.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    require(es.info() == Eigen::Success, ErrorCode::kInternal, "projected eigenproblem failed");
    // Ascending from Eigen; reverse to descending.
    Eigen::MatrixXd Y = es.eigenvectors().rowwise().reverse();
    Eigen::VectorXd theta = es.eigenvalues().reverse();
    const Eigen::Index u = s - e;
    Eigen::MatrixXd R = u > 0 ? Eigen::MatrixXd(H.block(e, 0, u, e) * Y) : Eigen::MatrixXd::Zero(0, e);

    double scale = std::max(1e-300, theta.cwiseAbs().maxCoeff());
    bool converged = true;
    for (int i = 0; i < count && converged; ++i) {
      double res = u > 0 ? R.col(i).norm() : 0.0;
      if (res > params.tolerance * scale) converged = false;
    }
    if (converged || restart >= params.max_restarts) {
      require(converged, ErrorCode::kInternal,
              "eigensolver did not converge after " + std::to_string(restart) + " restarts");
      out.values.assign(theta.data(), theta.data() + count);
      out.vectors = V.leftCols(e) * Y.leftCols(count);
      out.restarts = restart;
      return out;
    }

    Eigen::Index keep = count + (m_expand - count - u) / 2;
    keep = std::clamp<Eigen::Index>(keep, count, e - 1);
    Eigen::MatrixXd Vn = Eigen::MatrixXd::Zero(n, m);
    Vn.leftCols(keep) = V.leftCols(e) * Y.leftCols(keep);
    Vn.middleCols(keep, u) = V.middleCols(e, u);
    H.setZero();
    for (Eigen::Index i = 0; i < keep; ++i) H(i, i) = theta[i];
    H.block(keep, 0, u, keep) = R.leftCols(keep);
    V.swap(Vn);
    e = keep;
    s = keep + u;
  }
}

std::pair<SparseAffinity, std::vector<ImageId>> active_subgraph(const SparseAffinity& a) {
  std::vector<std::uint32_t> remap(a.n, UINT32_MAX);
  for (const auto& edge : a.edges) remap[edge.i] = remap[edge.j] = 0;
  std::vector<ImageId> map;
  for (std::uint32_t v = 0; v < a.n; ++v)
    if (remap[v] == 0) {
      remap[v] = static_cast<std::uint32_t>(map.size());
      map.push_back(v);
    }
  SparseAffinity sub;
  sub.n = static_cast<std::uint32_t>(map.size());
  sub.seed = a.seed;
  sub.j = a.j;
  sub.edges.reserve(a.edges.size());
  for (const auto& edge : a.edges) sub.edges.push_back({remap[edge.i], remap[edge.j], edge.weight});
  return {std::move(sub), std::move(map)};
}

namespace {

struct Csr {
  std::vector<std::size_t> start;
  std::vector<std::uint32_t> col;
  std::vector<double> val;
};

struct Candidate {
  double value;
  std::size_t component_size;
  std::uint32_t component;
  int order;
  Eigen::VectorXd vec;  // over the component's local nodes
};

}  // namespace

SpectralEmbedding spectral_embed(const SparseAffinity& a, int k, std::vector<ImageId> node_map,
                                 const EigenSolverParams& params) {
  a.validate();
  require(k >= 1, ErrorCode::kInvalidArgument, "embedding dimension must be positive");
  require(static_cast<std::uint32_t>(k) <= a.n, ErrorCode::kInvalidArgument,
          "embedding dimension " + std::to_string(k) + " exceeds active node count " + std::to_string(a.n));
  if (node_map.empty()) {
    node_map.resize(a.n);
    std::iota(node_map.begin(), node_map.end(), 0u);
  }
  require(node_map.size() == a.n, ErrorCode::kInvalidArgument, "node map size mismatch");

  // Weights divided by their maximum so that a global rescale leaves every
  // floating-point operation below unchanged.
  double wmax = 0;
  for (const auto& edge : a.edges) wmax = std::max(wmax, edge.weight);
  std::vector<double> deg(a.n, 0.0);
  for (const auto& edge : a.edges) {
    double w = edge.weight / wmax;
    deg[edge.i] += w;
    deg[edge.j] += w;
  }
  for (std::uint32_t v = 0; v < a.n; ++v)
    require(deg[v] > 0, ErrorCode::kPrecondition, "node " + std::to_string(v) + " has no edges; remove it first");

  auto label = component_labels(a);
  std::uint32_t ncomp = a.n == 0 ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::vector<std::uint32_t>> members(ncomp);
  std::vector<std::uint32_t> local(a.n);
  for (std::uint32_t v = 0; v < a.n; ++v) {
    local[v] = static_cast<std::uint32_t>(members[label[v]].size());
    members[label[v]].push_back(v);
  }

  // Per-component CSR of D^-1/2 A D^-1/2.
  std::vector<Csr> csr(ncomp);
  {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(a.n);
    for (const auto& edge : a.edges) {
      double w = (edge.weight / wmax) / std::sqrt(deg[edge.i] * deg[edge.j]);
      rows[edge.i].push_back({local[edge.j], w});
      rows[edge.j].push_back({local[edge.i], w});
    }
    for (std::uint32_t c = 0; c < ncomp; ++c) {
      auto& m = csr[c];
      m.start.push_back(0);
      for (auto v : members[c]) {
        auto& r = rows[v];
        std::sort(r.begin(), r.end());
        for (auto& [j, w] : r) {
          m.col.push_back(j);
          m.val.push_back(w);
        }
        m.start.push_back(m.col.size());
      }
    }
  }

  std::vector<Candidate> cands;
  for (std::uint32_t c = 0; c < ncomp; ++c) {
    const auto& mem = members[c];
    Eigen::VectorXd u0(static_cast<Eigen::Index>(mem.size()));
    for (std::size_t i = 0; i < mem.size(); ++i) u0[static_cast<Eigen::Index>(i)] = std::sqrt(deg[mem[i]]);
    u0 /= u0.norm();
    cands.push_back({0.0, mem.size(), c, 0, u0});
  }
  if (ncomp < static_cast<std::uint32_t>(k)) {
    for (std::uint32_t c = 0; c < ncomp; ++c) {
      const auto& mem = members[c];
      const Eigen::Index nc = static_cast<Eigen::Index>(mem.size());
      int extra = static_cast<int>(std::min<Eigen::Index>(k, nc)) - 1;
      if (extra <= 0) continue;
      const Csr& m = csr[c];
      MatVec op = [&m](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
        y.resize(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          double acc = 0;
          for (std::size_t t = m.start[static_cast<std::size_t>(i)]; t < m.start[static_cast<std::size_t>(i) + 1]; ++t)
            acc += m.val[t] * x[m.col[t]];
          y[i] = acc;
        }
      };
      EigenSolverParams ep = params;
      ep.seed = params.seed ^ (0x9e3779b97f4a7c15ULL * (c + 1));
      Eigen::MatrixXd locked = cands[c].vec;
      auto pairs = largest_eigenpairs(op, nc, extra, ep, locked);
      for (int i = 0; i < extra; ++i) {
        double lambda = std::clamp(1.0 - pairs.values[static_cast<std::size_t>(i)], 0.0, 2.0);
        cands.push_back({lambda, mem.size(), c, i + 1, pairs.vectors.col(i)});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.value != y.value) return x.value < y.value;
    if (x.component_size != y.component_size) return x.component_size > y.component_size;
    if (x.component != y.component) return x.component < y.component;
    return x.order < y.order;
  });

  SpectralEmbedding out;
  out.n_active = a.n;
  out.k = k;
  out.node_map = std::move(node_map);
  out.coords = RowMatrix<double>::Zero(a.n, k);
  for (int col = 0; col < k; ++col) {
    const auto& cand = cands[static_cast<std::size_t>(col)];
    out.eigenvalues.push_back(cand.value);
    const auto& mem = members[cand.component];
    for (std::size_t i = 0; i < mem.size(); ++i) out.coords(mem[i], col) = cand.vec[static_cast<Eigen::Index>(i)];
  }
  for (Eigen::Index r = 0; r < out.coords.rows(); ++r) {
    double norm = out.coords.row(r).norm();
    if (norm > 0)
      out.coords.row(r) /= norm;
    else
      ++out.zero_rows;
  }
  return out;
}

ClusterAssignment kmeans_assign(const SpectralEmbedding& e, int K, std::uint32_t n_images, int restarts,
                                std::uint64_t seed) {
  require(K >= 1, ErrorCode::kInvalidArgument, "K must be positive");
  require(static_cast<std::uint32_t>(K) <= e.n_active, ErrorCode::kInvalidArgument,
          "K=" + std::to_string(K) + " exceeds active node count " + std::to_string(e.n_active));
  KMeansParams kp;
  kp.k = K;
  kp.max_iterations = 300;
  kp.restarts = restarts;
  kp.shift_tolerance = 1e-7;
  kp.seed = seed;
  auto res = kmeans(e.coords, kp);
  ClusterAssignment out;
  out.K = K;
  out.assignments.assign(n_images, static_cast<std::uint32_t>(K));
  for (std::size_t r = 0; r < e.node_map.size(); ++r) {
    require(e.node_map[r] < n_images, ErrorCode::kInvalidArgument, "node map refers past the corpus");
    out.assignments[e.node_map[r]] = static_cast<std::uint32_t>(res.assignment[r]);
  }
  out.centroid_inertia = res.inertia;
  out.empty_clusters = res.empty_clusters;
  return out;
}

ClusterRun cluster_graph(const SparseAffinity& a, int K, std::uint64_t seed, int restarts) {
  require(K >= 1, ErrorCode::kInvalidArgument, "K must be positive");
  ClusterRun run;
  auto [sub, map] = active_subgraph(a);
  if (sub.n == 0) {
    run.warnings.push_back("graph has no edges; every image is in the overflow cluster");
    run.assignment.K = K;
    run.assignment.assignments.assign(a.n, static_cast<std::uint32_t>(K));
    return run;
  }
  int k = K;
  if (static_cast<std::uint32_t>(K) > sub.n) {
    k = static_cast<int>(sub.n);
    run.warnings.push_back("only " + std::to_string(sub.n) + " images have edges; clustering into " +
                           std::to_string(k) + " clusters instead of " + std::to_string(K));
  }
  EigenSolverParams ep;
  ep.seed = seed ^ 0x5eedULL;
  run.embedding = spectral_embed(sub, k, std::move(map), ep);
  if (run.embedding.zero_rows > 0)
    run.warnings.push_back(std::to_string(run.embedding.zero_rows) +
                           " embedded images have an all-zero row (more components than K)");
  run.assignment = kmeans_assign(run.embedding, k, a.n, restarts, seed);
  if (k != K) {
    for (auto& c : run.assignment.assignments)
      if (c == static_cast<std::uint32_t>(k)) c = static_cast<std::uint32_t>(K);
    run.assignment.K = K;
    run.assignment.empty_clusters += K - k;
  }
  return run;
}

ClusterStats stats_from_sizes(std::vector<std::size_t> sizes, std::size_t overflow) {
  ClusterStats s;
  s.sizes = sizes;
  s.overflow = overflow;
  std::vector<std::size_t> ne;
  for (auto v : sizes)
    if (v > 0) ne.push_back(v);
  std::sort(ne.begin(), ne.end());
  s.non_empty = ne.size();
  if (ne.empty()) return s;
  s.min = ne.front();
  s.max = ne.back();
  std::size_t h = ne.size() / 2;
  s.median = ne.size() % 2 ? static_cast<double>(ne[h]) : 0.5 * (static_cast<double>(ne[h - 1]) + ne[h]);
  std::map<std::size_t, std::size_t> buckets;
  for (auto v : ne) {
    std::size_t lo = 1;
    while (lo * 2 <= v) lo *= 2;
    ++buckets[lo];
  }
  s.histogram.assign(buckets.begin(), buckets.end());
  return s;
}

ClusterStats cluster_stats(const ClusterAssignment& a) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(a.K), 0);
  std::size_t overflow = 0;
  for (auto c : a.assignments) {
    require(c <= static_cast<std::uint32_t>(a.K), ErrorCode::kInvalidArgument, "cluster id out of range");
    if (c == static_cast<std::uint32_t>(a.K))
      ++overflow;
    else
      ++sizes[c];
  }
  return stats_from_sizes(std::move(sizes), overflow);
}

void save_assignment(const std::filesystem::path& path, const ClusterAssignment& a) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "image_id,cluster_id\n";
  for (std::size_t i = 0; i < a.assignments.size(); ++i) out << i << ',' << a.assignments[i] << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

ClusterAssignment load_assignment(const std::filesystem::path& path, int K) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  std::vector<std::string> f;
  require(csv::read_row(in, f) && f.size() == 2 && f[0] == "image_id", ErrorCode::kFormat,
          path.string() + ": expected header image_id,cluster_id");
  ClusterAssignment a;
  a.K = K;
  while (csv::read_row(in, f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    require(f.size() == 2, ErrorCode::kFormat, path.string() + ": malformed row");
    std::size_t id = 0;
    std::uint32_t c = 0;
    try {
      id = std::stoul(f[0]);
      c = static_cast<std::uint32_t>(std::stoul(f[1]));
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, path.string() + ": non-numeric row");
    }
    require(id == a.assignments.size(), ErrorCode::kFormat, path.string() + ": image ids must be dense and ordered");
    require(c <= static_cast<std::uint32_t>(K), ErrorCode::kFormat, path.string() + ": cluster id above K");
    a.assignments.push_back(c);
  }
  return a;
}

void save_stats(const std::filesystem::path& path, const ClusterStats& s) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "clusters " << s.sizes.size() << "\nnon_empty " << s.non_empty << "\nmin " << s.min << "\nmedian "
      << s.median << "\nmax " << s.max << "\noverflow " << s.overflow << "\nhistogram\n";
  for (auto [lo, count] : s.histogram) out << "  [" << lo << ", " << 2 * lo - 1 << "] " << count << '\n';
  out << "sizes";
  for (auto v : s.sizes) out << ' ' << v;
  out << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace mgd
