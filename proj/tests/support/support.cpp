#include "support/support.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mgd/csv.hpp"
#include "mgd/error.hpp"

namespace mgd::test {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()));
    if (fs::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  fail(ErrorCode::kIo, "cannot create a temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + p.string());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

namespace {

double choose2(double x) { return x * (x - 1) / 2; }

}  // namespace

double purity(const std::vector<int>& truth, const std::vector<std::uint32_t>& clusters) {
  require(truth.size() == clusters.size() && !truth.empty(), ErrorCode::kInvalidArgument, "label size mismatch");
  std::map<std::uint32_t, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < truth.size(); ++i) ++table[clusters[i]][truth[i]];
  std::size_t hit = 0;
  for (const auto& [c, row] : table) {
    std::size_t best = 0;
    for (const auto& [g, n] : row) best = std::max(best, n);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double adjusted_rand_index(const std::vector<int>& truth, const std::vector<std::uint32_t>& clusters) {
  require(truth.size() == clusters.size() && !truth.empty(), ErrorCode::kInvalidArgument, "label size mismatch");
  std::map<std::pair<int, std::uint32_t>, std::size_t> cells;
  std::map<int, std::size_t> rows;
  std::map<std::uint32_t, std::size_t> cols;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++cells[{truth[i], clusters[i]}];
    ++rows[truth[i]];
    ++cols[clusters[i]];
  }
  double index = 0, a = 0, b = 0;
  for (const auto& [_, n] : cells) index += choose2(static_cast<double>(n));
  for (const auto& [_, n] : rows) a += choose2(static_cast<double>(n));
  for (const auto& [_, n] : cols) b += choose2(static_cast<double>(n));
  double expected = a * b / choose2(static_cast<double>(truth.size()));
  double top = (a + b) / 2;
  if (top == expected) return 1.0;
  return (index - expected) / (top - expected);
}

double largest_share(const std::vector<std::uint32_t>& clusters) {
  std::map<std::uint32_t, std::size_t> sizes;
  for (auto c : clusters) ++sizes[c];
  std::size_t best = 0;
  for (const auto& [_, n] : sizes) best = std::max(best, n);
  return clusters.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(clusters.size());
}

std::vector<int> genre_labels(const CorpusSnapshot& snapshot, const fs::path& labels_csv) {
  std::ifstream in(labels_csv);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + labels_csv.string());
  std::vector<std::string> row;
  std::map<std::string, int> by_name;
  bool header = true;
  while (csv::read_row(in, row)) {
    if (header) {
      header = false;
      continue;
    }
    if (row.size() < 2) continue;
    by_name[fs::path(row[0]).filename().string()] = std::stoi(row[1]);
  }
  std::vector<int> out;
  for (const auto& r : snapshot.records) {
    auto it = by_name.find(r.path.filename().string());
    require(it != by_name.end(), ErrorCode::kFormat, "no label for " + r.path.string());
    out.push_back(it->second);
  }
  return out;
}

SparseAffinity random_graph(std::uint32_t n, double p, std::mt19937_64& rng, int max_weight) {
  std::bernoulli_distribution edge(p);
  std::uniform_int_distribution<int> w(1, max_weight);
  AffinityBuilder b(n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (edge(rng)) b.add(i, j, w(rng));
  // A spanning path keeps the graph connected so every degree is positive.
  for (std::uint32_t i = 0; i + 1 < n; ++i)
    if (edge(rng) || i % 7 == 0) b.add(i, i + 1, w(rng));
  SparseAffinity g = b.finish();
  for (auto c : g.edge_counts())
    if (c == 0) return random_graph(n, std::min(1.0, p * 1.5), rng, max_weight);
  return g;
}

SparseAffinity clique_pair(std::uint32_t a, std::uint32_t b, double weight) {
  AffinityBuilder builder(a + b);
  for (std::uint32_t i = 0; i < a; ++i)
    for (std::uint32_t j = i + 1; j < a; ++j) builder.add(i, j, weight);
  for (std::uint32_t i = a; i < a + b; ++i)
    for (std::uint32_t j = i + 1; j < a + b; ++j) builder.add(i, j, weight);
  return builder.finish();
}

SparseAffinity relabel(const SparseAffinity& g, const std::vector<std::uint32_t>& perm) {
  AffinityBuilder b(g.n);
  for (const auto& e : g.edges) b.add(perm[e.i], perm[e.j], e.weight);
  return b.finish();
}

std::vector<double> dense_laplacian_spectrum(const SparseAffinity& g) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.n, g.n);
  for (const auto& e : g.edges) a(e.i, e.j) = a(e.j, e.i) = e.weight;
  Eigen::VectorXd d = a.rowwise().sum();
  require((d.array() > 0).all(), ErrorCode::kPrecondition, "isolated node in oracle input");
  Eigen::VectorXd s = d.array().rsqrt();
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(g.n, g.n) - s.asDiagonal() * a * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(l, Eigen::EigenvaluesOnly);
  const auto& v = solver.eigenvalues();
  return {v.data(), v.data() + v.size()};
}

bool same_partition(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  if (a.size() != b.size()) return false;
  std::map<std::uint32_t, std::uint32_t> fwd, back;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [f, fnew] = fwd.emplace(a[i], b[i]);
    auto [r, rnew] = back.emplace(b[i], a[i]);
    if (f->second != b[i] || r->second != a[i]) return false;
  }
  return true;
}

std::vector<std::size_t> exact_nearest(const RowMatrix<float>& base, const RowMatrix<float>& queries) {
  std::vector<std::size_t> out(static_cast<std::size_t>(queries.rows()));
  RowMatrix<double> b = base.cast<double>();
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    Eigen::RowVectorXd x = queries.row(q).cast<double>();
    Eigen::Index best = 0;
    (b.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
    out[static_cast<std::size_t>(q)] = static_cast<std::size_t>(best);
  }
  return out;
}

}  // namespace mgd::test
