#include "mgd/affinity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mgd/error.hpp"
#include "mgd/parallel.hpp"

namespace mgd {

std::vector<double> SparseAffinity::degrees() const {
  std::vector<double> d(n, 0.0);
  for (const auto& e : edges) {
    d[e.i] += e.weight;
    d[e.j] += e.weight;
  }
  return d;
}

std::vector<std::uint32_t> SparseAffinity::edge_counts() const {
  std::vector<std::uint32_t> c(n, 0);
  for (const auto& e : edges) {
    ++c[e.i];
    ++c[e.j];
  }
  return c;
}

void SparseAffinity::validate() const {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    require(e.i < e.j, ErrorCode::kPrecondition, "affinity edge must satisfy i < j (no self-loops)");
    require(e.j < n, ErrorCode::kPrecondition, "affinity edge endpoint out of range");
    require(e.weight > 0 && std::isfinite(e.weight), ErrorCode::kPrecondition, "affinity weight must be positive");
    if (k) {
      const auto& p = edges[k - 1];
      require(std::tie(p.i, p.j) < std::tie(e.i, e.j), ErrorCode::kPrecondition,
              "affinity edges must be sorted and unique");
    }
  }
}

void AffinityBuilder::add(std::uint32_t a, std::uint32_t b, double weight) {
  require(a < n_ && b < n_, ErrorCode::kInvalidArgument, "affinity node out of range");
  if (a == b || !(weight > 0)) return;
  raw_.push_back({std::min(a, b), std::max(a, b), weight});
}

SparseAffinity AffinityBuilder::finish() const {
  SparseAffinity out;
  out.n = n_;
  std::vector<Edge> e = raw_;
  std::sort(e.begin(), e.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.i, x.j, y.weight) < std::tie(y.i, y.j, x.weight);  // heaviest first per pair
  });
  for (const auto& x : e)
    if (out.edges.empty() || out.edges.back().i != x.i || out.edges.back().j != x.j) out.edges.push_back(x);
  return out;
}

QueryPlan sample_queries(std::size_t n, double fraction, std::uint64_t seed) {
  require(n >= 1, ErrorCode::kInvalidArgument, "cannot sample queries from an empty corpus");
  require(fraction > 0 && fraction <= 1, ErrorCode::kInvalidArgument, "query fraction must be in (0, 1]");
  auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, 1, n);
  std::vector<ImageId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return {std::move(ids), fraction, seed};
}

SparseAffinity build_affinity(const OpqIvfIndex& index, std::span<const FeatureSet> features, std::uint32_t n,
                              const QueryPlan& plan, const AffinityParams& params, AffinityBuildReport* report,
                              bool collect_debug) {
  FeatureLookup store(features);
  std::vector<std::vector<ImageScore>> results(plan.query_ids.size());
  std::vector<char> missing(plan.query_ids.size(), 0);
  parallel_for(plan.query_ids.size(), [&](std::size_t k) {
    const FeatureSet* q = store.find(plan.query_ids[k]);
    if (!q) {
      missing[k] = 1;
      return;
    }
    results[k] = match_query(index, store, *q, params.search, params.match);
  });
  AffinityBuilder builder(n);
  for (std::size_t k = 0; k < plan.query_ids.size(); ++k) {
    ImageId q = plan.query_ids[k];
    if (missing[k]) {
      if (report) report->warnings.push_back("query " + std::to_string(q) + " has no stored features; skipped");
      continue;
    }
    for (const auto& s : results[k]) {
      builder.add(q, s.image_id, static_cast<double>(s.score));
      if (report && collect_debug) report->debug_records.push_back(debug_record(q, s));
    }
  }
  SparseAffinity a = builder.finish();
  a.seed = plan.seed;
  a.j = params.match.top_j;
  return a;
}

namespace {

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::uint32_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<std::uint32_t> component_labels(const SparseAffinity& a) {
  UnionFind uf(a.n);
  for (const auto& e : a.edges) uf.unite(e.i, e.j);
  std::vector<std::uint32_t> label(a.n), remap(a.n, UINT32_MAX);
  std::uint32_t next = 0;
  for (std::uint32_t v = 0; v < a.n; ++v) {
    auto r = uf.find(v);
    if (remap[r] == UINT32_MAX) remap[r] = next++;
    label[v] = remap[r];
  }
  return label;
}

std::vector<std::size_t> connected_components(const SparseAffinity& a) {
  auto label = component_labels(a);
  std::uint32_t count = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::size_t> sizes(count, 0);
  for (auto l : label) ++sizes[l];
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  return sizes;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

void save_affinity(const std::filesystem::path& path, const SparseAffinity& a) {
  a.validate();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << a.n << '\t' << a.edges.size() << '\t' << a.seed << '\t' << a.j << '\n';
  for (const auto& e : a.edges) out << e.i << '\t' << e.j << '\t' << format_double(e.weight) << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

SparseAffinity load_affinity(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "affinity file not found: " + path.string());
  SparseAffinity a;
  std::size_t m = 0;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat, "empty affinity file");
  {
    std::istringstream hs(line);
    require(static_cast<bool>(hs >> a.n >> m >> a.seed >> a.j), ErrorCode::kFormat, "bad affinity header");
  }
  a.edges.reserve(m);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Edge e;
    std::string w;
    require(static_cast<bool>(ls >> e.i >> e.j >> w), ErrorCode::kFormat, "bad affinity triplet");
    auto r = std::from_chars(w.data(), w.data() + w.size(), e.weight);
    require(r.ec == std::errc(), ErrorCode::kFormat, "bad affinity weight");
    a.edges.push_back(e);
  }
  require(a.edges.size() == m, ErrorCode::kFormat, "affinity edge count does not match header");
  a.validate();
  return a;
}

}  // namespace mgd
