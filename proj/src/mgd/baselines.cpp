#include "mgd/baselines.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mgd/binio.hpp"
#include "mgd/csv.hpp"
#include "mgd/error.hpp"
#include "mgd/parallel.hpp"

namespace mgd {
namespace {

constexpr int kHashSide = 32;

const std::array<double, kHashSide * kHashSide>& dct_basis() {
  static const auto basis = [] {
    std::array<double, kHashSide * kHashSide> b{};
    for (int u = 0; u < kHashSide; ++u)
      for (int x = 0; x < kHashSide; ++x)
        b[static_cast<std::size_t>(u * kHashSide + x)] =
            std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * kHashSide));
    return b;
  }();
  return basis;
}

}  // namespace

std::uint64_t phash64(const GrayImage& gray) {
  require(!gray.empty(), ErrorCode::kInvalidArgument, "cannot hash an empty image");
  GrayImage small = resize_area(gray, kHashSide, kHashSide);
  std::array<double, kHashSide * kHashSide> v{};
  double mean = 0;
  for (std::size_t i = 0; i < v.size(); ++i) mean += small.pixels[i];
  mean /= static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = small.pixels[i] - mean;

  // Separable DCT-II restricted to the frequencies we keep. Scale factors
  // are omitted: they are constant over (1..8, 1..8) and cannot move the median.
  const auto& b = dct_basis();
  std::array<double, 8 * kHashSide> rows{};  // [u][x]
  for (int u = 1; u <= 8; ++u)
    for (int x = 0; x < kHashSide; ++x) {
      double acc = 0;
      for (int y = 0; y < kHashSide; ++y) acc += b[static_cast<std::size_t>(u * kHashSide + y)] * v[static_cast<std::size_t>(y * kHashSide + x)];
      rows[static_cast<std::size_t>((u - 1) * kHashSide + x)] = acc;
    }
  std::array<double, 64> coef{};
  for (int u = 0; u < 8; ++u)
    for (int w = 1; w <= 8; ++w) {
      double acc = 0;
      for (int x = 0; x < kHashSide; ++x)
        acc += b[static_cast<std::size_t>(w * kHashSide + x)] * rows[static_cast<std::size_t>(u * kHashSide + x)];
      coef[static_cast<std::size_t>(u * 8 + w - 1)] = acc;
    }
  auto sorted = coef;
  std::sort(sorted.begin(), sorted.end());
  double median = 0.5 * (sorted[31] + sorted[32]);
  std::uint64_t h = 0;
  for (int i = 0; i < 64; ++i)
    if (coef[static_cast<std::size_t>(i)] > median) h |= std::uint64_t{1} << (63 - i);
  return h;
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

std::vector<std::uint64_t> hash_corpus(const CorpusSnapshot& snapshot) {
  std::vector<std::uint64_t> out(snapshot.size());
  parallel_for(snapshot.size(), [&](std::size_t i) {
    auto img = decode_gray(snapshot.records[i].path);
    require(img.has_value(), ErrorCode::kIo, "cannot decode " + snapshot.records[i].path.string());
    out[i] = phash64(*img);
  });
  return out;
}

namespace {

void for_each_within(std::uint16_t center, int radius, const std::function<void(std::uint16_t)>& visit) {
  // Enumerates all 16-bit values within the given Hamming radius.
  std::function<void(std::uint16_t, int, int)> rec = [&](std::uint16_t v, int start, int left) {
    visit(v);
    if (left == 0) return;
    for (int bit = start; bit < 16; ++bit) rec(static_cast<std::uint16_t>(v ^ (1u << bit)), bit + 1, left - 1);
  };
  rec(center, 0, std::min(radius, 16));
}

}  // namespace

SparseAffinity affinity_from_hashes(const std::vector<std::uint64_t>& hashes, int max_distance) {
  require(max_distance >= 0 && max_distance <= 64, ErrorCode::kInvalidArgument, "max_distance must be in [0, 64]");
  const auto n = static_cast<std::uint32_t>(hashes.size());
  AffinityBuilder builder(n);
  // Pigeonhole: a pair within distance d agrees to within floor(d/4) on at
  // least one of the four 16-bit blocks.
  const int radius = max_distance / 4;
  std::array<std::vector<std::vector<std::uint32_t>>, 4> tables;
  for (int blk = 0; blk < 4; ++blk) {
    tables[static_cast<std::size_t>(blk)].resize(1u << 16);
    for (std::uint32_t i = 0; i < n; ++i)
      tables[static_cast<std::size_t>(blk)][(hashes[i] >> (16 * blk)) & 0xffff].push_back(i);
  }
  std::vector<std::uint32_t> cand;
  for (std::uint32_t i = 0; i < n; ++i) {
    cand.clear();
    for (int blk = 0; blk < 4; ++blk) {
      auto key = static_cast<std::uint16_t>((hashes[i] >> (16 * blk)) & 0xffff);
      for_each_within(key, radius, [&](std::uint16_t probe) {
        for (auto j : tables[static_cast<std::size_t>(blk)][probe])
          if (j > i) cand.push_back(j);
      });
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (auto j : cand) {
      int d = hamming(hashes[i], hashes[j]);
      if (d <= max_distance) builder.add(i, j, (64.0 - d) / 64.0);
    }
  }
  return builder.finish();
}

void save_hashes(const std::filesystem::path& path, const std::vector<std::uint64_t>& hashes) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "image_id,hash_hex\n";
  char buf[17];
  for (std::size_t i = 0; i < hashes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hashes[i]));
    out << i << ',' << buf << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<std::uint64_t> load_hashes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  std::vector<std::string> f;
  require(csv::read_row(in, f) && f.size() == 2 && f[0] == "image_id", ErrorCode::kFormat,
          path.string() + ": expected header image_id,hash_hex");
  std::vector<std::uint64_t> out;
  while (csv::read_row(in, f)) {
    if (f.size() == 1 && f[0].empty()) continue;
    require(f.size() == 2 && f[1].size() == 16, ErrorCode::kFormat, path.string() + ": malformed row");
    try {
      require(std::stoul(f[0]) == out.size(), ErrorCode::kFormat, path.string() + ": ids must be dense and ordered");
      out.push_back(std::stoull(f[1], nullptr, 16));
    } catch (const std::logic_error&) {
      fail(ErrorCode::kFormat, path.string() + ": malformed row");
    }
  }
  return out;
}

namespace {
constexpr std::uint16_t kEmbeddingVersion = 1;
}

std::vector<GlobalEmbedding> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic("MGDE");
  auto version = r.get<std::uint16_t>();
  require(version == kEmbeddingVersion, ErrorCode::kFormat,
          path.string() + ": unsupported version " + std::to_string(version));
  auto count = r.get<std::uint32_t>();
  auto dim = r.get<std::uint32_t>();
  require(dim >= 1, ErrorCode::kFormat, path.string() + ": zero dimension");
  std::vector<GlobalEmbedding> out(count);
  for (auto& e : out) {
    e.image_id = r.get<std::uint32_t>();
    e.vector.resize(dim);
    r.get_span(std::span<float>(e.vector));
    double norm = 0;
    for (float v : e.vector) {
      require(std::isfinite(v), ErrorCode::kFormat,
              path.string() + ": non-finite value for image " + std::to_string(e.image_id));
      norm += static_cast<double>(v) * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (float& v : e.vector) v = static_cast<float>(v / norm);
  }
  require(r.at_end(), ErrorCode::kFormat, path.string() + ": trailing bytes");
  return out;
}

void save_embeddings(const std::filesystem::path& path, const std::vector<GlobalEmbedding>& embeddings) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  std::uint32_t dim = embeddings.empty() ? 1 : static_cast<std::uint32_t>(embeddings.front().vector.size());
  binio::Writer w(out);
  w.put_magic("MGDE");
  w.put(kEmbeddingVersion);
  w.put(static_cast<std::uint32_t>(embeddings.size()));
  w.put(dim);
  for (const auto& e : embeddings) {
    require(e.vector.size() == dim, ErrorCode::kInvalidArgument, "embeddings must share one dimension");
    w.put(e.image_id);
    w.put_span(std::span<const float>(e.vector));
  }
  w.check();
}

SparseAffinity affinity_from_embeddings(const std::vector<GlobalEmbedding>& embeddings, std::uint32_t n, int knn) {
  require(knn >= 1, ErrorCode::kInvalidArgument, "knn must be positive");
  std::vector<const GlobalEmbedding*> by_id(n, nullptr);
  std::vector<std::uint32_t> duplicate;
  std::size_t dim = embeddings.empty() ? 0 : embeddings.front().vector.size();
  for (const auto& e : embeddings) {
    require(e.vector.size() == dim, ErrorCode::kFormat, "embeddings must share one dimension");
    if (e.image_id >= n) continue;
    if (by_id[e.image_id]) duplicate.push_back(e.image_id);
    by_id[e.image_id] = &e;
  }
  std::vector<std::uint32_t> missing;
  for (std::uint32_t i = 0; i < n; ++i)
    if (!by_id[i]) missing.push_back(i);
  auto join = [](const std::vector<std::uint32_t>& ids) {
    std::ostringstream s;
    for (std::size_t i = 0; i < ids.size(); ++i) s << (i ? "," : "") << ids[i];
    return s.str();
  };
  require(missing.empty(), ErrorCode::kPrecondition, "embeddings missing for image ids: " + join(missing));
  require(duplicate.empty(), ErrorCode::kFormat, "duplicate embeddings for image ids: " + join(duplicate));

  RowMatrix<double> x(n, static_cast<Eigen::Index>(dim));
  for (std::uint32_t i = 0; i < n; ++i) {
    x.row(i) = Eigen::Map<const Eigen::RowVectorXf>(by_id[i]->vector.data(), static_cast<Eigen::Index>(dim))
                   .cast<double>();
    double norm = x.row(i).norm();
    if (norm > 0) x.row(i) /= norm;
  }

  const int k = std::min<int>(knn, static_cast<int>(n) - 1);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> nbrs(n);
  constexpr Eigen::Index kBlock = 1024;
  const Eigen::Index blocks = (static_cast<Eigen::Index>(n) + kBlock - 1) / kBlock;
  parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t bi) {
    Eigen::Index b = static_cast<Eigen::Index>(bi) * kBlock;
    Eigen::Index rows = std::min<Eigen::Index>(kBlock, n - b);
    RowMatrix<double> sim = x.middleRows(b, rows) * x.transpose();
    std::vector<std::uint32_t> order(n);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto self = static_cast<std::uint32_t>(b + r);
      order.clear();
      for (std::uint32_t j = 0; j < n; ++j)
        if (j != self) order.push_back(j);
      auto better = [&](std::uint32_t p, std::uint32_t q) {
        return sim(r, p) > sim(r, q) || (sim(r, p) == sim(r, q) && p < q);
      };
      if (k > 0) std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
      auto& out = nbrs[self];
      for (int t = 0; t < k; ++t) out.push_back({order[static_cast<std::size_t>(t)], sim(r, order[static_cast<std::size_t>(t)])});
    }
  });
  AffinityBuilder builder(n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (auto [j, c] : nbrs[i]) builder.add(i, j, std::clamp(c, 0.0, 1.0));
  return builder.finish();
}

}  // namespace mgd
