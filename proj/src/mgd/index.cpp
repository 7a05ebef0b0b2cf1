#include "mgd/index.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <tuple>

#include "mgd/binio.hpp"
#include "mgd/error.hpp"
#include "mgd/parallel.hpp"

namespace mgd {
namespace {

constexpr std::uint16_t kIndexVersion = 1;
constexpr int kInitialLloyd = 10;

RowMatrix<float> subspace(const RowMatrix<float>& x, int m) { return x.middleCols(m * kSubDim, kSubDim); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

OpqTrainResult train_quantizer(const RowMatrix<float>& x, int iterations, std::uint64_t seed, bool rotate) {
  require(x.cols() == kDescriptorDim, ErrorCode::kInvalidArgument, "training vectors must be 64-d");
  require(x.rows() >= kCodebookSize, ErrorCode::kInsufficientData,
          "insufficient training sample: need at least 256 vectors, got " + std::to_string(x.rows()));
  require(iterations >= 1, ErrorCode::kInvalidArgument, "iterations must be positive");
  require(x.allFinite(), ErrorCode::kInvalidArgument, "training sample contains non-finite values");

  OpqTrainResult out;
  OpqModel& model = out.model;
  model.rotation = RowMatrix<float>::Identity(kDescriptorDim, kDescriptorDim);
  model.codebooks.resize(kSubspaces * kCodebookSize, kSubDim);
  const Eigen::MatrixXd xd = x.cast<double>();

  RowMatrix<float> y = x;
  for (int m = 0; m < kSubspaces; ++m) {
    RowMatrix<float> sub = subspace(y, m);
    auto init = kmeans_plusplus(sub, kCodebookSize, derive_seed(seed, static_cast<std::uint64_t>(m)));
    auto res = lloyd(sub, std::move(init), kInitialLloyd);
    model.codebooks.middleRows(m * kCodebookSize, kCodebookSize) = res.centroids;
  }

  RowMatrix<float> recon(x.rows(), kDescriptorDim);
  for (int it = 0; it < iterations; ++it) {
    y = model.rotate(x);
    for (int m = 0; m < kSubspaces; ++m) {
      RowMatrix<float> sub = subspace(y, m);
      RowMatrix<float> book = model.codebooks.middleRows(m * kCodebookSize, kCodebookSize);
      auto res = lloyd(sub, std::move(book), 1);
      model.codebooks.middleRows(m * kCodebookSize, kCodebookSize) = res.centroids;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        recon.block(i, m * kSubDim, 1, kSubDim) = res.centroids.row(res.assignment[static_cast<std::size_t>(i)]);
    }
    if (rotate) {
      Eigen::MatrixXd cross = xd.transpose() * recon.cast<double>();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
      model.rotation = (svd.matrixU() * svd.matrixV().transpose()).cast<float>();
    }
    double err = (xd * model.rotation.cast<double>() - recon.cast<double>()).squaredNorm() / static_cast<double>(x.rows());
    out.error_history.push_back(err);
  }
  return out;
}

}  // namespace

PqCode OpqModel::encode(std::span<const float> rotated) const {
  PqCode code{};
  for (int m = 0; m < kSubspaces; ++m) {
    float best = std::numeric_limits<float>::infinity();
    int arg = 0;
    for (int j = 0; j < kCodebookSize; ++j) {
      float d = 0;
      for (int t = 0; t < kSubDim; ++t) {
        float diff = rotated[static_cast<std::size_t>(m * kSubDim + t)] - codebooks(m * kCodebookSize + j, t);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    code[static_cast<std::size_t>(m)] = static_cast<std::uint8_t>(arg);
  }
  return code;
}

void OpqModel::decode(const PqCode& code, std::span<float> out) const {
  for (int m = 0; m < kSubspaces; ++m)
    for (int t = 0; t < kSubDim; ++t)
      out[static_cast<std::size_t>(m * kSubDim + t)] = codebooks(m * kCodebookSize + code[static_cast<std::size_t>(m)], t);
}

OpqTrainResult train_opq(const RowMatrix<float>& sample, int iterations, std::uint64_t seed) {
  return train_quantizer(sample, iterations, seed, true);
}

OpqTrainResult train_pq(const RowMatrix<float>& sample, int iterations, std::uint64_t seed) {
  return train_quantizer(sample, iterations, seed, false);
}

double reconstruction_error(const OpqModel& model, const RowMatrix<float>& data) {
  RowMatrix<float> y = model.rotate(data);
  double total = 0;
  std::vector<float> rec(kDescriptorDim);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    std::span<const float> row(y.row(i).data(), kDescriptorDim);
    model.decode(model.encode(row), rec);
    for (int t = 0; t < kDescriptorDim; ++t) total += std::pow(static_cast<double>(row[static_cast<std::size_t>(t)]) - rec[static_cast<std::size_t>(t)], 2);
  }
  return y.rows() ? total / static_cast<double>(y.rows()) : 0.0;
}

std::size_t OpqIvfIndex::total_entries() const {
  std::size_t n = 0;
  for (const auto& l : lists) n += l.size();
  return n;
}

void OpqIvfIndex::prepare() {
  const int k = coarse_k();
  terms_.assign(static_cast<std::size_t>(k) * kSubspaces * kCodebookSize, 0.0f);
  for (int l = 0; l < k; ++l) {
    float* t = terms_.data() + static_cast<std::size_t>(l) * kSubspaces * kCodebookSize;
    for (int m = 0; m < kSubspaces; ++m) {
      for (int j = 0; j < kCodebookSize; ++j) {
        float yy = 0, cy = 0;
        for (int d = 0; d < kSubDim; ++d) {
          float y = opq.codebooks(m * kCodebookSize + j, d);
          yy += y * y;
          cy += coarse(l, m * kSubDim + d) * y;
        }
        t[m * kCodebookSize + j] = yy + 2 * cy;
      }
    }
  }
}

float OpqIvfIndex::adc_distance(std::span<const float> q, int list, const PqCode& code) const {
  float dc = 0;
  for (int d = 0; d < kDescriptorDim; ++d) {
    float diff = q[static_cast<std::size_t>(d)] - coarse(list, d);
    dc += diff * diff;
  }
  auto terms = list_terms(list);
  float acc = dc;
  for (int m = 0; m < kSubspaces; ++m) {
    int j = code[static_cast<std::size_t>(m)];
    float qy = 0;
    for (int d = 0; d < kSubDim; ++d) qy += q[static_cast<std::size_t>(m * kSubDim + d)] * opq.codebooks(m * kCodebookSize + j, d);
    acc += terms[static_cast<std::size_t>(m * kCodebookSize + j)] - 2 * qy;
  }
  return std::max(acc, 0.0f);
}

std::vector<float> OpqIvfIndex::reconstruct(int list, const PqCode& code) const {
  std::vector<float> v(kDescriptorDim);
  opq.decode(code, v);
  for (int d = 0; d < kDescriptorDim; ++d) v[static_cast<std::size_t>(d)] += coarse(list, d);
  return v;
}

RowMatrix<float> descriptor_matrix(const FeatureSet& features) {
  RowMatrix<float> m(static_cast<Eigen::Index>(features.size()), kDescriptorDim);
  if (features.size()) std::copy(features.descriptors.begin(), features.descriptors.end(), m.data());
  return m;
}

RowMatrix<float> sample_descriptors(std::span<const FeatureSet> features, std::size_t limit, std::uint64_t seed) {
  std::size_t total = 0;
  for (const auto& f : features) total += f.size();
  std::vector<std::pair<std::uint32_t, std::uint32_t>> picks;
  picks.reserve(std::min(total, limit));
  if (total <= limit) {
    for (std::size_t s = 0; s < features.size(); ++s)
      for (std::size_t k = 0; k < features[s].size(); ++k) picks.emplace_back(s, k);
  } else {
    std::vector<std::size_t> flat(total);
    std::iota(flat.begin(), flat.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < limit; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, total - 1);
      std::swap(flat[i], flat[pick(rng)]);
    }
    flat.resize(limit);
    std::sort(flat.begin(), flat.end());
    std::size_t s = 0, base = 0;
    for (std::size_t f : flat) {
      while (f >= base + features[s].size()) base += features[s++].size();
      picks.emplace_back(s, f - base);
    }
  }
  RowMatrix<float> out(static_cast<Eigen::Index>(picks.size()), kDescriptorDim);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    auto d = features[picks[i].first].descriptor(picks[i].second);
    std::copy(d.begin(), d.end(), out.row(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

OpqIvfIndex build_index(std::span<const FeatureSet> features, const OpqModel& opq, const IndexBuildParams& params) {
  require(params.coarse_k >= 1, ErrorCode::kInvalidArgument, "coarse_k must be positive");
  std::size_t total = 0;
  for (const auto& f : features) total += f.size();
  require(total >= static_cast<std::size_t>(params.coarse_k), ErrorCode::kInsufficientData,
          "only " + std::to_string(total) + " descriptors for coarse_k = " + std::to_string(params.coarse_k) +
              "; lower coarse_k");
  require(total >= static_cast<std::size_t>(kCodebookSize), ErrorCode::kInsufficientData,
          "insufficient training sample: need at least 256 descriptors");

  OpqIvfIndex index;
  index.opq = opq;
  RowMatrix<float> sample = opq.rotate(sample_descriptors(features, params.train_sample, params.seed));

  KMeansParams kp;
  kp.k = params.coarse_k;
  kp.max_iterations = params.coarse_iterations;
  kp.seeding_sample = std::max<std::size_t>(16 * static_cast<std::size_t>(params.coarse_k), 20000);
  kp.seed = derive_seed(params.seed, 0xC0A5E);
  index.coarse = kmeans(sample, kp).centroids;

  // Residual codebooks.
  std::vector<std::int32_t> assign;
  std::vector<float> dist;
  assign_nearest(sample, index.coarse, assign, dist);
  RowMatrix<float> residual = sample;
  for (Eigen::Index i = 0; i < residual.rows(); ++i) residual.row(i) -= index.coarse.row(assign[static_cast<std::size_t>(i)]);
  for (int m = 0; m < kSubspaces; ++m) {
    KMeansParams pp;
    pp.k = kCodebookSize;
    pp.max_iterations = params.residual_iterations;
    pp.seed = derive_seed(params.seed, 0x5B0 + static_cast<std::uint64_t>(m));
    index.opq.codebooks.middleRows(m * kCodebookSize, kCodebookSize) = kmeans(RowMatrix<float>(subspace(residual, m)), pp).centroids;
  }

  struct Encoded {
    std::vector<std::int32_t> list;
    std::vector<IvfEntry> entries;
  };
  std::vector<Encoded> encoded(features.size());
  parallel_for(features.size(), [&](std::size_t s) {
    const auto& fs = features[s];
    if (fs.size() == 0) return;
    RowMatrix<float> y = index.opq.rotate(descriptor_matrix(fs));
    std::vector<float> d;
    assign_nearest(y, index.coarse, encoded[s].list, d);
    std::vector<float> res(kDescriptorDim);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      int l = encoded[s].list[static_cast<std::size_t>(i)];
      for (int t = 0; t < kDescriptorDim; ++t) res[static_cast<std::size_t>(t)] = y(i, t) - index.coarse(l, t);
      encoded[s].entries.push_back({fs.image_id, static_cast<std::uint32_t>(i), index.opq.encode(res)});
    }
  });
  index.lists.assign(static_cast<std::size_t>(params.coarse_k), {});
  for (auto& e : encoded)
    for (std::size_t i = 0; i < e.entries.size(); ++i) index.lists[static_cast<std::size_t>(e.list[i])].push_back(e.entries[i]);
  index.prepare();
  return index;
}

OpqIvfIndex train_and_build(std::span<const FeatureSet> features, const IndexBuildParams& params, int opq_iterations) {
  RowMatrix<float> sample = sample_descriptors(features, params.train_sample, params.seed);
  auto opq = train_opq(sample, opq_iterations, derive_seed(params.seed, 0x0B9));
  return build_index(features, opq.model, params);
}

std::vector<std::vector<DescriptorMatch>> search(const OpqIvfIndex& index, const RowMatrix<float>& queries,
                                                 const SearchParams& params) {
  require(params.knn >= 1, ErrorCode::kInvalidArgument, "knn must be >= 1");
  require(params.nprobe >= 1 && params.nprobe <= std::max(1, index.coarse_k()), ErrorCode::kInvalidArgument,
          "nprobe must be in [1, coarse_k]");
  require(queries.rows() == 0 || queries.cols() == kDescriptorDim, ErrorCode::kInvalidArgument, "queries must be 64-d");
  std::vector<std::vector<DescriptorMatch>> out(static_cast<std::size_t>(queries.rows()));
  if (queries.rows() == 0 || index.total_entries() == 0) return out;

  RowMatrix<float> q = index.opq.rotate(queries);
  std::vector<std::int32_t> probe;
  std::vector<float> probe_dist;
  const int nprobe = params.nprobe;
  nearest_n(q, index.coarse, nprobe, probe, probe_dist);

  // <q_m, y_mj> for every query, subspace and codeword.
  RowMatrix<float> qy(q.rows(), kSubspaces * kCodebookSize);
  for (int m = 0; m < kSubspaces; ++m)
    qy.middleCols(m * kCodebookSize, kCodebookSize).noalias() =
        q.middleCols(m * kSubDim, kSubDim) * index.opq.codebooks.middleRows(m * kCodebookSize, kCodebookSize).transpose();

  constexpr std::size_t kChunk = 64;
  const std::size_t nq = static_cast<std::size_t>(q.rows());
  parallel_for((nq + kChunk - 1) / kChunk, [&](std::size_t chunk) {
    using Cand = std::tuple<float, ImageId, std::uint32_t>;
    std::vector<float> table(kSubspaces * kCodebookSize);
    for (std::size_t i = chunk * kChunk; i < std::min(nq, (chunk + 1) * kChunk); ++i) {
      std::priority_queue<Cand> heap;  // max-heap: worst candidate on top
      const float* qrow = qy.row(static_cast<Eigen::Index>(i)).data();
      for (int p = 0; p < nprobe; ++p) {
        const std::size_t slot = i * static_cast<std::size_t>(nprobe) + static_cast<std::size_t>(p);
        const int l = probe[slot];
        const auto& list = index.lists[static_cast<std::size_t>(l)];
        if (list.empty()) continue;
        const float dc = probe_dist[slot];
        auto terms = index.list_terms(l);
        for (std::size_t t = 0; t < table.size(); ++t) table[t] = terms[t] - 2 * qrow[t];
        for (const auto& e : list) {
          if (params.exclude_image && e.image_id == *params.exclude_image) continue;
          float d = dc;
          for (int m = 0; m < kSubspaces; ++m) d += table[static_cast<std::size_t>(m * kCodebookSize + e.code[static_cast<std::size_t>(m)])];
          Cand c{d, e.image_id, e.keypoint};
          if (heap.size() < static_cast<std::size_t>(params.knn)) {
            heap.push(c);
          } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
          }
        }
      }
      auto& res = out[i];
      res.resize(heap.size());
      for (std::size_t r = heap.size(); r-- > 0;) {
        auto [d, img, kp] = heap.top();
        heap.pop();
        res[r] = {static_cast<std::uint32_t>(i), img, kp, std::sqrt(std::max(d, 0.0f))};
      }
    }
  });
  return out;
}

void save_index(const std::filesystem::path& path, const OpqIvfIndex& index) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  binio::Writer w(out);
  w.put_magic("MGDI");
  w.put<std::uint16_t>(kIndexVersion);
  w.put<std::uint32_t>(kDescriptorDim);
  w.put<std::uint32_t>(kSubspaces);
  w.put<std::uint32_t>(kCodebookSize);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.coarse_k()));
  w.put_span<float>({index.opq.rotation.data(), static_cast<std::size_t>(index.opq.rotation.size())});
  w.put_span<float>({index.opq.codebooks.data(), static_cast<std::size_t>(index.opq.codebooks.size())});
  w.put_span<float>({index.coarse.data(), static_cast<std::size_t>(index.coarse.size())});
  for (const auto& l : index.lists) w.put<std::uint64_t>(l.size());
  for (const auto& l : index.lists) {
    for (const auto& e : l) {
      w.put<std::uint32_t>(e.image_id);
      w.put<std::uint32_t>(e.keypoint);
      w.put_span<std::uint8_t>(e.code);
    }
  }
  w.check();
}

OpqIvfIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "index not found: " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic("MGDI");
  require(r.get<std::uint16_t>() == kIndexVersion, ErrorCode::kFormat, "unsupported index version");
  require(r.get<std::uint32_t>() == kDescriptorDim && r.get<std::uint32_t>() == kSubspaces &&
              r.get<std::uint32_t>() == kCodebookSize,
          ErrorCode::kFormat, "index layout does not match this build");
  auto k = r.get<std::uint32_t>();
  require(k >= 1 && k <= (1u << 24), ErrorCode::kFormat, "implausible coarse_k");
  OpqIvfIndex index;
  index.opq.rotation.resize(kDescriptorDim, kDescriptorDim);
  index.opq.codebooks.resize(kSubspaces * kCodebookSize, kSubDim);
  index.coarse.resize(k, kDescriptorDim);
  r.get_span<float>({index.opq.rotation.data(), static_cast<std::size_t>(index.opq.rotation.size())});
  r.get_span<float>({index.opq.codebooks.data(), static_cast<std::size_t>(index.opq.codebooks.size())});
  r.get_span<float>({index.coarse.data(), static_cast<std::size_t>(index.coarse.size())});
  std::vector<std::uint64_t> counts(k);
  for (auto& c : counts) c = r.get<std::uint64_t>();
  index.lists.resize(k);
  for (std::size_t l = 0; l < k; ++l) {
    index.lists[l].resize(counts[l]);
    for (auto& e : index.lists[l]) {
      e.image_id = r.get<std::uint32_t>();
      e.keypoint = r.get<std::uint32_t>();
      r.get_span<std::uint8_t>(e.code);
    }
  }
  require(r.at_end(), ErrorCode::kFormat, "trailing bytes in index file");
  index.prepare();
  return index;
}

}  // namespace mgd
