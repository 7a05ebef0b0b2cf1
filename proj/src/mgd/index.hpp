#pragma once

// Inverted-file index over OPQ-rotated descriptors with 8-byte product
// quantization codes on the coarse residuals.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mgd/corpus.hpp"
#include "mgd/kmeans.hpp"
#include "mgd/surf.hpp"

namespace mgd {

inline constexpr int kSubspaces = 8;
inline constexpr int kSubDim = kDescriptorDim / kSubspaces;
inline constexpr int kCodebookSize = 256;
inline constexpr int kDefaultCoarseK = 2048;

using PqCode = std::array<std::uint8_t, kSubspaces>;

struct OpqModel {
  RowMatrix<float> rotation;   // 64 x 64, applied as x * rotation
  RowMatrix<float> codebooks;  // (8 * 256) x 8; rows [m*256, (m+1)*256) belong to subspace m

  RowMatrix<float> rotate(const RowMatrix<float>& x) const { return x * rotation; }
  PqCode encode(std::span<const float> rotated) const;
  void decode(const PqCode& code, std::span<float> out) const;
};

struct OpqTrainResult {
  OpqModel model;
  // Mean squared reconstruction error per vector after each alternation.
  std::vector<double> error_history;
};

// Alternates codebook refinement with an orthogonal Procrustes rotation
// update. Needs at least 256 training rows.
OpqTrainResult train_opq(const RowMatrix<float>& sample, int iterations = 20, std::uint64_t seed = 0);

// Same alternation with the rotation pinned to the identity (plain PQ).
OpqTrainResult train_pq(const RowMatrix<float>& sample, int iterations = 20, std::uint64_t seed = 0);

double reconstruction_error(const OpqModel& model, const RowMatrix<float>& data);

struct IvfEntry {
  ImageId image_id = 0;
  std::uint32_t keypoint = 0;
  PqCode code{};

  bool operator==(const IvfEntry&) const = default;
};

struct IndexBuildParams {
  int coarse_k = kDefaultCoarseK;
  int coarse_iterations = 25;
  int residual_iterations = 20;
  std::size_t train_sample = 200000;
  std::uint64_t seed = 0;
};

class OpqIvfIndex {
 public:
  OpqModel opq;
  RowMatrix<float> coarse;  // coarse_k x 64, in rotated space
  std::vector<std::vector<IvfEntry>> lists;

  int coarse_k() const { return static_cast<int>(coarse.rows()); }
  std::size_t total_entries() const;

  // Recomputes the per-list ADC tables; call after mutating coarse/opq.
  void prepare();

  // Squared ADC distance from a rotated query to an entry of `list`.
  float adc_distance(std::span<const float> rotated_query, int list, const PqCode& code) const;
  // Decoded vector (rotated space) of an entry of `list`.
  std::vector<float> reconstruct(int list, const PqCode& code) const;

  // |y|^2 + 2<c_list, y> per (subspace, codeword).
  std::span<const float> list_terms(int list) const {
    return {terms_.data() + static_cast<std::size_t>(list) * kSubspaces * kCodebookSize,
            static_cast<std::size_t>(kSubspaces) * kCodebookSize};
  }

 private:
  std::vector<float> terms_;
};

struct DescriptorMatch {
  std::uint32_t query_ordinal = 0;
  ImageId match_image_id = 0;
  std::uint32_t match_keypoint_ordinal = 0;
  float approx_distance = 0;  // Euclidean
};

// Samples up to `limit` descriptor rows uniformly (all when fewer).
RowMatrix<float> sample_descriptors(std::span<const FeatureSet> features, std::size_t limit, std::uint64_t seed);

// Coarse k-means, residual PQ codebooks and encoding of every descriptor.
// The rotation comes from `opq`; its codebooks are retrained on residuals.
OpqIvfIndex build_index(std::span<const FeatureSet> features, const OpqModel& opq, const IndexBuildParams& params);

// Samples, trains OPQ, then builds.
OpqIvfIndex train_and_build(std::span<const FeatureSet> features, const IndexBuildParams& params,
                            int opq_iterations = 20);

struct SearchParams {
  int knn = 20;
  int nprobe = 32;
  std::optional<ImageId> exclude_image;
};

// knn approximate neighbours per query row, nearest first.
std::vector<std::vector<DescriptorMatch>> search(const OpqIvfIndex& index, const RowMatrix<float>& queries,
                                                 const SearchParams& params);

RowMatrix<float> descriptor_matrix(const FeatureSet& features);

void save_index(const std::filesystem::path& path, const OpqIvfIndex& index);
OpqIvfIndex load_index(const std::filesystem::path& path);

}  // namespace mgd
