#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mgd/affinity.hpp"
#include "mgd/corpus.hpp"
#include "mgd/image.hpp"

namespace mgd {

// 32x32 area resize, DCT-II, the 8x8 block of AC terms at (1..8, 1..8),
// bit set where the coefficient exceeds the block median. Bit 63 holds
// (1,1), row-major.
std::uint64_t phash64(const GrayImage& gray);

int hamming(std::uint64_t a, std::uint64_t b);

// Hashes every snapshot record; undecodable files fail the stage.
std::vector<std::uint64_t> hash_corpus(const CorpusSnapshot& snapshot);

// Edges of weight (64 - d) / 64 for every pair within max_distance, found
// by probing four 16-bit sub-hash tables.
SparseAffinity affinity_from_hashes(const std::vector<std::uint64_t>& hashes, int max_distance = 10);

void save_hashes(const std::filesystem::path& path, const std::vector<std::uint64_t>& hashes);
std::vector<std::uint64_t> load_hashes(const std::filesystem::path& path);

struct GlobalEmbedding {
  ImageId image_id = 0;
  std::vector<float> vector;  // unit length unless the stored vector was zero
};

// MGDE sidecar: "MGDE", u16 version, u32 count, u32 dim, then per image a
// u32 id and dim f32 values.
std::vector<GlobalEmbedding> load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const std::vector<GlobalEmbedding>& embeddings);

// Exact cosine k-NN graph over ids 0..n-1, weight max(cos, 0), symmetrized
// by max. Every id must be present exactly once.
SparseAffinity affinity_from_embeddings(const std::vector<GlobalEmbedding>& embeddings, std::uint32_t n,
                                        int knn = 100);

}  // namespace mgd
