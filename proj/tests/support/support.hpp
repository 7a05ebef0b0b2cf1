#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mgd/affinity.hpp"
#include "mgd/corpus.hpp"
#include "mgd/spectral.hpp"

namespace mgd::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mgd");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& p, const std::string& text);
std::string read_file(const std::filesystem::path& p);

// Clustering quality against ground truth. Every label vector has one entry
// per item; the overflow id is just another cluster here.
double purity(const std::vector<int>& truth, const std::vector<std::uint32_t>& clusters);
double adjusted_rand_index(const std::vector<int>& truth, const std::vector<std::uint32_t>& clusters);
double largest_share(const std::vector<std::uint32_t>& clusters);

// Genre label per snapshot record, matched on file name against labels.csv.
std::vector<int> genre_labels(const CorpusSnapshot& snapshot, const std::filesystem::path& labels_csv);

// Erdos-Renyi graph with integer weights in [1, max_weight].
SparseAffinity random_graph(std::uint32_t n, double p, std::mt19937_64& rng, int max_weight = 20);
SparseAffinity clique_pair(std::uint32_t a, std::uint32_t b, double weight = 1.0);
SparseAffinity relabel(const SparseAffinity& g, const std::vector<std::uint32_t>& perm);

// Ascending eigenvalues of I - D^-1/2 A D^-1/2 from a dense solve; every
// node must have positive degree.
std::vector<double> dense_laplacian_spectrum(const SparseAffinity& g);

// True when the labelings differ only by a one-to-one renaming of ids.
bool same_partition(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

// Brute-force nearest row of `base` for each row of `queries`.
std::vector<std::size_t> exact_nearest(const RowMatrix<float>& base, const RowMatrix<float>& queries);

}  // namespace mgd::test
