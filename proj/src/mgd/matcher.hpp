#pragma once

// Turns raw descriptor matches into per-image affinity scores: ratio-tested
// correspondences grouped by target image, verified with a 4-dof similarity
// RANSAC. The score of a pair is its inlier count.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgd/index.hpp"
#include "mgd/surf.hpp"

namespace mgd {

struct Correspondence {
  Keypoint query_keypoint;
  Keypoint match_keypoint;
  float descriptor_distance = 0;
  std::uint32_t query_ordinal = 0;
  std::uint32_t match_ordinal = 0;
};

struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;

  // Maps a query-image point into the matched image.
  void apply(double x, double y, double& ox, double& oy) const;
};

struct ImageScore {
  ImageId image_id = 0;
  int score = 0;
  std::optional<SimilarityTransform> transform;
};

struct MatchParams {
  float ratio = 0.9f;
  int ransac_iterations = 500;
  double inlier_px = 5.0;
  int min_inliers = 4;
  int top_j = 100;
  // Also require each inlier's keypoint scale ratio and orientation change
  // to agree with the model (factor 2, 30 degrees).
  bool keypoint_consistency = true;
  // A verified pair is kept only while the expected number of equally good
  // models from random correspondences stays below this; <= 0 disables.
  double max_false_alarms = 1.0;
  std::uint64_t seed = 0;
};

// image_id -> feature set lookup over a loaded feature store.
class FeatureLookup {
 public:
  explicit FeatureLookup(std::span<const FeatureSet> sets);
  const FeatureSet* find(ImageId id) const;

 private:
  std::span<const FeatureSet> sets_;
  std::vector<std::int64_t> slot_;
};

using CandidateMap = std::map<ImageId, std::vector<Correspondence>>;

// Groups raw matches by target image. For each query keypoint and target
// image, the closest match is kept if it passes the ratio test against the
// next closest match in that image; each target keypoint keeps only its
// closest query keypoint. Throws if any match points back at the query image.
CandidateMap collect_candidates(const FeatureSet& query, std::span<const std::vector<DescriptorMatch>> raw,
                                const FeatureLookup& store, float ratio = 0.9f);

struct RansacResult {
  std::optional<SimilarityTransform> transform;
  int inliers = 0;
  // Hypotheses tried times the chance that uniformly scattered matches give
  // this many inliers to one model.
  double false_alarms = 0;
};

// tests * P[Binomial(n - 2, p) >= k - 2], the two sample points being free.
double expected_false_alarms(std::size_t n, int k, double p, double tests);

RansacResult estimate_similarity_ransac(std::span<const Correspondence> corrs, const MatchParams& params,
                                        std::uint64_t seed);

// Seed for a (query, candidate) pair; independent of correspondence order.
std::uint64_t pair_seed(ImageId query, ImageId candidate, std::uint64_t base);

// RANSAC per candidate; keeps scores >= min_inliers, best first (ties by
// ascending image id), at most top_j.
std::vector<ImageScore> score_images(const FeatureSet& query, const CandidateMap& candidates,
                                     const MatchParams& params);

// search (excluding the query image) + collect + score.
std::vector<ImageScore> match_query(const OpqIvfIndex& index, const FeatureLookup& store, const FeatureSet& query,
                                    const SearchParams& search_params, const MatchParams& match_params);

// One line-delimited debug record: query candidate inliers scale rotation tx ty.
std::string debug_record(ImageId query, const ImageScore& score);

}  // namespace mgd
