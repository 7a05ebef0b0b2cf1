#include "mgd/matcher.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "mgd/error.hpp"
#include "mgd/parallel.hpp"

namespace mgd {
namespace {

using Complex = std::complex<double>;

constexpr double kMinScale = 1.0 / 16.0;
constexpr double kMaxScale = 16.0;
const double kScaleTolerance = std::log(2.0);
constexpr double kAngleTolerance = std::numbers::pi / 6.0;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2 * std::numbers::pi;
  return std::abs(d);
}

struct Model {
  Complex a;  // scale * e^{i rotation}
  Complex b;  // translation
};

Complex pos(const Keypoint& k) { return {k.x, k.y}; }

bool valid_model(const Model& m) {
  double s = std::abs(m.a);
  return std::isfinite(s) && s > kMinScale && s < kMaxScale && std::isfinite(m.b.real()) && std::isfinite(m.b.imag());
}

bool is_inlier(const Model& m, const Correspondence& c, double tol2, bool consistency) {
  Complex err = m.a * pos(c.query_keypoint) + m.b - pos(c.match_keypoint);
  if (std::norm(err) > tol2) return false;
  if (!consistency) return true;
  double s = std::abs(m.a);
  double ratio = static_cast<double>(c.match_keypoint.scale) / c.query_keypoint.scale;
  if (std::abs(std::log(ratio / s)) > kScaleTolerance) return false;
  double turn = static_cast<double>(c.match_keypoint.orientation) - c.query_keypoint.orientation;
  return angle_diff(turn, std::arg(m.a)) <= kAngleTolerance;
}

int count_inliers(const Model& m, std::span<const Correspondence> corrs, double tol2, bool consistency,
                  std::vector<std::size_t>* which = nullptr) {
  int n = 0;
  if (which) which->clear();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (is_inlier(m, corrs[i], tol2, consistency)) {
      ++n;
      if (which) which->push_back(i);
    }
  }
  return n;
}

std::optional<Model> from_pair(const Correspondence& c1, const Correspondence& c2) {
  Complex dp = pos(c1.query_keypoint) - pos(c2.query_keypoint);
  Complex dm = pos(c1.match_keypoint) - pos(c2.match_keypoint);
  if (std::norm(dp) < 1e-6 || std::norm(dm) < 1e-6) return std::nullopt;
  Model m{dm / dp, {}};
  m.b = pos(c1.match_keypoint) - m.a * pos(c1.query_keypoint);
  if (!valid_model(m)) return std::nullopt;
  return m;
}

std::optional<Model> least_squares(std::span<const Correspondence> corrs, const std::vector<std::size_t>& which) {
  if (which.size() < 2) return std::nullopt;
  Complex pm{0, 0}, mm{0, 0};
  for (auto i : which) {
    pm += pos(corrs[i].query_keypoint);
    mm += pos(corrs[i].match_keypoint);
  }
  pm /= static_cast<double>(which.size());
  mm /= static_cast<double>(which.size());
  Complex num{0, 0};
  double den = 0;
  for (auto i : which) {
    Complex p = pos(corrs[i].query_keypoint) - pm;
    Complex q = pos(corrs[i].match_keypoint) - mm;
    num += q * std::conj(p);
    den += std::norm(p);
  }
  if (den < 1e-9) return std::nullopt;
  Model m{num / den, {}};
  m.b = mm - m.a * pm;
  if (!valid_model(m)) return std::nullopt;
  return m;
}

SimilarityTransform to_transform(const Model& m) {
  return {std::abs(m.a), std::arg(m.a), m.b.real(), m.b.imag()};
}

bool corr_less(const Correspondence& a, const Correspondence& b) {
  auto key = [](const Correspondence& c) {
    return std::make_tuple(c.query_keypoint.x, c.query_keypoint.y, c.match_keypoint.x, c.match_keypoint.y,
                           c.descriptor_distance, c.query_ordinal, c.match_ordinal);
  };
  return key(a) < key(b);
}

// Chance that a random match lands within inlier_px of a prediction, taking
// the spread of the matched keypoints as the target area.
double inlier_probability(std::span<const Correspondence> corrs, double inlier_px) {
  double x0 = corrs[0].match_keypoint.x, x1 = x0, y0 = corrs[0].match_keypoint.y, y1 = y0;
  for (const auto& c : corrs) {
    x0 = std::min<double>(x0, c.match_keypoint.x);
    x1 = std::max<double>(x1, c.match_keypoint.x);
    y0 = std::min<double>(y0, c.match_keypoint.y);
    y1 = std::max<double>(y1, c.match_keypoint.y);
  }
  double disc = std::numbers::pi * inlier_px * inlier_px;
  double area = std::max((x1 - x0) * (y1 - y0), 4 * inlier_px * inlier_px);
  return std::min(1.0, disc / area);
}

}  // namespace

double expected_false_alarms(std::size_t n, int k, double p, double tests) {
  if (n < 2 || k <= 2 || p >= 1) return tests;
  if (p <= 0) return 0;
  const int trials = static_cast<int>(n) - 2;
  const int need = k - 2;
  if (need > trials) return 0;
  // Upper tail summed in log space; stops once terms are negligible past the mode.
  double log_total = -std::numeric_limits<double>::infinity();
  for (int i = need; i <= trials; ++i) {
    double t = std::lgamma(trials + 1.0) - std::lgamma(i + 1.0) - std::lgamma(trials - i + 1.0) + i * std::log(p) +
               (trials - i) * std::log1p(-p);
    double hi = std::max(log_total, t);
    log_total = hi + std::log(std::exp(log_total - hi) + std::exp(t - hi));
    if (t < log_total - 40) break;
  }
  return tests * std::exp(log_total);
}

void SimilarityTransform::apply(double x, double y, double& ox, double& oy) const {
  double c = scale * std::cos(rotation), s = scale * std::sin(rotation);
  ox = c * x - s * y + tx;
  oy = s * x + c * y + ty;
}

FeatureLookup::FeatureLookup(std::span<const FeatureSet> sets) : sets_(sets) {
  for (std::size_t i = 0; i < sets.size(); ++i) {
    ImageId id = sets[i].image_id;
    if (id >= slot_.size()) slot_.resize(static_cast<std::size_t>(id) + 1, -1);
    slot_[id] = static_cast<std::int64_t>(i);
  }
}

const FeatureSet* FeatureLookup::find(ImageId id) const {
  if (id >= slot_.size() || slot_[id] < 0) return nullptr;
  return &sets_[static_cast<std::size_t>(slot_[id])];
}

CandidateMap collect_candidates(const FeatureSet& query, std::span<const std::vector<DescriptorMatch>> raw,
                                const FeatureLookup& store, float ratio) {
  CandidateMap out;
  std::map<ImageId, std::pair<float, float>> per_image;  // best, second best
  std::map<ImageId, const DescriptorMatch*> best_match;
  for (const auto& matches : raw) {
    per_image.clear();
    best_match.clear();
    for (const auto& m : matches) {
      require(m.match_image_id != query.image_id, ErrorCode::kPrecondition,
              "raw matches must exclude the query image");
      auto [it, fresh] = per_image.try_emplace(m.match_image_id, m.approx_distance,
                                               std::numeric_limits<float>::infinity());
      if (fresh) {
        best_match[m.match_image_id] = &m;
      } else if (m.approx_distance < it->second.first) {
        it->second.second = it->second.first;
        it->second.first = m.approx_distance;
        best_match[m.match_image_id] = &m;
      } else {
        it->second.second = std::min(it->second.second, m.approx_distance);
      }
    }
    for (const auto& [img, d] : per_image) {
      if (std::isfinite(d.second) && d.first > ratio * d.second) continue;
      const DescriptorMatch& m = *best_match[img];
      const FeatureSet* target = store.find(img);
      if (!target || m.match_keypoint_ordinal >= target->size() || m.query_ordinal >= query.size()) continue;
      out[img].push_back({query.keypoints[m.query_ordinal], target->keypoints[m.match_keypoint_ordinal],
                          m.approx_distance, m.query_ordinal, m.match_keypoint_ordinal});
    }
  }
  // One query keypoint per target keypoint.
  for (auto& [img, corrs] : out) {
    std::sort(corrs.begin(), corrs.end(), [](const Correspondence& a, const Correspondence& b) {
      return std::tie(a.match_ordinal, a.descriptor_distance, a.query_ordinal) <
             std::tie(b.match_ordinal, b.descriptor_distance, b.query_ordinal);
    });
    corrs.erase(std::unique(corrs.begin(), corrs.end(),
                            [](const Correspondence& a, const Correspondence& b) { return a.match_ordinal == b.match_ordinal; }),
                corrs.end());
  }
  return out;
}

RansacResult estimate_similarity_ransac(std::span<const Correspondence> input, const MatchParams& params,
                                        std::uint64_t seed) {
  RansacResult result;
  if (input.size() < 2) return result;
  std::vector<Correspondence> corrs(input.begin(), input.end());
  std::sort(corrs.begin(), corrs.end(), corr_less);
  const double tol2 = params.inlier_px * params.inlier_px;
  const std::size_t n = corrs.size();

  std::optional<Model> best;
  int best_count = 0;
  auto consider = [&](std::size_t i, std::size_t j) {
    auto m = from_pair(corrs[i], corrs[j]);
    if (!m) return;
    if (params.keypoint_consistency &&
        (!is_inlier(*m, corrs[i], tol2, true) || !is_inlier(*m, corrs[j], tol2, true)))
      return;
    int c = count_inliers(*m, corrs, tol2, params.keypoint_consistency);
    if (c > best_count) {
      best_count = c;
      best = m;
    }
  };
  const std::size_t pairs = n * (n - 1) / 2;
  if (pairs <= static_cast<std::size_t>(std::max(params.ransac_iterations, 0))) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int it = 0; it < params.ransac_iterations; ++it) {
      std::size_t i = pick(rng), j = pick(rng);
      if (i == j) continue;
      consider(i, j);
    }
  }
  if (!best) return result;

  std::vector<std::size_t> which;
  count_inliers(*best, corrs, tol2, params.keypoint_consistency, &which);
  // Refit on inliers until the inlier set stops growing.
  for (int round = 0; round < 3; ++round) {
    auto refit = least_squares(corrs, which);
    if (!refit) break;
    std::vector<std::size_t> next;
    int c = count_inliers(*refit, corrs, tol2, params.keypoint_consistency, &next);
    if (c < best_count) break;
    bool grew = c > best_count;
    best = refit;
    best_count = c;
    which = std::move(next);
    if (!grew) break;
  }
  result.transform = to_transform(*best);
  result.inliers = best_count;
  double tests = static_cast<double>(std::min(pairs, static_cast<std::size_t>(std::max(params.ransac_iterations, 1))));
  result.false_alarms = expected_false_alarms(n, best_count, inlier_probability(corrs, params.inlier_px), tests);
  return result;
}

std::uint64_t pair_seed(ImageId query, ImageId candidate, std::uint64_t base) {
  return splitmix(splitmix(base) ^ (static_cast<std::uint64_t>(query) << 32 | candidate));
}

std::vector<ImageScore> score_images(const FeatureSet& query, const CandidateMap& candidates,
                                     const MatchParams& params) {
  std::vector<const std::pair<const ImageId, std::vector<Correspondence>>*> items;
  for (const auto& kv : candidates) items.push_back(&kv);
  std::vector<ImageScore> scores(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const auto& [img, corrs] = *items[i];
    scores[i].image_id = img;
    if (static_cast<int>(corrs.size()) < params.min_inliers) return;
    auto r = estimate_similarity_ransac(corrs, params, pair_seed(query.image_id, img, params.seed));
    bool chance = params.max_false_alarms > 0 && r.false_alarms >= params.max_false_alarms;
    if (r.inliers >= params.min_inliers && !chance) {
      scores[i].score = r.inliers;
      scores[i].transform = r.transform;
    }
  });
  std::erase_if(scores, [](const ImageScore& s) { return s.score <= 0; });
  std::sort(scores.begin(), scores.end(), [](const ImageScore& a, const ImageScore& b) {
    return a.score != b.score ? a.score > b.score : a.image_id < b.image_id;
  });
  if (params.top_j >= 0 && scores.size() > static_cast<std::size_t>(params.top_j))
    scores.resize(static_cast<std::size_t>(params.top_j));
  return scores;
}

std::vector<ImageScore> match_query(const OpqIvfIndex& index, const FeatureLookup& store, const FeatureSet& query,
                                    const SearchParams& search_params, const MatchParams& match_params) {
  SearchParams sp = search_params;
  sp.exclude_image = query.image_id;
  auto raw = search(index, descriptor_matrix(query), sp);
  auto candidates = collect_candidates(query, raw, store, match_params.ratio);
  return score_images(query, candidates, match_params);
}

std::string debug_record(ImageId query, const ImageScore& score) {
  std::ostringstream os;
  os << query << '\t' << score.image_id << '\t' << score.score;
  if (score.transform)
    os << '\t' << score.transform->scale << '\t' << score.transform->rotation << '\t' << score.transform->tx << '\t'
       << score.transform->ty;
  return os.str();
}

}  // namespace mgd
