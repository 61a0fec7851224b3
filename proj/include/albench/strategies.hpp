#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "albench/core.hpp"
#include "albench/random.hpp"

namespace albench {

enum class StrategyKind { random, entropy, ens_varr, coreset, learn_loss, seg_entropy, ens_ent, d_score };

inline const std::vector<std::pair<StrategyKind, std::string>>& strategy_names() {
  static const std::vector<std::pair<StrategyKind, std::string>> names = {
      {StrategyKind::random, "random"},         {StrategyKind::entropy, "entropy"},
      {StrategyKind::ens_varr, "ens_varr"},     {StrategyKind::coreset, "coreset"},
      {StrategyKind::learn_loss, "learn_loss"}, {StrategyKind::seg_entropy, "seg_entropy"},
      {StrategyKind::ens_ent, "ens_ent"},       {StrategyKind::d_score, "d_score"},
  };
  return names;
}

inline std::string to_string(StrategyKind k) {
  for (const auto& [kind, name] : strategy_names()) {
    if (kind == k) return name;
  }
  return "?";
}

inline StrategyKind parse_strategy_kind(std::string_view name) {
  for (const auto& [kind, n] : strategy_names()) {
    if (n == name) return kind;
  }
  fail(ErrorCode::config, "unknown strategy '" + std::string(name) + "'");
}

inline bool is_ensemble(StrategyKind k) { return k == StrategyKind::ens_varr || k == StrategyKind::ens_ent; }

constexpr double kDefaultEntropyThreshold = 0.6;
constexpr int kDefaultEnsembleSize = 5;
constexpr double kDefaultHingeMargin = 1.0;

struct StrategySpec {
  StrategyKind kind = StrategyKind::random;
  /// Recognised keys: "threshold" (tau, nats), "ensemble_size" (T).
  std::map<std::string, double> params;
  /// Core-set distance; only "euclidean" is implemented.
  std::string distance = "euclidean";

  std::string name() const { return to_string(kind); }

  double threshold() const {
    auto it = params.find("threshold");
    return it == params.end() ? kDefaultEntropyThreshold : it->second;
  }

  int ensemble_size() const {
    auto it = params.find("ensemble_size");
    return it == params.end() ? kDefaultEnsembleSize : static_cast<int>(it->second);
  }
};

inline FieldSet required_fields(StrategyKind k) {
  switch (k) {
    case StrategyKind::random: return {};
    case StrategyKind::entropy: return {BundleField::probs};
    case StrategyKind::ens_varr: return {BundleField::ensemble_votes};
    case StrategyKind::coreset: return {BundleField::features};
    case StrategyKind::learn_loss: return {BundleField::pred_loss};
    case StrategyKind::seg_entropy: return {BundleField::entropy_maps};
    case StrategyKind::ens_ent: return {BundleField::entropy_maps};
    case StrategyKind::d_score: return {BundleField::disc_scores};
  }
  return {};
}

inline void validate_strategy(const StrategySpec& s, int num_classes) {
  if (s.kind == StrategyKind::seg_entropy || s.kind == StrategyKind::ens_ent) {
    const double tau = s.threshold();
    require(tau > 0.0 && tau <= std::log(static_cast<double>(num_classes)) + 1e-12, ErrorCode::config,
            "entropy threshold " + std::to_string(tau) + " outside (0, ln num_classes]");
  }
  if (is_ensemble(s.kind)) {
    require(s.ensemble_size() >= 2, ErrorCode::config, "ensemble strategies need T >= 2");
  }
  require(s.distance == "euclidean", ErrorCode::config, "unsupported core-set distance '" + s.distance + "'");
}

enum class TieRule { lower_index_first };

struct RankEntry {
  Index index = 0;
  double score = 0.0;
  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

/// Acquisition order, highest priority first.
struct Ranking {
  std::vector<RankEntry> entries;
  TieRule tie_rule = TieRule::lower_index_first;

  std::vector<Index> indices() const {
    std::vector<Index> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.index);
    return out;
  }
  std::size_t size() const { return entries.size(); }
  friend bool operator==(const Ranking&, const Ranking&) = default;
};

namespace detail {

enum class Order { descending, ascending };

inline Ranking top_k(std::span<const Index> indices, std::span<const double> scores, std::size_t k,
                     Order order) {
  require(k <= indices.size(), ErrorCode::budget,
          "requested " + std::to_string(k) + " samples from a pool of " + std::to_string(indices.size()));
  std::vector<RankEntry> all;
  all.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(std::isfinite(scores[r]), ErrorCode::invalid_argument, "non-finite acquisition score");
    all.push_back({indices[r], scores[r]});
  }
  auto better = [order](const RankEntry& a, const RankEntry& b) {
    if (a.score != b.score) return order == Order::descending ? a.score > b.score : a.score < b.score;
    return a.index < b.index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return Ranking{std::move(all), TieRule::lower_index_first};
}

inline void require_field(const PredictionBundle& b, BundleField f) {
  require(b.has(f), ErrorCode::missing_field, "strategy requires bundle field '" + to_string(f) + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Uniform draw without replacement from `candidates`.
inline Ranking select_random(std::span<const Index> candidates, std::size_t k, std::uint64_t seed) {
  require(k <= candidates.size(), ErrorCode::budget,
          "requested " + std::to_string(k) + " samples from a pool of " + std::to_string(candidates.size()));
  std::vector<Index> pool(candidates.begin(), candidates.end());
  Rng rng(seed);
  Ranking out;
  out.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.entries.push_back({pool[i], static_cast<double>(k - i)});
  }
  return out;
}

inline Ranking select_random(const PoolState& pool, std::size_t k, std::uint64_t seed) {
  const std::vector<Index> u(pool.unlabeled.begin(), pool.unlabeled.end());
  return select_random(u, k, seed);
}

/// H(p) = -sum p ln p in nats, 0 ln 0 = 0.
inline double shannon_entropy(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    require(std::isfinite(v) && v >= -kSimplexTolerance, ErrorCode::invalid_distribution,
            "negative probability");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kSimplexTolerance, ErrorCode::invalid_distribution,
          "probabilities do not sum to 1");
  // Summing in sorted order makes the result invariant to class order, so
  // permuted distributions tie exactly.
  std::vector<double> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end());
  double h = 0.0;
  for (double v : sorted) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

inline double shannon_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  std::vector<double> v(p.data(), p.data() + p.size());
  return shannon_entropy(std::span<const double>(v));
}

inline Ranking select_entropy(const PredictionBundle& b, std::size_t k) {
  detail::require_field(b, BundleField::probs);
  std::vector<double> scores(b.rows());
  for (std::size_t r = 0; r < b.rows(); ++r) scores[r] = shannon_entropy(b.probs->row(static_cast<Eigen::Index>(r)));
  return detail::top_k(b.indices, scores, k, detail::Order::descending);
}

/// 1 - f_m / T where f_m is the frequency of the modal vote.
inline double variation_ratio(std::span<const int> votes) {
  require(!votes.empty(), ErrorCode::invalid_argument, "empty vote vector");
  std::map<int, int> freq;
  int modal = 0;
  for (int v : votes) modal = std::max(modal, ++freq[v]);
  return 1.0 - static_cast<double>(modal) / static_cast<double>(votes.size());
}

inline Ranking select_varr(const PredictionBundle& b, std::size_t k) {
  detail::require_field(b, BundleField::ensemble_votes);
  const auto& votes = *b.ensemble_votes;
  require(votes.cols() >= 2, ErrorCode::invalid_argument, "variation ratio needs at least 2 ensemble members");
  std::vector<double> scores(b.rows());
  std::vector<int> row(static_cast<std::size_t>(votes.cols()));
  for (std::size_t r = 0; r < b.rows(); ++r) {
    for (Eigen::Index t = 0; t < votes.cols(); ++t) row[t] = votes(static_cast<Eigen::Index>(r), t);
    scores[r] = variation_ratio(row);
  }
  return detail::top_k(b.indices, scores, k, detail::Order::descending);
}

/// Farthest-first traversal seeded with the labeled set. Scores are the
/// distance of each pick to its nearest center at the time it was picked.
inline Ranking select_coreset_greedy(const PredictionBundle& b, const Eigen::MatrixXd& labeled_features,
                                     std::size_t k) {
  detail::require_field(b, BundleField::features);
  require(labeled_features.rows() >= 1, ErrorCode::invalid_argument,
          "core-set selection needs a non-empty labeled seed set");
  const Eigen::MatrixXd& f = *b.features;
  require(f.cols() >= 1 && f.cols() == labeled_features.cols(), ErrorCode::invalid_argument,
          "feature dimensionality mismatch between pool and labeled set");
  const auto n = static_cast<std::size_t>(f.rows());
  require(k <= n, ErrorCode::budget,
          "requested " + std::to_string(k) + " samples from a pool of " + std::to_string(n));

  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  for (std::size_t u = 0; u < n; ++u) {
    const auto row = f.row(static_cast<Eigen::Index>(u));
    min_sq[u] = (labeled_features.rowwise() - row).rowwise().squaredNorm().minCoeff();
  }
  std::vector<bool> taken(n, false);
  Ranking out;
  out.entries.reserve(k);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = n;
    for (std::size_t u = 0; u < n; ++u) {
      if (taken[u]) continue;
      if (best == n || min_sq[u] > min_sq[best] ||
          (min_sq[u] == min_sq[best] && b.indices[u] < b.indices[best])) {
        best = u;
      }
    }
    taken[best] = true;
    out.entries.push_back({b.indices[best], std::sqrt(min_sq[best])});
    const auto center = f.row(static_cast<Eigen::Index>(best));
    for (std::size_t u = 0; u < n; ++u) {
      if (!taken[u]) min_sq[u] = std::min(min_sq[u], (f.row(static_cast<Eigen::Index>(u)) - center).squaredNorm());
    }
  }
  return out;
}

/// Pairwise ranking hinge: max(0, -sign(l_i - l_j) (s_i - s_j) + margin), sign(0) = +1.
inline double ranking_hinge(double loss_i, double loss_j, double pred_i, double pred_j,
                            double margin = kDefaultHingeMargin) {
  const double sign = loss_i - loss_j >= 0.0 ? 1.0 : -1.0;
  return std::max(0.0, -sign * (pred_i - pred_j) + margin);
}

inline Ranking select_learn_loss(const PredictionBundle& b, std::size_t k) {
  detail::require_field(b, BundleField::pred_loss);
  std::vector<double> scores(b.pred_loss->data(), b.pred_loss->data() + b.pred_loss->size());
  return detail::top_k(b.indices, scores, k, detail::Order::descending);
}

/// Number of pixels whose entropy is strictly above tau.
inline std::int64_t seg_uncertainty_score(const Raster& entropy_map, double tau) {
  require(tau > 0.0, ErrorCode::invalid_argument, "entropy threshold must be positive");
  std::int64_t count = 0;
  for (double v : entropy_map.values) {
    require(v >= 0.0, ErrorCode::invalid_argument, "negative entropy value");
    if (v > tau) ++count;
  }
  return count;
}

/// ENS-ent aggregation: average the members' per-pixel class probabilities,
/// then take the per-pixel entropy. Each member matrix is (pixels x classes).
inline Raster mean_entropy_map(std::span<const Eigen::MatrixXd> member_probs, int width, int height) {
  require(!member_probs.empty(), ErrorCode::invalid_argument, "no ensemble members");
  Eigen::MatrixXd mean = member_probs.front();
  for (std::size_t m = 1; m < member_probs.size(); ++m) mean += member_probs[m];
  mean /= static_cast<double>(member_probs.size());
  require(mean.rows() == static_cast<Eigen::Index>(width) * height, ErrorCode::invalid_argument,
          "probability map does not match raster shape");
  Raster out{width, height, std::vector<double>(static_cast<std::size_t>(mean.rows()))};
  for (Eigen::Index p = 0; p < mean.rows(); ++p) {
    double h = 0.0;
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
      const double v = mean(p, c);
      if (v > 0.0) h -= v * std::log(v);
    }
    out.values[static_cast<std::size_t>(p)] = std::max(0.0, h);
  }
  return out;
}

inline Ranking select_seg_entropy(const PredictionBundle& b, double tau, std::size_t k) {
  detail::require_field(b, BundleField::entropy_maps);
  std::vector<double> scores(b.rows());
  for (std::size_t r = 0; r < b.rows(); ++r) {
    scores[r] = static_cast<double>(seg_uncertainty_score((*b.entropy_maps)[r], tau));
  }
  return detail::top_k(b.indices, scores, k, detail::Order::descending);
}

/// Lowest discriminator ratings first.
inline Ranking select_d_score(const PredictionBundle& b, std::size_t k) {
  detail::require_field(b, BundleField::disc_scores);
  const auto& s = *b.disc_scores;
  for (Eigen::Index r = 0; r < s.size(); ++r) {
    require(s[r] >= 0.0 && s[r] <= 1.0, ErrorCode::invalid_argument,
            "discriminator score outside [0, 1] at row " + std::to_string(r));
  }
  std::vector<double> scores(s.data(), s.data() + s.size());
  return detail::top_k(b.indices, scores, k, detail::Order::ascending);
}

/// Dispatches on the strategy kind. `bundle` covers the candidate pool;
/// `labeled_features` is only read by the core-set strategy.
inline Ranking query(const StrategySpec& spec, const PredictionBundle& bundle, std::size_t k,
                     std::uint64_t seed, const Eigen::MatrixXd& labeled_features = {}) {
  switch (spec.kind) {
    case StrategyKind::random: return select_random(bundle.indices, k, seed);
    case StrategyKind::entropy: return select_entropy(bundle, k);
    case StrategyKind::ens_varr: return select_varr(bundle, k);
    case StrategyKind::coreset: return select_coreset_greedy(bundle, labeled_features, k);
    case StrategyKind::learn_loss: return select_learn_loss(bundle, k);
    case StrategyKind::seg_entropy:
    case StrategyKind::ens_ent: return select_seg_entropy(bundle, spec.threshold(), k);
    case StrategyKind::d_score: return select_d_score(bundle, k);
  }
  fail(ErrorCode::invalid_argument, "unhandled strategy");
}

}  // namespace albench
