#pragma once

// Outlier scorers for the relevant latent subspace. Every scorer follows the
// same fit/score split: a reference matrix defines the model ("fit") and a
// query matrix is scored against it. Query rows that are also reference rows
// are identified through `self` so neighbour-based scorers can exclude them.
// Scores are oriented so that larger means more anomalous.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

using Flags = std::vector<std::uint8_t>;

inline constexpr long kNotInReference = -1;

struct DetectorScores {
  std::string detector_id;
  std::vector<double> scores;
  Flags flags;
};

enum class Detector { kKnn, kLof, kIForest, kEcod, kHbos, kKde, kT2Latent, kBoxplot };
enum class ConsensusRule { kAny, kAll, kMajority };

inline std::string to_string(Detector d) {
  switch (d) {
    case Detector::kKnn: return "knn";
    case Detector::kLof: return "lof";
    case Detector::kIForest: return "iforest";
    case Detector::kEcod: return "ecod";
    case Detector::kHbos: return "hbos";
    case Detector::kKde: return "kde";
    case Detector::kT2Latent: return "t2_latent";
    case Detector::kBoxplot: return "boxplot";
  }
  return "unknown";
}

inline Detector detector_from_string(const std::string& name) {
  for (Detector d : {Detector::kKnn, Detector::kLof, Detector::kIForest, Detector::kEcod, Detector::kHbos,
                     Detector::kKde, Detector::kT2Latent, Detector::kBoxplot}) {
    if (to_string(d) == name) return d;
  }
  throw ConfigError("unknown detector '" + name + "'");
}

inline std::string to_string(ConsensusRule r) {
  switch (r) {
    case ConsensusRule::kAny: return "any";
    case ConsensusRule::kAll: return "all";
    case ConsensusRule::kMajority: return "majority";
  }
  return "unknown";
}

inline ConsensusRule rule_from_string(const std::string& name) {
  if (name == "any") return ConsensusRule::kAny;
  if (name == "all") return ConsensusRule::kAll;
  if (name == "majority") return ConsensusRule::kMajority;
  throw ConfigError("unknown consensus rule '" + name + "'");
}

struct EnsembleConfig {
  std::vector<Detector> detectors{Detector::kKnn,  Detector::kLof, Detector::kIForest,  Detector::kEcod,
                                  Detector::kHbos, Detector::kKde, Detector::kT2Latent};
  ConsensusRule rule = ConsensusRule::kAny;
  double per_detector_alpha = 0.05;
  double contamination_cap = 0.10;
  int knn_k = 5;
  int lof_k = 20;
  int iforest_trees = 100;
  int iforest_subsample = 256;  // clipped to the reference size
  int hbos_bins = 0;            // 0: ceil(sqrt(n_ref))
  bool boxplot_when_univariate = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (detectors.empty()) throw ConfigError("ensemble needs at least one detector");
    if (!(per_detector_alpha > 0.0 && per_detector_alpha < 1.0)) {
      throw ConfigError("per_detector_alpha must lie in (0,1)");
    }
    if (!(contamination_cap > 0.0 && contamination_cap <= 1.0)) {
      throw ConfigError("contamination_cap must lie in (0,1]");
    }
    if (knn_k < 1 || lof_k < 1) throw ConfigError("neighbour counts must be >= 1");
    if (iforest_trees < 1 || iforest_subsample < 2) throw ConfigError("invalid isolation forest settings");
    if (hbos_bins < 0) throw ConfigError("hbos_bins must be >= 0");
  }
};

namespace detail {

inline std::vector<long> identity_self(Index n) {
  std::vector<long> self(static_cast<std::size_t>(n));
  std::iota(self.begin(), self.end(), 0L);
  return self;
}

inline void check_self(const Matrix& ref, const Matrix& query, std::span<const long> self) {
  if (ref.cols() != query.cols()) throw DegenerateInputError("reference/query width mismatch");
  if (!self.empty() && self.size() != static_cast<std::size_t>(query.rows())) {
    throw DegenerateInputError("self index length must equal query rows");
  }
}

inline long self_of(std::span<const long> self, Index i) {
  return self.empty() ? kNotInReference : self[static_cast<std::size_t>(i)];
}

inline std::size_t reference_size_without_self(Index n_ref, std::span<const long> self) {
  const bool any_self = std::any_of(self.begin(), self.end(), [](long s) { return s >= 0; });
  return static_cast<std::size_t>(n_ref) - (any_self ? 1 : 0);
}

struct Neighbor {
  double distance;
  Index index;
};

// The k nearest reference rows of `point`, ties broken by lower index.
inline std::vector<Neighbor> nearest(const Matrix& ref, const Eigen::RowVectorXd& point, long exclude, int k) {
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(ref.rows()));
  for (Index j = 0; j < ref.rows(); ++j) {
    if (j == exclude) continue;
    all.push_back({(ref.row(j) - point).norm(), j});
  }
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(kk), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });
  all.resize(kk);
  return all;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// k-nearest-neighbour distance.

inline DetectorScores knn_scores(const Matrix& ref, const Matrix& query, int k, std::span<const long> self) {
  detail::check_self(ref, query, self);
  if (k < 1 || detail::reference_size_without_self(ref.rows(), self) < static_cast<std::size_t>(k)) {
    throw ConfigError("knn: need more reference points than k");
  }
  DetectorScores out{"knn", std::vector<double>(static_cast<std::size_t>(query.rows())), {}};
  for (Index i = 0; i < query.rows(); ++i) {
    const auto nn = detail::nearest(ref, query.row(i), detail::self_of(self, i), k);
    out.scores[static_cast<std::size_t>(i)] = nn.back().distance;
  }
  return out;
}

inline DetectorScores knn_scores(const Matrix& z, int k) {
  if (z.rows() <= k) throw ConfigError("knn: n must exceed k");
  const auto self = detail::identity_self(z.rows());
  return knn_scores(z, z, k, self);
}

// ---------------------------------------------------------------------------
// Local outlier factor with exactly k neighbours.

inline DetectorScores lof_scores(const Matrix& ref, const Matrix& query, int k, std::span<const long> self) {
  detail::check_self(ref, query, self);
  if (k < 1 || ref.rows() <= k) throw ConfigError("lof: need more reference points than k");
  const Index n_ref = ref.rows();
  constexpr double kDensityGuard = 1e-10;

  std::vector<std::vector<detail::Neighbor>> ref_nn(static_cast<std::size_t>(n_ref));
  std::vector<double> k_distance(static_cast<std::size_t>(n_ref));
  for (Index j = 0; j < n_ref; ++j) {
    ref_nn[static_cast<std::size_t>(j)] = detail::nearest(ref, ref.row(j), j, k);
    k_distance[static_cast<std::size_t>(j)] = ref_nn[static_cast<std::size_t>(j)].back().distance;
  }
  auto lrd_of = [&](const std::vector<detail::Neighbor>& nn) {
    double reach = 0.0;
    for (const auto& o : nn) reach += std::max(k_distance[static_cast<std::size_t>(o.index)], o.distance);
    return 1.0 / (reach / static_cast<double>(nn.size()) + kDensityGuard);
  };
  std::vector<double> ref_lrd(static_cast<std::size_t>(n_ref));
  for (Index j = 0; j < n_ref; ++j) ref_lrd[static_cast<std::size_t>(j)] = lrd_of(ref_nn[static_cast<std::size_t>(j)]);

  DetectorScores out{"lof", std::vector<double>(static_cast<std::size_t>(query.rows())), {}};
  for (Index i = 0; i < query.rows(); ++i) {
    const long s = detail::self_of(self, i);
    const auto nn = s >= 0 ? ref_nn[static_cast<std::size_t>(s)] : detail::nearest(ref, query.row(i), kNotInReference, k);
    const double own = s >= 0 ? ref_lrd[static_cast<std::size_t>(s)] : lrd_of(nn);
    double neighbour_lrd = 0.0;
    for (const auto& o : nn) neighbour_lrd += ref_lrd[static_cast<std::size_t>(o.index)];
    out.scores[static_cast<std::size_t>(i)] = neighbour_lrd / static_cast<double>(nn.size()) / own;
  }
  return out;
}

inline DetectorScores lof_scores(const Matrix& z, int k) {
  if (z.rows() <= k) throw ConfigError("lof: n must exceed k");
  const auto self = detail::identity_self(z.rows());
  return lof_scores(z, z, k, self);
}

// ---------------------------------------------------------------------------
// Isolation forest.

// Average unsuccessful-search path length of a binary search tree on m points.
inline double iforest_normalizer(double m) {
  if (m <= 1.0) return 0.0;
  if (m <= 2.0) return 1.0;
  const auto count = static_cast<long>(m - 1.0);
  double harmonic = 0.0;
  for (long i = 1; i <= count; ++i) harmonic += 1.0 / static_cast<double>(i);
  return 2.0 * harmonic - 2.0 * (m - 1.0) / m;
}

inline double iforest_score_from_path(double mean_path_length, double subsample) {
  return std::pow(2.0, -mean_path_length / iforest_normalizer(subsample));
}

class IsolationForest {
 public:
  IsolationForest(const Matrix& ref, int trees, int subsample, RngStream& rng) {
    if (ref.rows() < 2) throw DegenerateInputError("isolation forest needs at least 2 points");
    psi_ = std::min<Index>(subsample, ref.rows());
    const int depth_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi_))));
    for (int t = 0; t < trees; ++t) {
      const auto rows = rng.sample_without_replacement(static_cast<std::size_t>(ref.rows()), static_cast<std::size_t>(psi_));
      Tree tree;
      build(tree, ref, rows, 0, depth_limit, rng);
      trees_.push_back(std::move(tree));
    }
  }

  double mean_path_length(const Eigen::RowVectorXd& x) const {
    double total = 0.0;
    for (const auto& tree : trees_) total += path_length(tree, x);
    return total / static_cast<double>(trees_.size());
  }

  double score(const Eigen::RowVectorXd& x) const {
    return iforest_score_from_path(mean_path_length(x), static_cast<double>(psi_));
  }

 private:
  struct Node {
    Index feature = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    std::size_t size = 0;
  };
  using Tree = std::vector<Node>;

  static int build(Tree& tree, const Matrix& ref, const std::vector<std::size_t>& rows, int depth, int limit,
                   RngStream& rng) {
    const int id = static_cast<int>(tree.size());
    tree.push_back(Node{});
    tree[static_cast<std::size_t>(id)].size = rows.size();
    if (depth >= limit || rows.size() <= 1) return id;

    // Only attributes that still vary can split the node.
    std::vector<Index> candidates;
    for (Index f = 0; f < ref.cols(); ++f) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (auto r : rows) {
        lo = std::min(lo, ref(static_cast<Index>(r), f));
        hi = std::max(hi, ref(static_cast<Index>(r), f));
      }
      if (hi > lo) candidates.push_back(f);
    }
    if (candidates.empty()) return id;
    const Index feature = candidates[rng.below(candidates.size())];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (auto r : rows) {
      lo = std::min(lo, ref(static_cast<Index>(r), feature));
      hi = std::max(hi, ref(static_cast<Index>(r), feature));
    }
    const double split = rng.uniform(lo, hi);
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto r : rows) (ref(static_cast<Index>(r), feature) < split ? left : right).push_back(r);

    tree[static_cast<std::size_t>(id)].feature = feature;
    tree[static_cast<std::size_t>(id)].split = split;
    const int l = build(tree, ref, left, depth + 1, limit, rng);
    const int rr = build(tree, ref, right, depth + 1, limit, rng);
    tree[static_cast<std::size_t>(id)].left = l;
    tree[static_cast<std::size_t>(id)].right = rr;
    return id;
  }

  static double path_length(const Tree& tree, const Eigen::RowVectorXd& x) {
    int node = 0;
    int depth = 0;
    while (tree[static_cast<std::size_t>(node)].feature >= 0) {
      const Node& n = tree[static_cast<std::size_t>(node)];
      node = x(n.feature) < n.split ? n.left : n.right;
      ++depth;
    }
    return depth + iforest_normalizer(static_cast<double>(tree[static_cast<std::size_t>(node)].size));
  }

  Index psi_ = 0;
  std::vector<Tree> trees_;
};

inline DetectorScores iforest_scores(const Matrix& ref, const Matrix& query, int trees, int subsample, RngStream& rng) {
  if (ref.cols() != query.cols()) throw DegenerateInputError("reference/query width mismatch");
  const IsolationForest forest(ref, trees, subsample, rng);
  DetectorScores out{"iforest", std::vector<double>(static_cast<std::size_t>(query.rows())), {}};
  for (Index i = 0; i < query.rows(); ++i) out.scores[static_cast<std::size_t>(i)] = forest.score(query.row(i));
  return out;
}

inline DetectorScores iforest_scores(const Matrix& z, int trees, int subsample, RngStream& rng) {
  return iforest_scores(z, z, trees, subsample, rng);
}

// ---------------------------------------------------------------------------
// ECOD without skewness correction: per dimension the larger of the two
// negative log tail probabilities, summed over dimensions.

inline DetectorScores ecod_scores(const Matrix& ref, const Matrix& query) {
  if (ref.rows() < 2) throw DegenerateInputError("ecod needs at least 2 reference points");
  if (ref.cols() != query.cols()) throw DegenerateInputError("reference/query width mismatch");
  const auto n = static_cast<double>(ref.rows());
  DetectorScores out{"ecod", std::vector<double>(static_cast<std::size_t>(query.rows()), 0.0), {}};
  std::vector<double> sorted(static_cast<std::size_t>(ref.rows()));
  for (Index j = 0; j < ref.cols(); ++j) {
    for (Index r = 0; r < ref.rows(); ++r) sorted[static_cast<std::size_t>(r)] = ref(r, j);
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < query.rows(); ++i) {
      const double v = query(i, j);
      const auto at_most = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
      const auto below = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
      const double left = std::max(at_most / n, 1.0 / n);
      const double right = std::max((n - below) / n, 1.0 / n);
      out.scores[static_cast<std::size_t>(i)] += std::max(-std::log(left), -std::log(right));
    }
  }
  return out;
}

inline DetectorScores ecod_scores(const Matrix& z) { return ecod_scores(z, z); }

// ---------------------------------------------------------------------------
// Histogram-based outlier score with equal-width bins and +1 smoothing.

inline DetectorScores hbos_scores(const Matrix& ref, const Matrix& query, int bins) {
  if (bins < 1) throw ConfigError("hbos: bins must be >= 1");
  if (ref.rows() < 1) throw DegenerateInputError("hbos needs reference points");
  if (ref.cols() != query.cols()) throw DegenerateInputError("reference/query width mismatch");
  DetectorScores out{"hbos", std::vector<double>(static_cast<std::size_t>(query.rows()), 0.0), {}};
  std::vector<double> counts(static_cast<std::size_t>(bins));
  for (Index j = 0; j < ref.cols(); ++j) {
    const double lo = ref.col(j).minCoeff();
    const double hi = ref.col(j).maxCoeff();
    const double width = (hi - lo) / bins;
    // Returns -1 for values outside the fitted range.
    auto bin_of = [&](double v) -> long {
      if (v < lo || v > hi) return -1;
      if (!(width > 0.0)) return 0;
      return std::min<long>(static_cast<long>((v - lo) / width), bins - 1);
    };
    std::fill(counts.begin(), counts.end(), 1.0);
    for (Index r = 0; r < ref.rows(); ++r) counts[static_cast<std::size_t>(bin_of(ref(r, j)))] += 1.0;
    const double tallest = *std::max_element(counts.begin(), counts.end());
    for (Index i = 0; i < query.rows(); ++i) {
      const long b = bin_of(query(i, j));
      const double height = b < 0 ? 1.0 : counts[static_cast<std::size_t>(b)];
      out.scores[static_cast<std::size_t>(i)] += -std::log(height / tallest);
    }
  }
  return out;
}

inline DetectorScores hbos_scores(const Matrix& z, int bins) { return hbos_scores(z, z, bins); }

// ---------------------------------------------------------------------------
// Gaussian product-kernel density with Scott bandwidths.

inline constexpr double kBandwidthFloor = 1e-6;

inline Vector scott_bandwidths(const Matrix& ref) {
  const double factor = std::pow(static_cast<double>(ref.rows()), -1.0 / (static_cast<double>(ref.cols()) + 4.0));
  const Vector sd = covariance_matrix(ref).diagonal().cwiseSqrt();
  Vector h(ref.cols());
  for (Index j = 0; j < ref.cols(); ++j) h(j) = std::max(sd(j) * factor, kBandwidthFloor);
  return h;
}

inline double kde_log_density(const Matrix& ref, const Vector& bandwidth, const Eigen::RowVectorXd& x) {
  const double log_norm = -0.5 * static_cast<double>(ref.cols()) * std::log(2.0 * std::numbers::pi) -
                          bandwidth.array().log().sum();
  std::vector<double> terms(static_cast<std::size_t>(ref.rows()));
  double peak = -std::numeric_limits<double>::infinity();
  for (Index r = 0; r < ref.rows(); ++r) {
    const double q = ((ref.row(r) - x).transpose().array() / bandwidth.array()).square().sum();
    terms[static_cast<std::size_t>(r)] = -0.5 * q;
    peak = std::max(peak, terms[static_cast<std::size_t>(r)]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - peak);
  return log_norm + peak + std::log(acc) - std::log(static_cast<double>(ref.rows()));
}

inline DetectorScores kde_scores(const Matrix& ref, const Matrix& query) {
  if (ref.rows() < 2) throw DegenerateInputError("kde needs at least 2 reference points");
  if (ref.cols() != query.cols()) throw DegenerateInputError("reference/query width mismatch");
  const Vector h = scott_bandwidths(ref);
  DetectorScores out{"kde", std::vector<double>(static_cast<std::size_t>(query.rows())), {}};
  for (Index i = 0; i < query.rows(); ++i) out.scores[static_cast<std::size_t>(i)] = -kde_log_density(ref, h, query.row(i));
  return out;
}

inline DetectorScores kde_scores(const Matrix& z) { return kde_scores(z, z); }

// ---------------------------------------------------------------------------
// Hotelling T² in latent space.

inline constexpr double kRidgeLambda = 1e-6;
inline constexpr double kMaxCondition = 1e8;

struct RegularizedCovariance {
  Matrix covariance;
  Matrix factor;  // Cholesky factor of `covariance`
  bool ridge_applied = false;
};

// Sample covariance, with ridge λ·tr(Σ)/d added when the factorization fails
// or the condition estimate exceeds kMaxCondition.
inline RegularizedCovariance regularized_covariance(const Matrix& z) {
  RegularizedCovariance out{covariance_matrix(z), {}, false};
  try {
    out.factor = cholesky(out.covariance);
    if (cholesky_condition_estimate(out.factor) <= kMaxCondition) return out;
  } catch (const IllConditionedError&) {
  }
  const auto d = static_cast<double>(z.cols());
  double ridge = kRidgeLambda * out.covariance.trace() / d;
  if (!(ridge > 0.0)) ridge = kRidgeLambda;
  out.covariance.diagonal().array() += ridge;
  out.ridge_applied = true;
  out.factor = cholesky(out.covariance);
  return out;
}

inline DetectorScores t2_latent_scores(const Matrix& ref, const Matrix& query) {
  if (ref.rows() < 2) throw DegenerateInputError("t2_latent needs at least 2 reference points");
  if (ref.cols() != query.cols()) throw DegenerateInputError("reference/query width mismatch");
  const Vector mean = column_means(ref);
  const RegularizedCovariance cov = regularized_covariance(ref);
  DetectorScores out{"t2_latent", std::vector<double>(static_cast<std::size_t>(query.rows())), {}};
  for (Index i = 0; i < query.rows(); ++i) {
    const Vector diff = query.row(i).transpose() - mean;
    out.scores[static_cast<std::size_t>(i)] = diff.dot(cholesky_solve(cov.factor, diff));
  }
  return out;
}

inline DetectorScores t2_latent_scores(const Matrix& z) {
  if (z.rows() <= z.cols() + 1) throw DegenerateInputError("t2_latent needs n > d + 1");
  return t2_latent_scores(z, z);
}

// ---------------------------------------------------------------------------
// Tukey boxplot fences; flags are native rather than quantile thresholded.

struct BoxplotFences {
  double lower;
  double upper;
};

inline BoxplotFences boxplot_fences(std::span<const double> ref) {
  const double q1 = empirical_quantile(ref, 0.25);
  const double q3 = empirical_quantile(ref, 0.75);
  const double iqr = q3 - q1;
  return {q1 - 1.5 * iqr, q3 + 1.5 * iqr};
}

inline DetectorScores boxplot_flags(std::span<const double> ref, std::span<const double> query) {
  const BoxplotFences f = boxplot_fences(ref);
  DetectorScores out{"boxplot", std::vector<double>(query.size(), 0.0), Flags(query.size(), 0)};
  for (std::size_t i = 0; i < query.size(); ++i) {
    const double v = query[i];
    if (v < f.lower) {
      out.scores[i] = f.lower - v;
      out.flags[i] = 1;
    } else if (v > f.upper) {
      out.scores[i] = v - f.upper;
      out.flags[i] = 1;
    }
  }
  return out;
}

inline DetectorScores boxplot_flags(std::span<const double> z) { return boxplot_flags(z, z); }

// ---------------------------------------------------------------------------
// Thresholding, aggregation and the contamination cap.

inline Flags threshold_at(std::span<const double> scores, double threshold) {
  Flags flags(scores.size(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) flags[i] = scores[i] > threshold ? 1 : 0;
  return flags;
}

inline Flags threshold_by_quantile(std::span<const double> scores, double alpha0) {
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw ConfigError("alpha0 must lie in (0,1)");
  return threshold_at(scores, empirical_quantile(scores, 1.0 - alpha0));
}

inline std::size_t majority_votes_needed(std::size_t m) { return (m + 2) / 2; }  // ceil((m+1)/2)

inline Flags aggregate(const std::vector<Flags>& flag_sets, ConsensusRule rule) {
  if (flag_sets.empty()) throw ConfigError("aggregate needs at least one flag set");
  const std::size_t n = flag_sets.front().size();
  for (const auto& f : flag_sets) {
    if (f.size() != n) throw DegenerateInputError("aggregate: flag sets differ in length");
  }
  const std::size_t m = flag_sets.size();
  Flags out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t votes = 0;
    for (const auto& f : flag_sets) votes += f[i] ? 1 : 0;
    switch (rule) {
      case ConsensusRule::kAny: out[i] = votes >= 1; break;
      case ConsensusRule::kAll: out[i] = votes == m; break;
      case ConsensusRule::kMajority: out[i] = votes >= majority_votes_needed(m); break;
    }
  }
  return out;
}

inline std::size_t contamination_limit(double cap, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(cap * static_cast<double>(n) - 1e-9));
}

// Keeps at most ceil(cap·n) flags, preferring the highest combined score;
// equal scores keep the lower index.
inline Flags cap_contamination(const Flags& flags, std::span<const double> combined, double cap, std::size_t n) {
  if (!(cap > 0.0 && cap <= 1.0)) throw ConfigError("contamination cap must lie in (0,1]");
  if (combined.size() != flags.size()) throw DegenerateInputError("cap_contamination: length mismatch");
  const std::size_t limit = contamination_limit(cap, n);
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) flagged.push_back(i);
  if (flagged.size() <= limit) return flags;
  std::stable_sort(flagged.begin(), flagged.end(),
                   [&](std::size_t a, std::size_t b) { return combined[a] > combined[b]; });
  Flags out(flags.size(), 0);
  for (std::size_t k = 0; k < limit; ++k) out[flagged[k]] = 1;
  return out;
}

// Mean over detectors of the per-detector percentile rank.
inline std::vector<double> combined_rank_score(const std::vector<DetectorScores>& detectors) {
  if (detectors.empty()) return {};
  std::vector<double> combined(detectors.front().scores.size(), 0.0);
  for (const auto& d : detectors) {
    const auto ranks = percentile_ranks(d.scores);
    for (std::size_t i = 0; i < combined.size(); ++i) combined[i] += ranks[i];
  }
  for (auto& c : combined) c /= static_cast<double>(detectors.size());
  return combined;
}

struct EnsembleResult {
  std::vector<DetectorScores> detectors;
  Flags uncapped;
  Flags flags;
  std::vector<double> combined;
};

// Fits every configured detector on the reference rows of `z`, scores all
// rows, thresholds each detector at the (1 - alpha0) quantile of its
// reference scores, aggregates and applies the contamination cap.
inline EnsembleResult run_ensemble(const Matrix& z, std::span<const std::size_t> reference_rows,
                                   const EnsembleConfig& cfg) {
  cfg.validate();
  if (reference_rows.empty()) throw DegenerateInputError("ensemble needs reference rows");
  const Matrix ref = select_rows(z, reference_rows);
  std::vector<long> self(static_cast<std::size_t>(z.rows()), kNotInReference);
  for (std::size_t r = 0; r < reference_rows.size(); ++r) self[reference_rows[r]] = static_cast<long>(r);

  std::vector<Detector> chosen;
  for (Detector d : cfg.detectors)
    if (d != Detector::kBoxplot || z.cols() == 1) chosen.push_back(d);
  if (z.cols() == 1 && cfg.boxplot_when_univariate &&
      std::find(chosen.begin(), chosen.end(), Detector::kBoxplot) == chosen.end()) {
    chosen.push_back(Detector::kBoxplot);
  }

  const auto n_ref = static_cast<int>(ref.rows());
  EnsembleResult out;
  RngStream rng(cfg.seed);
  for (Detector d : chosen) {
    DetectorScores s;
    switch (d) {
      case Detector::kKnn: s = knn_scores(ref, z, cfg.knn_k, self); break;
      case Detector::kLof: s = lof_scores(ref, z, cfg.lof_k, self); break;
      case Detector::kIForest: s = iforest_scores(ref, z, cfg.iforest_trees, cfg.iforest_subsample, rng); break;
      case Detector::kEcod: s = ecod_scores(ref, z); break;
      case Detector::kHbos: {
        const int bins = cfg.hbos_bins > 0 ? cfg.hbos_bins : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_ref))));
        s = hbos_scores(ref, z, bins);
        break;
      }
      case Detector::kKde: s = kde_scores(ref, z); break;
      case Detector::kT2Latent: s = t2_latent_scores(ref, z); break;
      case Detector::kBoxplot: {
        const auto ref_col = to_std(ref.col(0));
        const auto all_col = to_std(z.col(0));
        s = boxplot_flags(ref_col, all_col);
        break;
      }
    }
    if (d != Detector::kBoxplot) {
      std::vector<double> ref_scores;
      ref_scores.reserve(reference_rows.size());
      for (auto r : reference_rows) ref_scores.push_back(s.scores[r]);
      s.flags = threshold_at(s.scores, empirical_quantile(ref_scores, 1.0 - cfg.per_detector_alpha));
    }
    out.detectors.push_back(std::move(s));
  }

  std::vector<Flags> flag_sets;
  for (const auto& d : out.detectors) flag_sets.push_back(d.flags);
  out.uncapped = aggregate(flag_sets, cfg.rule);
  out.combined = combined_rank_score(out.detectors);
  out.flags = cap_contamination(out.uncapped, out.combined, cfg.contamination_cap, static_cast<std::size_t>(z.rows()));
  return out;
}

inline EnsembleResult run_ensemble(const Matrix& z, const EnsembleConfig& cfg) {
  std::vector<std::size_t> all(static_cast<std::size_t>(z.rows()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return run_ensemble(z, all, cfg);
}

}  // namespace vscout
