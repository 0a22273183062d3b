#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "vscout/detectors.hpp"
#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

struct PeltConfig {
  double penalty = 40.0;
  std::size_t min_segment_length = 10;

  void validate() const {
    if (!(penalty > 0.0)) throw ConfigError("PELT penalty must be > 0");
    if (min_segment_length < 2) throw ConfigError("min_segment_length must be >= 2");
  }
};

// Changepoints are 1-based segment ends: a changepoint at t means the
// observations 1..t and t+1.. belong to different segments.
struct Segmentation {
  std::vector<std::size_t> changepoints;
  double segment_cost = 0.0;  // sum of per-segment L2 costs
  double total_cost = 0.0;    // segment_cost + penalty * K

  std::size_t earliest() const { return changepoints.empty() ? 0 : changepoints.front(); }
};

inline std::vector<double> latent_magnitude(const Matrix& z) {
  if (z.rows() == 0) throw DegenerateInputError("latent_magnitude of empty matrix");
  std::vector<double> s(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) s[static_cast<std::size_t>(i)] = z.row(i).norm();
  return s;
}

// Sum of squared deviations from the segment mean, O(1) per query.
class L2Cost {
 public:
  explicit L2Cost(std::span<const double> s) : sum_(s.size() + 1, 0.0), sq_(s.size() + 1, 0.0) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      sum_[i + 1] = sum_[i] + s[i];
      sq_[i + 1] = sq_[i] + s[i] * s[i];
    }
  }

  // Cost of observations (start, stop], i.e. 0-based [start, stop).
  double operator()(std::size_t start, std::size_t stop) const {
    const double len = static_cast<double>(stop - start);
    const double total = sum_[stop] - sum_[start];
    return std::max(0.0, (sq_[stop] - sq_[start]) - total * total / len);
  }

 private:
  std::vector<double> sum_;
  std::vector<double> sq_;
};

// Exact penalized L2 segmentation by PELT. A candidate that fails the
// pruning test at time t stays available until t + min_segment_length,
// because shorter final segments cannot reuse t as a changepoint.
inline Segmentation pelt_segment(std::span<const double> s, const PeltConfig& cfg) {
  cfg.validate();
  const std::size_t n = s.size();
  const std::size_t min_len = cfg.min_segment_length;
  const L2Cost cost(s);
  Segmentation out;
  if (n == 0) return out;
  if (n < 2 * min_len) {
    out.segment_cost = cost(0, n);
    out.total_cost = out.segment_cost;
    return out;
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best(n + 1, kInf);
  std::vector<std::size_t> last(n + 1, 0);
  best[0] = -cfg.penalty;

  struct Candidate {
    std::size_t position;
    std::size_t pruned_at;  // n + 1 + min_len when never pruned
  };
  const std::size_t never = n + 1 + min_len;
  std::vector<Candidate> candidates;

  for (std::size_t t = min_len; t <= n; ++t) {
    // Position t - min_len becomes a feasible last changepoint now.
    const std::size_t fresh = t - min_len;
    if (fresh == 0 || (fresh >= min_len && best[fresh] < kInf)) candidates.push_back({fresh, never});

    double f = kInf;
    std::size_t arg = 0;
    for (const auto& c : candidates) {
      const double v = best[c.position] + cost(c.position, t) + cfg.penalty;
      if (v < f) {
        f = v;
        arg = c.position;
      }
    }
    best[t] = f;
    last[t] = arg;

    const double margin = 1e-12 * (1.0 + std::abs(f));
    std::vector<Candidate> kept;
    kept.reserve(candidates.size());
    for (auto c : candidates) {
      if (c.pruned_at == never && best[c.position] + cost(c.position, t) > f + margin) c.pruned_at = t;
      if (c.pruned_at == never || t < c.pruned_at + min_len) kept.push_back(c);
    }
    candidates.swap(kept);
  }

  for (std::size_t t = last[n]; t > 0; t = last[t]) out.changepoints.insert(out.changepoints.begin(), t);
  std::size_t start = 0;
  for (std::size_t cp : out.changepoints) {
    out.segment_cost += cost(start, cp);
    start = cp;
  }
  out.segment_cost += cost(start, n);
  out.total_cost = out.segment_cost + cfg.penalty * static_cast<double>(out.changepoints.size());
  return out;
}

// c_i = 1 for every (1-based) i > earliest changepoint.
inline Flags changepoint_flags(const Segmentation& seg, std::size_t n) {
  Flags flags(n, 0);
  if (seg.changepoints.empty()) return flags;
  for (std::size_t i = seg.earliest(); i < n; ++i) flags[i] = 1;
  return flags;
}

}  // namespace vscout
