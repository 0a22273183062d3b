#pragma once

// Dense linear algebra, sampling and quantile helpers shared by the rest of
// the library. Storage is Eigen; the algorithms that matter for numerical
// contracts (covariance, Cholesky solve, quantiles) are written out here.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vscout/error.hpp"

namespace vscout {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// The retrospective sample: n observations (rows) of p process variables.
class DataMatrix {
 public:
  DataMatrix() = default;

  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 2) {
      throw DegenerateInputError("data matrix needs at least 2 rows");
    }
    if (values_.cols() < 1) {
      throw DegenerateInputError("data matrix needs at least 1 column");
    }
    if (!values_.allFinite()) {
      throw DegenerateInputError("data matrix contains NaN or Inf");
    }
  }

  Index rows() const noexcept { return values_.rows(); }
  Index cols() const noexcept { return values_.cols(); }
  const Matrix& matrix() const noexcept { return values_; }

 private:
  Matrix values_;
};

// xoshiro256** seeded through splitmix64. Every distribution below is
// implemented on top of raw 64-bit outputs so that a seed fixes the stream
// independently of the standard library in use.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, bound), bias-free by rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % bound;
  }

  // Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
  double gamma(double shape) noexcept {
    if (shape < 1.0) {
      double u;
      do {
        u = uniform();
      } while (u <= 0.0);
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_squared(double df) noexcept { return 2.0 * gamma(0.5 * df); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  // `count` distinct indices from [0, population), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t population,
                                                      std::size_t count) {
    count = std::min(count, population);
    std::vector<std::size_t> pool(population);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + below(population - i)]);
    }
    pool.resize(count);
    return pool;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Distribution {
  enum class Kind { kStandardNormal, kStudentT, kLognormal, kUniform01 };

  Kind kind = Kind::kStandardNormal;
  double df = 0.0;

  static Distribution standard_normal() { return {Kind::kStandardNormal, 0.0}; }
  static Distribution student_t(double df) { return {Kind::kStudentT, df}; }
  static Distribution lognormal() { return {Kind::kLognormal, 0.0}; }
  static Distribution uniform01() { return {Kind::kUniform01, 0.0}; }
};

inline double draw(const Distribution& dist, RngStream& rng) {
  switch (dist.kind) {
    case Distribution::Kind::kStandardNormal:
      return rng.normal();
    case Distribution::Kind::kStudentT: {
      const double z = rng.normal();
      return z / std::sqrt(rng.chi_squared(dist.df) / dist.df);
    }
    case Distribution::Kind::kLognormal:
      return std::exp(rng.normal());
    case Distribution::Kind::kUniform01:
      return rng.uniform();
  }
  return 0.0;
}

inline std::vector<double> sample(const Distribution& dist, RngStream& rng, std::size_t count) {
  if (dist.kind == Distribution::Kind::kStudentT && !(dist.df >= 1.0)) {
    throw ConfigError("student_t requires df >= 1");
  }
  std::vector<double> out(count);
  for (auto& v : out) v = draw(dist, rng);
  return out;
}

inline Vector column_means(const Matrix& z) {
  if (z.rows() == 0) throw DegenerateInputError("column_means of empty matrix");
  return z.colwise().mean().transpose();
}

// Sample covariance with denominator (rows - 1).
inline Matrix covariance_matrix(const Matrix& z) {
  if (z.rows() < 2) throw DegenerateInputError("covariance needs at least 2 rows");
  const Vector mean = column_means(z);
  const Matrix centered = z.rowwise() - mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(z.rows() - 1);
  // Exact symmetry regardless of summation order inside the product.
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

// Lower-triangular Cholesky factor L with A = L Lᵀ.
inline Matrix cholesky(const Matrix& a) {
  const Index n = a.rows();
  if (a.cols() != n) throw IllConditionedError("cholesky of non-square matrix", 0);
  Matrix l = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!std::isfinite(diag) || diag <= 0.0) {
      throw IllConditionedError("matrix is not positive definite", static_cast<std::size_t>(j));
    }
    const double root = std::sqrt(diag);
    l(j, j) = root;
    for (Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (!std::isfinite(s)) {
        throw IllConditionedError("non-finite entry during factorization", static_cast<std::size_t>(j));
      }
      l(i, j) = s / root;
    }
  }
  return l;
}

// Solves L Lᵀ x = b given the factor from cholesky().
inline Vector cholesky_solve(const Matrix& l, const Vector& b) {
  const Index n = l.rows();
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    double s = b(i);
    for (Index k = 0; k < i; ++k) s -= l(i, k) * y(k);
    y(i) = s / l(i, i);
  }
  Vector x(n);
  for (Index i = n - 1; i >= 0; --i) {
    double s = y(i);
    for (Index k = i + 1; k < n; ++k) s -= l(k, i) * x(k);
    x(i) = s / l(i, i);
  }
  return x;
}

inline Vector solve_spd(const Matrix& a, const Vector& b) {
  if (!a.allFinite() || !b.allFinite()) {
    throw IllConditionedError("non-finite entries in linear system", 0);
  }
  if (b.size() != a.rows()) throw DegenerateInputError("solve_spd: dimension mismatch");
  return cholesky_solve(cholesky(a), b);
}

// Reciprocal condition number estimate of an SPD matrix from its Cholesky
// factor: (min L_ii / max L_ii)^2. Cheap and adequate for ridge triggering.
inline double cholesky_condition_estimate(const Matrix& l) {
  const Vector d = l.diagonal();
  const double lo = d.minCoeff();
  const double hi = d.maxCoeff();
  return (hi / lo) * (hi / lo);
}

// Type-7 (linear interpolation) quantile.
inline double empirical_quantile(std::span<const double> values, double level) {
  if (values.empty()) throw DegenerateInputError("quantile of empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw ConfigError("quantile level outside [0,1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = static_cast<double>(sorted.size() - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double empirical_quantile(const std::vector<double>& values, double level) {
  return empirical_quantile(std::span<const double>(values), level);
}

// 1-based ranks with ties sharing their average rank.
inline std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> ranks(n, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

// Mid-rank percentile in [0, 1]: unique minimum -> 0, unique maximum -> 1.
inline std::vector<double> percentile_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n <= 1) return std::vector<double>(n, 0.0);
  auto ranks = midranks(values);
  for (auto& r : ranks) r = (r - 1.0) / static_cast<double>(n - 1);
  return ranks;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  return out;
}

inline Matrix select_cols(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(static_cast<Index>(cols[j]));
  return out;
}

}  // namespace vscout
