#pragma once

// Monte Carlo scenario generator: five base families with a global mean
// shift of +delta on every coordinate of the contaminated rows.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include "vscout/detectors.hpp"
#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

enum class BaseDistribution { kNormal, kT5, kLognormal, kMixed, kMultimodal };
enum class ShiftType { kNone, kTransient, kSustained };

inline std::string to_string(BaseDistribution d) {
  switch (d) {
    case BaseDistribution::kNormal: return "normal";
    case BaseDistribution::kT5: return "t5";
    case BaseDistribution::kLognormal: return "lognormal";
    case BaseDistribution::kMixed: return "mixed";
    case BaseDistribution::kMultimodal: return "multimodal";
  }
  return "unknown";
}

inline BaseDistribution distribution_from_string(const std::string& s) {
  for (auto d : {BaseDistribution::kNormal, BaseDistribution::kT5, BaseDistribution::kLognormal,
                 BaseDistribution::kMixed, BaseDistribution::kMultimodal}) {
    if (to_string(d) == s) return d;
  }
  throw ConfigError("unknown distribution '" + s + "'");
}

inline std::string to_string(ShiftType s) {
  switch (s) {
    case ShiftType::kNone: return "none";
    case ShiftType::kTransient: return "transient";
    case ShiftType::kSustained: return "sustained";
  }
  return "unknown";
}

inline ShiftType shift_from_string(const std::string& s) {
  for (auto t : {ShiftType::kNone, ShiftType::kTransient, ShiftType::kSustained}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown shift type '" + s + "'");
}

struct ScenarioSpec {
  BaseDistribution dist = BaseDistribution::kNormal;
  std::size_t n = 500;
  std::size_t p = 150;
  double delta = 0.0;
  double gamma = 0.0;
  ShiftType shift = ShiftType::kNone;
  std::uint64_t seed = 0;

  // Shift type after folding delta = 0 or gamma = 0 into "none".
  ShiftType effective_shift() const {
    return (delta == 0.0 || gamma == 0.0) ? ShiftType::kNone : shift;
  }

  void validate() const {
    if (n < 2) throw ConfigError("scenario needs n >= 2");
    if (p < 1) throw ConfigError("scenario needs p >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be finite and >= 0");
    if (shift == ShiftType::kNone && gamma > 0.0 && delta > 0.0) {
      throw ConfigError("shift type 'none' requires gamma = 0 or delta = 0");
    }
  }
};

struct LabeledSample {
  DataMatrix x;
  Flags truth;
  bool contamination_warning = false;  // gamma * n < 1: nothing was shifted
};

inline std::size_t contaminated_count(const ScenarioSpec& spec) {
  return static_cast<std::size_t>(std::ceil(spec.gamma * static_cast<double>(spec.n) - 1e-9));
}

inline LabeledSample generate(const ScenarioSpec& spec, RngStream& rng) {
  spec.validate();
  const auto n = static_cast<Index>(spec.n);
  const auto p = static_cast<Index>(spec.p);
  Matrix x(n, p);
  const Distribution t5 = Distribution::student_t(5.0);
  for (Index i = 0; i < n; ++i) {
    switch (spec.dist) {
      case BaseDistribution::kNormal:
        for (Index j = 0; j < p; ++j) x(i, j) = rng.normal();
        break;
      case BaseDistribution::kT5:
        for (Index j = 0; j < p; ++j) x(i, j) = draw(t5, rng);
        break;
      case BaseDistribution::kLognormal:
        for (Index j = 0; j < p; ++j) x(i, j) = std::exp(rng.normal());
        break;
      case BaseDistribution::kMixed: {
        const bool heavy = rng.uniform() < 0.5;
        for (Index j = 0; j < p; ++j) x(i, j) = heavy ? draw(t5, rng) : rng.normal();
        break;
      }
      case BaseDistribution::kMultimodal: {
        const double centre = rng.uniform() < 0.5 ? -5.0 : 5.0;
        for (Index j = 0; j < p; ++j) x(i, j) = centre + rng.normal();
        break;
      }
    }
  }

  LabeledSample out{DataMatrix{}, Flags(spec.n, 0), false};
  const ShiftType shift = spec.effective_shift();
  if (shift != ShiftType::kNone) {
    if (spec.gamma * static_cast<double>(spec.n) < 1.0) {
      out.contamination_warning = true;
    } else {
      const std::size_t count = contaminated_count(spec);
      std::vector<std::size_t> rows;
      if (shift == ShiftType::kTransient) {
        rows = rng.sample_without_replacement(spec.n, count);
      } else {
        for (std::size_t i = spec.n - count; i < spec.n; ++i) rows.push_back(i);
      }
      for (auto r : rows) {
        x.row(static_cast<Index>(r)).array() += spec.delta;
        out.truth[r] = 1;
      }
    }
  }
  out.x = DataMatrix(std::move(x));
  return out;
}

}  // namespace vscout
