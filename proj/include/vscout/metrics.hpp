#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

struct MetricsReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::optional<double> recall;  // absent when the truth has no positives
  double precision = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
  double inlier_retention = 0.0;
  std::optional<double> auroc;
};

inline MetricsReport score_labels(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted) {
  if (truth.size() != predicted.size()) throw DegenerateInputError("score_labels: length mismatch");
  MetricsReport m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0;
    const bool p = predicted[i] != 0;
    if (t && p) ++m.tp;
    else if (!t && p) ++m.fp;
    else if (!t && !p) ++m.tn;
    else ++m.fn;
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  if (m.tp + m.fn > 0) m.recall = ratio(m.tp, m.tp + m.fn);
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.fpr = ratio(m.fp, m.fp + m.tn);
  m.inlier_retention = ratio(m.tn, m.tn + m.fp);
  const double r = m.recall.value_or(0.0);
  m.f1 = (m.precision + r) > 0.0 ? 2.0 * m.precision * r / (m.precision + r) : 0.0;
  return m;
}

// Mann-Whitney AUROC with half credit for ties, via mid-ranks.
inline double auroc(std::span<const std::uint8_t> truth, std::span<const double> scores) {
  if (truth.size() != scores.size()) throw DegenerateInputError("auroc: length mismatch");
  std::size_t positives = 0;
  for (auto t : truth) positives += t ? 1 : 0;
  const std::size_t negatives = truth.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("auroc needs both classes");

  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i]) rank_sum += ranks[i];
  const double np = static_cast<double>(positives);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

}  // namespace vscout
