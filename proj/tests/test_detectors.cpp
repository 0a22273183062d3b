#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "vscout/detectors.hpp"

using namespace vscout;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Matrix gaussian(Index n, Index p, RngStream& rng) {
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) x(i, j) = rng.normal();
  return x;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST(Knn, HandComputed) {
  const auto s = knn_scores(column({0, 1, 2, 100}), 1).scores;
  EXPECT_EQ(s, (std::vector<double>{1, 1, 1, 98}));
}

TEST(Knn, IdenticalPoints) {
  for (double v : knn_scores(Matrix::Constant(10, 3, 2.5), 3).scores) EXPECT_EQ(v, 0.0);
}

TEST(Knn, MatchesQuadraticLoop) {
  RngStream rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix z = gaussian(30 + rep * 5, 3, rng);
    const auto got = knn_scores(z, 5).scores;
    const auto want = oracle::knn(z, 5);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
  }
}

TEST(Knn, TooFewPoints) { EXPECT_THROW(knn_scores(column({1, 2, 3}), 3), ConfigError); }

TEST(Lof, UniformGridInteriorNearOne) {
  Matrix z(100, 2);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) z(i * 10 + j, 0) = i, z(i * 10 + j, 1) = j;
  const auto s = lof_scores(z, 4).scores;
  for (int i = 2; i < 8; ++i) {
    for (int j = 2; j < 8; ++j) {
      EXPECT_GE(s[i * 10 + j], 0.8);
      EXPECT_LE(s[i * 10 + j], 1.2);
    }
  }
}

TEST(Lof, FarPoint) {
  const auto s = lof_scores(column({0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 10}), 3).scores;
  EXPECT_GT(s.back(), 1.5);
  EXPECT_EQ(argmax(s), 10u);
}

TEST(Lof, MatchesQuadraticLoop) {
  RngStream rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix z = gaussian(40 + rep * 3, 2, rng);
    const auto got = lof_scores(z, 7).scores;
    const auto want = oracle::lof(z, 7);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
  }
}

TEST(Lof, ReferenceQuerySplitAgreesForMembers) {
  RngStream rng(3);
  const Matrix z = gaussian(50, 2, rng);
  std::vector<long> self(50);
  std::iota(self.begin(), self.end(), 0L);
  EXPECT_EQ(lof_scores(z, z, 5, self).scores, lof_scores(z, 5).scores);
}

TEST(IForest, NormalizerMidpoint) {
  EXPECT_DOUBLE_EQ(iforest_score_from_path(iforest_normalizer(256.0), 256.0), 0.5);
  EXPECT_EQ(iforest_normalizer(1.0), 0.0);
  EXPECT_EQ(iforest_normalizer(2.0), 1.0);
  // c(3) = 2 H(2) - 2*2/3 = 3 - 4/3
  EXPECT_NEAR(iforest_normalizer(3.0), 3.0 - 4.0 / 3.0, 1e-15);
}

TEST(IForest, FarPointScoresHighest) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(seed);
    Matrix z = gaussian(100, 2, rng);
    z(37, 0) = 1e6;
    const auto s = iforest_scores(z, 100, 256, rng).scores;
    hits += argmax(s) == 37;
  }
  EXPECT_GE(hits, 95);
}

TEST(IForest, Deterministic) {
  RngStream data(4);
  const Matrix z = gaussian(60, 3, data);
  RngStream a(9), b(9);
  EXPECT_EQ(iforest_scores(z, 50, 32, a).scores, iforest_scores(z, 50, 32, b).scores);
}

TEST(Ecod, MedianPointIsMinimal) {
  Matrix z(9, 2);
  for (int i = 0; i < 9; ++i) z(i, 0) = i - 4, z(i, 1) = 2 * (i - 4);
  const auto s = ecod_scores(z).scores;
  EXPECT_EQ(std::min_element(s.begin(), s.end()) - s.begin(), 4);
}

TEST(Ecod, TailScoresHigher) {
  const auto s = ecod_scores(column({1, 2, 3, 4, 5, 6, 7, 8, 9, 10})).scores;
  EXPECT_GT(s[9], s[4]);
  EXPECT_NEAR(s[9], std::log(10.0), 1e-12);
}

TEST(Ecod, ShiftInvariant) {
  RngStream rng(5);
  const Matrix z = gaussian(40, 3, rng);
  Matrix shifted = z;
  shifted.col(0).array() += 7.0;
  shifted.col(2).array() -= 2.0;
  EXPECT_EQ(ecod_scores(z).scores, ecod_scores(shifted).scores);
}

TEST(Hbos, SingleBinAllEqual) {
  RngStream rng(6);
  const auto s = hbos_scores(gaussian(30, 2, rng), 1).scores;
  for (double v : s) EXPECT_EQ(v, s[0]);
}

TEST(Hbos, SparseBinMaximal) {
  Matrix z = Matrix::Zero(100, 1);
  z(99, 0) = 100;
  const auto s = hbos_scores(z, 2).scores;
  for (int i = 0; i < 99; ++i) EXPECT_LT(s[i], s[99]);
}

TEST(Hbos, AffineRescalingInvariant) {
  RngStream rng(7);
  const Matrix z = gaussian(50, 2, rng);
  Matrix scaled = z;
  scaled.col(0) = scaled.col(0) * 3.0 + Vector::Constant(50, 1.0);
  const auto a = hbos_scores(z, 7).scores;
  const auto b = hbos_scores(scaled, 7).scores;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Kde, IdenticalPointsEqualScores) {
  Matrix z(5, 2);
  z << 0, 0, 1, 1, 1, 1, 3, 0, -2, 1;
  const auto s = kde_scores(z).scores;
  EXPECT_DOUBLE_EQ(s[1], s[2]);
}

TEST(Kde, IsolatedPointScoresHigher) {
  const auto s = kde_scores(column({0, 0, 0, 10})).scores;
  EXPECT_GT(s[3], s[0]);
}

TEST(Kde, DensityIntegratesToOne) {
  RngStream rng(8);
  const Matrix ref = gaussian(50, 1, rng);
  const Vector h = scott_bandwidths(ref);
  const double step = 1e-3;
  double area = 0.0;
  for (double x = -15; x <= 15; x += step) {
    Eigen::RowVectorXd pt(1);
    pt(0) = x;
    area += std::exp(kde_log_density(ref, h, pt)) * step;
  }
  EXPECT_NEAR(area, 1.0, 1e-2);
}

TEST(Kde, BandwidthFloor) {
  const Vector h = scott_bandwidths(Matrix::Constant(10, 2, 3.0));
  EXPECT_EQ(h(0), kBandwidthFloor);
}

TEST(T2Latent, CentreScoresZeroAndScalarForm) {
  const Matrix z = column({1, 2, 3, 4, 5});
  const auto s = t2_latent_scores(z).scores;
  EXPECT_NEAR(s[2], 0.0, 1e-15);
  // s^2 = 2.5
  EXPECT_NEAR(s[0], 4.0 / 2.5, 1e-12);
}

TEST(T2Latent, SumIdentity) {
  RngStream rng(9);
  for (Index d : {1, 2, 4}) {
    const Matrix z = gaussian(60, d, rng);
    const auto s = t2_latent_scores(z).scores;
    const double sum = std::accumulate(s.begin(), s.end(), 0.0);
    EXPECT_NEAR(sum / (d * 59.0), 1.0, 1e-6);
  }
}

TEST(T2Latent, RidgeOnCollinearColumns) {
  RngStream rng(10);
  Matrix z = gaussian(30, 2, rng);
  z.col(1) = z.col(0);
  const auto cov = regularized_covariance(z);
  EXPECT_TRUE(cov.ridge_applied);
  for (double v : t2_latent_scores(z).scores) EXPECT_TRUE(std::isfinite(v));
}

TEST(Boxplot, Examples) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  const auto f = boxplot_fences(v);
  EXPECT_NEAR(empirical_quantile(v, 0.25), 25.75, 1e-12);
  EXPECT_NEAR(empirical_quantile(v, 0.75), 75.25, 1e-12);
  EXPECT_NEAR(f.lower, 25.75 - 1.5 * 49.5, 1e-12);
  EXPECT_NEAR(f.upper, 75.25 + 1.5 * 49.5, 1e-12);
  for (auto x : boxplot_flags(v).flags) EXPECT_EQ(x, 0);
  for (auto x : boxplot_flags(std::vector<double>(10, 4.0)).flags) EXPECT_EQ(x, 0);
  std::vector<double> w(20, 0.0);
  w.push_back(1000.0);
  const auto b = boxplot_flags(w);
  EXPECT_EQ(b.flags.back(), 1);
  EXPECT_EQ(std::accumulate(b.flags.begin(), b.flags.end(), 0), 1);
}

TEST(Threshold, QuantileRules) {
  std::vector<double> s(20);
  std::iota(s.begin(), s.end(), 1.0);
  const Flags f = threshold_by_quantile(s, 0.10);
  for (int i = 0; i < 18; ++i) EXPECT_EQ(f[i], 0);
  EXPECT_EQ(f[18], 1);
  EXPECT_EQ(f[19], 1);
  for (auto x : threshold_by_quantile(std::vector<double>(10, 1.0), 0.05)) EXPECT_EQ(x, 0);
  RngStream rng(11);
  std::vector<double> c(100);
  for (auto& x : c) x = rng.normal();
  const Flags g = threshold_by_quantile(c, 0.05);
  EXPECT_LE(std::accumulate(g.begin(), g.end(), 0), 6);
}

TEST(Aggregate, Rules) {
  const std::vector<Flags> one{{1}, {0}, {0}};
  const std::vector<Flags> two{{1}, {1}, {0}};
  EXPECT_EQ(aggregate(one, ConsensusRule::kAny)[0], 1);
  EXPECT_EQ(aggregate(two, ConsensusRule::kMajority)[0], 1);
  EXPECT_EQ(aggregate(one, ConsensusRule::kMajority)[0], 0);
  EXPECT_EQ(aggregate(two, ConsensusRule::kAll)[0], 0);
  EXPECT_EQ(majority_votes_needed(3), 2u);
  EXPECT_EQ(majority_votes_needed(4), 3u);
}

TEST(Aggregate, RulesAreNested) {
  RngStream rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Flags> sets(5, Flags(30));
    for (auto& f : sets)
      for (auto& x : f) x = rng.uniform() < 0.4;
    const Flags any = aggregate(sets, ConsensusRule::kAny);
    const Flags maj = aggregate(sets, ConsensusRule::kMajority);
    const Flags all = aggregate(sets, ConsensusRule::kAll);
    for (int i = 0; i < 30; ++i) {
      EXPECT_GE(any[i], maj[i]);
      EXPECT_GE(maj[i], all[i]);
    }
  }
}

TEST(Cap, Arithmetic) {
  Flags f(100, 0);
  std::vector<double> score(100);
  for (int i = 0; i < 100; ++i) score[i] = i;
  for (int i = 0; i < 30; ++i) f[i * 3] = 1;
  const Flags capped = cap_contamination(f, score, 0.10, 100);
  EXPECT_EQ(std::accumulate(capped.begin(), capped.end(), 0), 10);
  for (int i = 20; i < 30; ++i) EXPECT_EQ(capped[i * 3], 1);
  EXPECT_EQ(cap_contamination(capped, score, 0.10, 100), capped);

  Flags few(100, 0);
  few[4] = few[50] = 1;
  EXPECT_EQ(cap_contamination(few, score, 0.10, 100), few);
}

TEST(Cap, TiesKeepLowerIndices) {
  Flags f(100, 1);
  const std::vector<double> score(100, 0.5);
  const Flags capped = cap_contamination(f, score, 0.05, 100);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(capped[i], i < 5 ? 1 : 0);
}

TEST(Ensemble, RespectsCapAndIsDeterministic) {
  RngStream rng(13);
  const Matrix z = gaussian(120, 3, rng);
  EnsembleConfig cfg;
  cfg.seed = 5;
  const auto a = run_ensemble(z, cfg);
  const auto b = run_ensemble(z, cfg);
  EXPECT_EQ(a.flags, b.flags);
  EXPECT_EQ(a.detectors.size(), 7u);
  EXPECT_LE(static_cast<std::size_t>(std::accumulate(a.flags.begin(), a.flags.end(), 0)), contamination_limit(0.10, 120));
}

TEST(Ensemble, BoxplotJoinsOnlyInOneDimension) {
  RngStream rng(14);
  EnsembleConfig cfg;
  EXPECT_EQ(run_ensemble(gaussian(60, 1, rng), cfg).detectors.size(), 8u);
  EXPECT_EQ(run_ensemble(gaussian(60, 2, rng), cfg).detectors.size(), 7u);
}

TEST(Ensemble, PermutationEquivariantScores) {
  RngStream rng(15);
  const Matrix z = gaussian(40, 2, rng);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  const Matrix zp = select_rows(z, perm);
  for (auto fn : {+[](const Matrix& m) { return ecod_scores(m).scores; },
                  +[](const Matrix& m) { return hbos_scores(m, 6).scores; },
                  +[](const Matrix& m) { return kde_scores(m).scores; }}) {
    const auto a = fn(z);
    const auto b = fn(zp);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(b[i], a[perm[i]], 1e-9);
  }
}

TEST(Names, RoundTrip) {
  for (auto d : {Detector::kKnn, Detector::kLof, Detector::kIForest, Detector::kEcod, Detector::kHbos, Detector::kKde,
                 Detector::kT2Latent, Detector::kBoxplot})
    EXPECT_EQ(detector_from_string(to_string(d)), d);
  EXPECT_THROW(detector_from_string("svm"), ConfigError);
  EXPECT_EQ(rule_from_string("majority"), ConsensusRule::kMajority);
}
