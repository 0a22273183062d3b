#pragma once

// End-to-end retrospective run:
//   1. train the ARD-VAE on all of X and keep the relevant latent axes
//   2. PELT on latent magnitudes (c0) and the detector ensemble (e0)
//   3. warm-started refinement on the provisional inliers
//   4. in-control statistics, refit ensemble, T² and reconstruction
//      exceedances, and the 2-of-4 consensus label

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vscout/ardvae.hpp"
#include "vscout/changepoint.hpp"
#include "vscout/detectors.hpp"
#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

inline constexpr std::size_t kMinPipelineRows = 20;

struct PipelineConfig {
  TrainConfig train;
  EnsembleConfig ensemble;
  PeltConfig pelt;
  double alpha_t2 = 0.05;
  double alpha_rec = 0.05;
  int refine_epochs = -1;  // < 0: same budget as the first stage
  std::optional<double> alpha_global;
  bool recompute_changepoints = false;
  bool cap_final_ensemble = true;

  void validate() const {
    train.validate();
    ensemble.validate();
    pelt.validate();
    if (!(alpha_t2 > 0.0 && alpha_t2 < 1.0)) throw ConfigError("alpha_t2 must lie in (0,1)");
    if (!(alpha_rec > 0.0 && alpha_rec < 1.0)) throw ConfigError("alpha_rec must lie in (0,1)");
    if (alpha_global && !(*alpha_global > 0.0 && *alpha_global < 1.0)) {
      throw ConfigError("alpha_global must lie in (0,1)");
    }
  }
};

// ---------------------------------------------------------------------------
// False-alarm algebra.

inline double binomial_upper_tail(std::size_t m, std::size_t k_min, double p) {
  double total = 0.0;
  for (std::size_t k = k_min; k <= m; ++k) {
    double coef = 1.0;
    for (std::size_t i = 1; i <= k; ++i) coef = coef * static_cast<double>(m - k + i) / static_cast<double>(i);
    total += coef * std::pow(p, static_cast<double>(k)) * std::pow(1.0 - p, static_cast<double>(m - k));
  }
  return total;
}

// Ensemble false-alarm rate under independent detectors at rate alpha0.
inline double ensemble_false_alarm(double alpha0, std::size_t m, ConsensusRule rule) {
  switch (rule) {
    case ConsensusRule::kAny: return static_cast<double>(m) * alpha0;
    case ConsensusRule::kAll: return std::pow(alpha0, static_cast<double>(m));
    case ConsensusRule::kMajority: return binomial_upper_tail(m, majority_votes_needed(m), alpha0);
  }
  return 0.0;
}

struct Calibration {
  double alpha_base = 0.0;
  double alpha_ens = 0.0;
  double alpha0 = 0.0;
};

// alpha_global ≈ 6·alpha_base² over the six indicator pairs.
inline double alpha_base_for(double alpha_global) { return std::sqrt(alpha_global / 6.0); }

inline Calibration calibrate_alphas(double alpha_global, std::size_t m, ConsensusRule rule) {
  if (!(alpha_global > 0.0 && alpha_global < 1.0)) throw CalibrationError("alpha_global must lie in (0,1)");
  if (m < 1) throw CalibrationError("need at least one detector");
  Calibration c;
  c.alpha_base = alpha_base_for(alpha_global);
  c.alpha_ens = c.alpha_base;
  switch (rule) {
    case ConsensusRule::kAny:
      c.alpha0 = c.alpha_ens / static_cast<double>(m);
      break;
    case ConsensusRule::kAll:
      c.alpha0 = std::pow(c.alpha_ens, 1.0 / static_cast<double>(m));
      break;
    case ConsensusRule::kMajority: {
      // The tail is increasing in alpha0 on (0, 1).
      double lo = 0.0;
      double hi = 1.0;
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        (ensemble_false_alarm(mid, m, rule) < c.alpha_ens ? lo : hi) = mid;
      }
      c.alpha0 = 0.5 * (lo + hi);
      break;
    }
  }
  if (!(c.alpha0 > 0.0 && c.alpha0 < 1.0)) {
    throw CalibrationError("no per-detector rate in (0,1) reaches the ensemble target");
  }
  return c;
}

// ---------------------------------------------------------------------------
// In-control baseline and monitoring statistics.

struct IcBaseline {
  Vector mu_ic;
  Matrix sigma_ic;
  Matrix sigma_factor;
  double t2_threshold = 0.0;
  double recon_cutoff = 0.0;
  std::size_t n_in = 0;
  bool ridge_applied = false;
  bool theoretical_threshold = false;
};

inline double hotelling_t2(const Vector& z, const IcBaseline& b) {
  if (z.size() != b.mu_ic.size()) throw DegenerateInputError("hotelling_t2: dimension mismatch");
  const Vector diff = z - b.mu_ic;
  return std::max(0.0, diff.dot(cholesky_solve(b.sigma_factor, diff)));
}

// Mean, (ridge-regularized) covariance and T² threshold from refined inliers.
inline IcBaseline estimate_ic_stats(const Matrix& z_in, double alpha_t2) {
  if (z_in.rows() < 3) throw DegenerateInputError("in-control statistics need at least 3 inliers");
  if (!(alpha_t2 > 0.0 && alpha_t2 < 1.0)) throw ConfigError("alpha_t2 must lie in (0,1)");
  IcBaseline b;
  b.n_in = static_cast<std::size_t>(z_in.rows());
  b.mu_ic = column_means(z_in);
  RegularizedCovariance cov = regularized_covariance(z_in);
  b.sigma_ic = std::move(cov.covariance);
  b.sigma_factor = std::move(cov.factor);
  b.ridge_applied = cov.ridge_applied;

  const auto d_eff = static_cast<std::size_t>(z_in.cols());
  if (b.n_in < 5 * d_eff) {
    const boost::math::chi_squared chi2(static_cast<double>(d_eff));
    b.t2_threshold = boost::math::quantile(chi2, 1.0 - alpha_t2);
    b.theoretical_threshold = true;
  } else {
    std::vector<double> t2(b.n_in);
    for (Index i = 0; i < z_in.rows(); ++i) t2[static_cast<std::size_t>(i)] = hotelling_t2(z_in.row(i).transpose(), b);
    b.t2_threshold = empirical_quantile(t2, 1.0 - alpha_t2);
  }
  return b;
}

// Squared reconstruction error with the posterior mean fed to the decoder.
inline std::vector<double> reconstruction_errors(const VaeState& state, const Matrix& x) {
  const Matrix recon = decode(state, encode(state, x).mu);
  std::vector<double> r(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) r[static_cast<std::size_t>(i)] = (x.row(i) - recon.row(i)).squaredNorm();
  return r;
}

inline Flags consensus_label(std::span<const std::uint8_t> c, std::span<const std::uint8_t> e,
                             std::span<const std::uint8_t> u, std::span<const std::uint8_t> q) {
  const std::size_t n = c.size();
  if (e.size() != n || u.size() != n || q.size() != n) throw DegenerateInputError("consensus_label: length mismatch");
  Flags y(n, 0);
  for (std::size_t i = 0; i < n; ++i) y[i] = (c[i] != 0) + (e[i] != 0) + (u[i] != 0) + (q[i] != 0) >= 2 ? 1 : 0;
  return y;
}

// Continuous score in [0, 4]: the two binary flags plus percentile ranks of
// T² and reconstruction error.
inline std::vector<double> anomaly_score(std::span<const std::uint8_t> c, std::span<const std::uint8_t> e,
                                         std::span<const double> t2, std::span<const double> recon) {
  const std::size_t n = c.size();
  if (e.size() != n || t2.size() != n || recon.size() != n) throw DegenerateInputError("anomaly_score: length mismatch");
  const auto t2_rank = percentile_ranks(t2);
  const auto r_rank = percentile_ranks(recon);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = (c[i] != 0) + (e[i] != 0) + t2_rank[i] + r_rank[i];
  return score;
}

// ---------------------------------------------------------------------------
// Orchestration.

struct FlagSet {
  Flags c0;    // provisional changepoint flags
  Flags e0;    // provisional ensemble flags
  Flags mask;  // provisional inliers, 1 - max(e0, c0)
  Flags c;
  Flags e;
  Flags u;
  Flags q;
  Flags y_hat;
  std::vector<double> anomaly_score;
};

struct DetectorCount {
  std::string detector_id;
  std::size_t provisional = 0;
  std::size_t final = 0;
};

struct Diagnostics {
  std::vector<double> loss_history;
  std::vector<double> refine_loss_history;
  std::vector<std::size_t> relevant_initial;
  std::vector<std::size_t> relevant_final;
  bool relevant_changed = false;
  Vector kl_per_axis;
  Vector jacobian_norms;
  Segmentation segmentation;
  std::optional<std::size_t> tau_star;
  std::vector<DetectorCount> detector_counts;
  std::optional<Calibration> calibration;
  std::string calibration_note;
  double alpha_t2 = 0.0;
  double alpha_rec = 0.0;
  double per_detector_alpha = 0.0;
};

struct VscoutResult {
  FlagSet flags;
  IcBaseline baseline;
  LatentSummary latent;  // refined model evaluated on all of X
  std::vector<double> t2;
  std::vector<double> recon_error;
  Diagnostics diagnostics;
  VaeState state;
};

inline std::size_t count_flags(std::span<const std::uint8_t> f) {
  std::size_t total = 0;
  for (auto v : f) total += v ? 1 : 0;
  return total;
}

inline VscoutResult run_vscout(const DataMatrix& data, PipelineConfig cfg, RngStream& rng) {
  cfg.validate();
  const Matrix& x = data.matrix();
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < kMinPipelineRows) throw DegenerateInputError("pipeline needs at least 20 observations");

  VscoutResult out;
  Diagnostics& diag = out.diagnostics;
  if (cfg.alpha_global) {
    std::size_t m = cfg.ensemble.detectors.size();
    const Calibration cal = calibrate_alphas(*cfg.alpha_global, m, cfg.ensemble.rule);
    cfg.alpha_t2 = cal.alpha_base;
    cfg.alpha_rec = cal.alpha_base;
    cfg.ensemble.per_detector_alpha = cal.alpha0;
    diag.calibration = cal;
    diag.calibration_note = "PELT penalty left unchanged: no mapping from alpha_cp to penalty";
  }
  diag.alpha_t2 = cfg.alpha_t2;
  diag.alpha_rec = cfg.alpha_rec;
  diag.per_detector_alpha = cfg.ensemble.per_detector_alpha;
  cfg.ensemble.seed ^= rng.next();

  // Step 1.
  TrainResult first = train(init(cfg.train, x.cols(), rng), x, cfg.train, rng);
  diag.loss_history = first.loss_history;
  diag.relevant_initial = first.summary.relevant;
  const Matrix& z = first.summary.mu_star;

  // Step 2b.
  diag.segmentation = pelt_segment(latent_magnitude(z), cfg.pelt);
  FlagSet& f = out.flags;
  f.c0 = changepoint_flags(diag.segmentation, n);

  // Step 2a.
  const EnsembleResult provisional = run_ensemble(z, cfg.ensemble);
  f.e0 = provisional.flags;

  f.mask.assign(n, 0);
  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < n; ++i) {
    f.mask[i] = (f.e0[i] || f.c0[i]) ? 0 : 1;
    if (f.mask[i]) inliers.push_back(i);
  }
  if (inliers.empty()) throw PipelineError("no inliers retained");
  if (inliers.size() < 3) throw DegenerateInputError("fewer than 3 provisional inliers");

  // Step 3.
  TrainConfig refine_cfg = cfg.train;
  if (cfg.refine_epochs >= 0) refine_cfg.max_epochs = cfg.refine_epochs;
  const Matrix x_in = select_rows(x, inliers);
  RefineResult refined = refine(first.state, x_in, first.summary.relevant, refine_cfg, rng);
  diag.refine_loss_history = refined.loss_history;
  diag.relevant_changed = refined.relevant_changed;
  out.state = std::move(refined.state);
  out.latent = summarize(out.state, x, refined.summary.relevant);
  diag.relevant_final = out.latent.relevant;
  diag.kl_per_axis = out.latent.kl_per_axis;
  diag.jacobian_norms = jacobian_column_norms(out.state, out.latent.mu);
  const Matrix& z_in_all = out.latent.mu_star;

  // Step 4.
  out.baseline = estimate_ic_stats(select_rows(z_in_all, inliers), cfg.alpha_t2);

  const EnsembleResult refit = run_ensemble(z_in_all, inliers, cfg.ensemble);
  f.e = cfg.cap_final_ensemble ? refit.flags : refit.uncapped;

  out.t2.resize(n);
  f.u.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    out.t2[i] = hotelling_t2(z_in_all.row(static_cast<Index>(i)).transpose(), out.baseline);
    f.u[i] = out.t2[i] > out.baseline.t2_threshold ? 1 : 0;
  }

  out.recon_error = reconstruction_errors(out.state, x);
  std::vector<double> inlier_r;
  for (auto i : inliers) inlier_r.push_back(out.recon_error[i]);
  out.baseline.recon_cutoff = empirical_quantile(inlier_r, 1.0 - cfg.alpha_rec);
  f.q = threshold_at(out.recon_error, out.baseline.recon_cutoff);

  if (cfg.recompute_changepoints) {
    f.c = changepoint_flags(pelt_segment(latent_magnitude(z_in_all), cfg.pelt), n);
  } else {
    f.c = f.c0;
  }
  if (!diag.segmentation.changepoints.empty()) diag.tau_star = diag.segmentation.earliest();

  f.y_hat = consensus_label(f.c, f.e, f.u, f.q);
  f.anomaly_score = anomaly_score(f.c, f.e, out.t2, out.recon_error);

  for (std::size_t k = 0; k < provisional.detectors.size(); ++k) {
    DetectorCount dc{provisional.detectors[k].detector_id, count_flags(provisional.detectors[k].flags), 0};
    for (const auto& d : refit.detectors)
      if (d.detector_id == dc.detector_id) dc.final = count_flags(d.flags);
    diag.detector_counts.push_back(dc);
  }
  return out;
}

}  // namespace vscout
