#pragma once

// Feed-forward variational autoencoder with an automatic-relevance-
// determination (ARD) prior on the latent axes.
//
//   encoder:  x -> relu(W1 x + b1) -> (mu, log_var)
//   decoder:  z -> relu(Wd z + bd) -> W2 h + b2
//   prior:    z_l ~ N(0, 1/alpha_l), alpha_l re-estimated once per epoch
//
// Gradients are derived by hand; the training noise is recorded so that
// backprop() reproduces the exact pathwise gradient of elbo_loss().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

struct TrainConfig {
  int hidden = 64;
  int latent = 32;
  double learning_rate = 1e-4;
  double beta = 1.0;
  double kl_threshold = 1.0;
  int patience = 10;
  int max_epochs = 500;
  int batch_size = 64;
  double a0 = 1e-3;
  double b0 = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (latent < 1) throw ConfigError("latent must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (!(kl_threshold >= 0.0)) throw ConfigError("kl_threshold must be >= 0");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(a0 >= 0.0) || !(b0 >= 0.0)) throw ConfigError("a0 and b0 must be >= 0");
  }
};

// Network weights (out x in matrices) and biases.
struct VaeParams {
  Matrix enc_w1;
  Vector enc_b1;
  Matrix enc_w_mu;
  Vector enc_b_mu;
  Matrix enc_w_lv;
  Vector enc_b_lv;
  Matrix dec_w1;
  Vector dec_b1;
  Matrix dec_w2;
  Vector dec_b2;

  static VaeParams zeros(Index p, Index hidden, Index latent) {
    return {Matrix::Zero(hidden, p),      Vector::Zero(hidden), Matrix::Zero(latent, hidden),
            Vector::Zero(latent),         Matrix::Zero(latent, hidden), Vector::Zero(latent),
            Matrix::Zero(hidden, latent), Vector::Zero(hidden), Matrix::Zero(p, hidden),
            Vector::Zero(p)};
  }

  bool operator==(const VaeParams&) const = default;
};

// Calls f(name, a.field, b.field, ...) for every tensor, in a fixed order.
template <typename F, typename... P>
void for_each_tensor(F&& f, P&... params) {
  f("enc_w1", params.enc_w1...);
  f("enc_b1", params.enc_b1...);
  f("enc_w_mu", params.enc_w_mu...);
  f("enc_b_mu", params.enc_b_mu...);
  f("enc_w_lv", params.enc_w_lv...);
  f("enc_b_lv", params.enc_b_lv...);
  f("dec_w1", params.dec_w1...);
  f("dec_b1", params.dec_b1...);
  f("dec_w2", params.dec_w2...);
  f("dec_b2", params.dec_b2...);
}

struct VaeState {
  Index inputs = 0;
  Index hidden = 0;
  Index latent = 0;
  VaeParams params;
  Vector alpha;
  VaeParams adam_m;
  VaeParams adam_v;
  std::int64_t step_count = 0;

  bool operator==(const VaeState& other) const {
    return inputs == other.inputs && hidden == other.hidden && latent == other.latent &&
           params == other.params && alpha == other.alpha && adam_m == other.adam_m &&
           adam_v == other.adam_v && step_count == other.step_count;
  }
};

struct Posterior {
  Matrix mu;
  Matrix log_var;
};

struct LatentSummary {
  Matrix mu;
  Matrix log_var;
  std::vector<std::size_t> relevant;  // ascending latent indices
  Vector kl_per_axis;                 // mean KL per latent axis
  Matrix mu_star;                     // mu restricted to `relevant`

  std::size_t d_eff() const noexcept { return relevant.size(); }
};

inline VaeState init(const TrainConfig& cfg, Index p, RngStream& rng) {
  cfg.validate();
  if (p < 1) throw ConfigError("input dimension must be >= 1");
  const Index h = cfg.hidden;
  const Index d = cfg.latent;
  VaeState s;
  s.inputs = p;
  s.hidden = h;
  s.latent = d;
  s.params = VaeParams::zeros(p, h, d);
  auto glorot = [&rng](Matrix& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    // Column-major fill order is part of the seed contract.
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
  };
  glorot(s.params.enc_w1);
  glorot(s.params.enc_w_mu);
  glorot(s.params.enc_w_lv);
  glorot(s.params.dec_w1);
  glorot(s.params.dec_w2);
  s.alpha = Vector::Ones(d);
  s.adam_m = VaeParams::zeros(p, h, d);
  s.adam_v = VaeParams::zeros(p, h, d);
  return s;
}

namespace detail {

inline Matrix affine(const Matrix& in, const Matrix& w, const Vector& b) {
  Matrix out = in * w.transpose();
  out.rowwise() += b.transpose();
  return out;
}

inline Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

inline Matrix relu_mask(const Matrix& a) {
  return (a.array() > 0.0).cast<double>().matrix();
}

}  // namespace detail

inline Posterior encode(const VaeState& s, const Matrix& x) {
  if (x.cols() != s.inputs) throw DegenerateInputError("encode: column count does not match model");
  const Matrix h1 = detail::relu(detail::affine(x, s.params.enc_w1, s.params.enc_b1));
  Posterior post{detail::affine(h1, s.params.enc_w_mu, s.params.enc_b_mu),
                 detail::affine(h1, s.params.enc_w_lv, s.params.enc_b_lv)};
  if (!post.mu.allFinite() || !post.log_var.allFinite()) {
    throw NumericalOverflowError("encoder produced non-finite activations");
  }
  return post;
}

inline Matrix reparameterize(const Matrix& mu, const Matrix& log_var, RngStream& rng) {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols()) {
    throw DegenerateInputError("reparameterize: shape mismatch");
  }
  Matrix z(mu.rows(), mu.cols());
  for (Index i = 0; i < mu.rows(); ++i)
    for (Index j = 0; j < mu.cols(); ++j) z(i, j) = mu(i, j) + std::exp(0.5 * log_var(i, j)) * rng.normal();
  return z;
}

inline Matrix decode(const VaeState& s, const Matrix& z) {
  if (z.cols() != s.latent) throw DegenerateInputError("decode: latent width does not match model");
  const Matrix h2 = detail::relu(detail::affine(z, s.params.dec_w1, s.params.dec_b1));
  Matrix out = detail::affine(h2, s.params.dec_w2, s.params.dec_b2);
  if (!out.allFinite()) throw NumericalOverflowError("decoder produced non-finite output");
  return out;
}

// KL( N(mu, sigma^2) || N(0, 1/alpha) ) per observation and latent axis.
inline Matrix kl_per_dimension(const Matrix& mu, const Matrix& log_var, const Vector& alpha) {
  Matrix kl(mu.rows(), mu.cols());
  for (Index j = 0; j < mu.cols(); ++j) {
    const double a = alpha(j);
    const double log_a = std::log(a);
    for (Index i = 0; i < mu.rows(); ++i) {
      const double var = std::exp(log_var(i, j));
      kl(i, j) = 0.5 * (a * (mu(i, j) * mu(i, j) + var) - 1.0 - log_a - log_var(i, j));
    }
  }
  return kl;
}

// Everything backprop() needs from a forward pass.
struct ElboCache {
  Matrix x;
  Matrix a1;
  Matrix h1;
  Matrix mu;
  Matrix log_var;
  Matrix eps;
  Matrix z;
  Matrix a2;
  Matrix h2;
  Matrix x_tilde;
  Vector alpha;
  double beta = 1.0;
};

struct ElboResult {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  ElboCache cache;
};

// Loss for a fixed draw of the reparameterization noise.
inline ElboResult elbo_loss_with_noise(const VaeState& s, const Matrix& x, double beta, const Matrix& eps) {
  if (x.rows() == 0) throw DegenerateInputError("elbo_loss: empty batch");
  ElboResult r;
  ElboCache& c = r.cache;
  c.x = x;
  c.beta = beta;
  c.alpha = s.alpha;
  c.a1 = detail::affine(x, s.params.enc_w1, s.params.enc_b1);
  c.h1 = detail::relu(c.a1);
  c.mu = detail::affine(c.h1, s.params.enc_w_mu, s.params.enc_b_mu);
  c.log_var = detail::affine(c.h1, s.params.enc_w_lv, s.params.enc_b_lv);
  c.eps = eps;
  c.z = c.mu + ((0.5 * c.log_var.array()).exp() * eps.array()).matrix();
  c.a2 = detail::affine(c.z, s.params.dec_w1, s.params.dec_b1);
  c.h2 = detail::relu(c.a2);
  c.x_tilde = detail::affine(c.h2, s.params.dec_w2, s.params.dec_b2);

  const double rows = static_cast<double>(x.rows());
  r.reconstruction = 0.5 * (x - c.x_tilde).squaredNorm() / rows;
  r.kl = kl_per_dimension(c.mu, c.log_var, s.alpha).sum() / rows;
  r.loss = r.reconstruction + beta * r.kl;
  if (!std::isfinite(r.loss)) throw NumericalOverflowError("ELBO loss is not finite");
  return r;
}

inline ElboResult elbo_loss(const VaeState& s, const Matrix& x, double beta, RngStream& rng) {
  Matrix eps(x.rows(), s.latent);
  for (Index i = 0; i < eps.rows(); ++i)
    for (Index j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();
  return elbo_loss_with_noise(s, x, beta, eps);
}

// Reverse-mode gradient of elbo_loss with eps and alpha held fixed.
inline VaeParams backprop(const VaeState& s, const ElboCache& c) {
  const double inv_rows = 1.0 / static_cast<double>(c.x.rows());
  VaeParams g;

  const Matrix d_out = (c.x_tilde - c.x) * inv_rows;
  g.dec_w2 = d_out.transpose() * c.h2;
  g.dec_b2 = d_out.colwise().sum().transpose();

  const Matrix d_a2 = (d_out * s.params.dec_w2).cwiseProduct(detail::relu_mask(c.a2));
  g.dec_w1 = d_a2.transpose() * c.z;
  g.dec_b1 = d_a2.colwise().sum().transpose();

  const Matrix d_z = d_a2 * s.params.dec_w1;
  const double kl_scale = c.beta * inv_rows;
  const auto sigma = (0.5 * c.log_var.array()).exp();

  Matrix d_mu = d_z;
  d_mu.array() += kl_scale * (c.mu.array().rowwise() * c.alpha.transpose().array());

  Matrix d_lv = (d_z.array() * c.eps.array() * 0.5 * sigma).matrix();
  d_lv.array() += kl_scale * 0.5 *
                  ((c.log_var.array().exp().rowwise() * c.alpha.transpose().array()) - 1.0);

  g.enc_w_mu = d_mu.transpose() * c.h1;
  g.enc_b_mu = d_mu.colwise().sum().transpose();
  g.enc_w_lv = d_lv.transpose() * c.h1;
  g.enc_b_lv = d_lv.colwise().sum().transpose();

  const Matrix d_a1 =
      (d_mu * s.params.enc_w_mu + d_lv * s.params.enc_w_lv).cwiseProduct(detail::relu_mask(c.a1));
  g.enc_w1 = d_a1.transpose() * c.x;
  g.enc_b1 = d_a1.colwise().sum().transpose();
  return g;
}

// Conjugate Gamma-Normal update of the ARD precisions.
inline Vector update_precisions(const Matrix& mu, const Matrix& log_var, double a0, double b0) {
  if (mu.rows() < 1) throw DegenerateInputError("update_precisions needs at least one row");
  const double half_n = 0.5 * static_cast<double>(mu.rows());
  Vector alpha(mu.cols());
  for (Index j = 0; j < mu.cols(); ++j) {
    const double second_moment = mu.col(j).squaredNorm() + log_var.col(j).array().exp().sum();
    alpha(j) = (a0 + half_n) / (b0 + 0.5 * second_moment);
    // Degenerate limits (a0 = b0 = 0 with a vanishing moment) stay positive.
    if (!std::isfinite(alpha(j)) || alpha(j) <= 0.0) alpha(j) = std::numeric_limits<double>::max();
  }
  return alpha;
}

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline void adam_step(VaeState& s, VaeParams& grads, double learning_rate, const AdamSettings& adam = {}) {
  ++s.step_count;
  const double t = static_cast<double>(s.step_count);
  const double correction1 = 1.0 - std::pow(adam.beta1, t);
  const double correction2 = 1.0 - std::pow(adam.beta2, t);
  for_each_tensor(
      [&](std::string_view, auto& param, auto& m, auto& v, auto& g) {
        m = adam.beta1 * m + (1.0 - adam.beta1) * g;
        v = adam.beta2 * v + (1.0 - adam.beta2) * g.cwiseProduct(g);
        param.array() -= learning_rate * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + adam.epsilon);
      },
      s.params, s.adam_m, s.adam_v, grads);
}

// Relevance selection: R = { l : mean_i KL_il > tau }, falling back to the
// single most informative axis when nothing passes.
inline LatentSummary summarize(const VaeState& s, const Matrix& x, std::vector<std::size_t> relevant) {
  LatentSummary out;
  Posterior post = encode(s, x);
  out.kl_per_axis = kl_per_dimension(post.mu, post.log_var, s.alpha).colwise().mean().transpose();
  out.mu = std::move(post.mu);
  out.log_var = std::move(post.log_var);
  out.relevant = std::move(relevant);
  out.mu_star = select_cols(out.mu, out.relevant);
  return out;
}

inline std::vector<std::size_t> relevant_axes(const Vector& kl_per_axis, double tau) {
  std::vector<std::size_t> relevant;
  for (Index j = 0; j < kl_per_axis.size(); ++j)
    if (kl_per_axis(j) > tau) relevant.push_back(static_cast<std::size_t>(j));
  if (relevant.empty() && kl_per_axis.size() > 0) {
    Index best = 0;
    kl_per_axis.maxCoeff(&best);
    relevant.push_back(static_cast<std::size_t>(best));
  }
  return relevant;
}

inline LatentSummary select_relevant(const VaeState& s, const Matrix& x, double tau) {
  LatentSummary out = summarize(s, x, {});
  out.relevant = relevant_axes(out.kl_per_axis, tau);
  out.mu_star = select_cols(out.mu, out.relevant);
  return out;
}

// Exact Jacobian of decode() at one latent point; relu'(0) = 0.
inline Matrix decoder_jacobian(const VaeState& s, const Vector& latent_mean) {
  if (latent_mean.size() != s.latent) throw DegenerateInputError("decoder_jacobian: latent width mismatch");
  const Vector a2 = s.params.dec_w1 * latent_mean + s.params.dec_b1;
  const Vector active = (a2.array() > 0.0).cast<double>().matrix();
  return s.params.dec_w2 * active.asDiagonal() * s.params.dec_w1;
}

// Per-axis L2 norms of the Jacobian columns averaged over rows of `mu`.
inline Vector jacobian_column_norms(const VaeState& s, const Matrix& mu) {
  Vector norms = Vector::Zero(s.latent);
  if (mu.rows() == 0) return norms;
  for (Index i = 0; i < mu.rows(); ++i) norms += decoder_jacobian(s, mu.row(i).transpose()).colwise().norm().transpose();
  return norms / static_cast<double>(mu.rows());
}

struct TrainResult {
  VaeState state;
  LatentSummary summary;
  std::vector<double> loss_history;
  bool stopped_early = false;
};

namespace detail {

// Shuffled mini-batch Adam with per-epoch precision updates and patience.
inline std::vector<double> run_epochs(VaeState& s, const Matrix& x, const TrainConfig& cfg, RngStream& rng,
                                      bool& stopped_early) {
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  stopped_early = false;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    try {
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t stop = std::min(start + batch, n);
        const Matrix xb = select_rows(x, std::span<const std::size_t>(order).subspan(start, stop - start));
        ElboResult r = elbo_loss(s, xb, cfg.beta, rng);
        total += r.loss * static_cast<double>(stop - start);
        VaeParams grads = backprop(s, r.cache);
        adam_step(s, grads, cfg.learning_rate);
      }
      const Posterior post = encode(s, x);
      s.alpha = update_precisions(post.mu, post.log_var, cfg.a0, cfg.b0);
    } catch (const NumericalOverflowError& e) {
      throw TrainingDivergedError(std::string("training diverged: ") + e.what(), epoch);
    }
    const double epoch_loss = total / static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw TrainingDivergedError("training loss is not finite", epoch);
    history.push_back(epoch_loss);

    if (epoch_loss < best - 1e-6) {
      best = epoch_loss;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      stopped_early = true;
      break;
    }
  }
  return history;
}

}  // namespace detail

inline TrainResult train(VaeState state, const Matrix& x, const TrainConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (x.rows() < 1) throw DegenerateInputError("train: empty data");
  if (x.cols() != state.inputs) throw DegenerateInputError("train: column count does not match model");
  TrainResult out;
  out.loss_history = detail::run_epochs(state, x, cfg, rng, out.stopped_early);
  out.summary = select_relevant(state, x, cfg.kl_threshold);
  out.state = std::move(state);
  return out;
}

struct RefineResult {
  VaeState state;
  LatentSummary summary;  // evaluated on the refinement subset
  std::vector<double> loss_history;
  bool relevant_changed = false;
};

// Warm-started second training stage on the retained subset. When the
// relevant set comes out unchanged the first-stage state is returned as-is.
inline RefineResult refine(const VaeState& state, const Matrix& x_in, const std::vector<std::size_t>& previous_relevant,
                           const TrainConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (x_in.rows() < 1) throw DegenerateInputError("refine: empty inlier set");
  RefineResult out;
  VaeState refined = state;
  bool stopped_early = false;
  out.loss_history = detail::run_epochs(refined, x_in, cfg, rng, stopped_early);
  LatentSummary summary = select_relevant(refined, x_in, cfg.kl_threshold);
  if (summary.relevant == previous_relevant) {
    out.state = state;
    out.summary = summarize(state, x_in, previous_relevant);
    out.relevant_changed = false;
  } else {
    out.state = std::move(refined);
    out.summary = std::move(summary);
    out.relevant_changed = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text serialization. Values are written as C99 hex floats, so a save/load
// round trip is bit-exact.

inline constexpr std::string_view kVaeStateMagic = "vscout-vae-state";
inline constexpr int kVaeStateVersion = 1;

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw ConfigError("malformed number in model file: " + token);
  return v;
}

template <typename T>
void write_tensor(std::ostream& os, std::string_view name, const T& t) {
  os << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (Index i = 0; i < t.rows(); ++i) {
    for (Index j = 0; j < t.cols(); ++j) os << (j ? " " : "") << hexfloat(t(i, j));
    os << '\n';
  }
}

template <typename T>
void read_tensor(std::istream& is, std::string_view name, T& t) {
  std::string got;
  Index rows = 0;
  Index cols = 0;
  if (!(is >> got >> rows >> cols) || got != name) {
    throw ConfigError("model file: expected tensor " + std::string(name));
  }
  if constexpr (T::ColsAtCompileTime == 1) {
    if (cols != 1) throw ConfigError("model file: vector expected for " + std::string(name));
    t.resize(rows);
  } else {
    t.resize(rows, cols);
  }
  std::string token;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      if (!(is >> token)) throw ConfigError("model file truncated in " + std::string(name));
      t(i, j) = parse_hexfloat(token);
    }
}

}  // namespace detail

inline void save_state(std::ostream& os, const VaeState& s) {
  os << kVaeStateMagic << ' ' << kVaeStateVersion << '\n';
  os << "dims " << s.inputs << ' ' << s.hidden << ' ' << s.latent << '\n';
  os << "steps " << s.step_count << '\n';
  auto params = s.params;
  auto m = s.adam_m;
  auto v = s.adam_v;
  for_each_tensor([&](std::string_view name, auto& t) { detail::write_tensor(os, name, t); }, params);
  detail::write_tensor(os, "alpha", s.alpha);
  for_each_tensor([&](std::string_view name, auto& t) { detail::write_tensor(os, name, t); }, m);
  for_each_tensor([&](std::string_view name, auto& t) { detail::write_tensor(os, name, t); }, v);
}

inline VaeState load_state(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kVaeStateMagic) throw ConfigError("not a VAE state file");
  if (version != kVaeStateVersion) throw ConfigError("unsupported VAE state version " + std::to_string(version));
  VaeState s;
  std::string key;
  if (!(is >> key >> s.inputs >> s.hidden >> s.latent) || key != "dims") throw ConfigError("model file: missing dims");
  if (!(is >> key >> s.step_count) || key != "steps") throw ConfigError("model file: missing steps");
  for_each_tensor([&](std::string_view name, auto& t) { detail::read_tensor(is, name, t); }, s.params);
  detail::read_tensor(is, "alpha", s.alpha);
  for_each_tensor([&](std::string_view name, auto& t) { detail::read_tensor(is, name, t); }, s.adam_m);
  for_each_tensor([&](std::string_view name, auto& t) { detail::read_tensor(is, name, t); }, s.adam_v);
  if (s.alpha.size() != s.latent || s.params.enc_w1.rows() != s.hidden || s.params.enc_w1.cols() != s.inputs) {
    throw ConfigError("model file: tensor shapes inconsistent with dims");
  }
  return s;
}

}  // namespace vscout
