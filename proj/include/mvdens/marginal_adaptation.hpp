#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <vector>

#include "mvdens/core_math.hpp"
#include "mvdens/mixture.hpp"

namespace mvdens {

/// Bounds applied to every ratio h_i / f_{i,eps}.
struct ClampBounds {
  double lo = 0.02;
  double hi = 50.0;
};

/// Anything usable as the base density f.
template <class B>
concept BaseDensity = requires(const B& b, const Vector& y, int i, int n, RngStream& rng) {
  { b.dim() } -> std::convertible_to<int>;
  { b.logpdf(y) } -> std::convertible_to<double>;
  { b.sample(n, rng) } -> std::convertible_to<Matrix>;
  { b.marginal(i) } -> std::convertible_to<UnivariateMixture>;
};

/// Error density of a MixtureOfNormals viewed as a BaseDensity.
struct MixtureBase {
  const MixtureOfNormals* model;

  int dim() const { return model->dim(); }
  double logpdf(const Vector& e) const { return error_logpdf(*model, e); }
  Matrix sample(int n, RngStream& rng) const {
    return mvdens::sample(*model, Matrix(n, 0), n, rng);
  }
  UnivariateMixture marginal(int i) const { return mvdens::marginal(*model, i); }
};

/// log((1 - eps) f_i(y) + eps h_i(y)).
double blended_marginal_logpdf(const UnivariateMixture& f_i, const UnivariateMixture& h_i,
                               double eps, double y);

/// Clamped log-ratio sum sum_i log clamp(h_i / f_{i,eps}) and per-bound hit counts.
struct RatioTerm {
  double log_ratio = 0.0;
  int low = 0;
  int high = 0;
};
RatioTerm clamped_log_ratio(const std::vector<UnivariateMixture>& f_marg,
                            const std::vector<UnivariateMixture>& h, double eps,
                            const Vector& y, ClampBounds bounds = {});

struct LogKEstimate {
  double log_k = 0.0;
  double std_error = 0.0;  // Monte-Carlo standard error of log_k (delta method)
  double clamp_low_fraction = 0.0;
  double clamp_high_fraction = 0.0;
  bool warning = false;
  int draws = 0;
};

/// Draws per IS chunk; each chunk uses its own split of the caller's stream.
inline constexpr int kIsChunk = 10000;

/**
 * Importance-sampling estimate of log k with draws from f:
 * k^{-1} ~ mean_t prod_i clamp(h_i(y_i^t) / f_{i,eps}(y_i^t)).
 */
template <BaseDensity B>
LogKEstimate estimate_log_k(const B& f, const std::vector<UnivariateMixture>& h, double eps,
                            int draws, RngStream& rng, ClampBounds bounds = {},
                            double warn_fraction = 0.05) {
  if (draws < 1000) throw DomainError("estimate_log_k: at least 1000 draws required");
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("estimate_log_k: eps must lie in (0, 1]");
  const int p = f.dim();
  if (static_cast<int>(h.size()) != p) throw DimensionError("estimate_log_k: need p marginals");
  std::vector<UnivariateMixture> f_marg;
  for (int i = 0; i < p; ++i) f_marg.push_back(f.marginal(i));

  double sum_w = 0.0, sum_w2 = 0.0;
  long low = 0, high = 0;
  for (int start = 0, chunk = 0; start < draws; start += kIsChunk, ++chunk) {
    const int count = std::min(kIsChunk, draws - start);
    RngStream sub = rng.split(static_cast<std::uint64_t>(chunk));
    const Matrix y = f.sample(count, sub);
    for (int t = 0; t < count; ++t) {
      const RatioTerm r = clamped_log_ratio(f_marg, h, eps, y.row(t).transpose(), bounds);
      const double w = std::exp(r.log_ratio);
      sum_w += w;
      sum_w2 += w * w;
      low += r.low;
      high += r.high;
    }
  }
  LogKEstimate out;
  out.draws = draws;
  const double mean = sum_w / draws;
  const double var = std::max(sum_w2 / draws - mean * mean, 0.0);
  out.log_k = -std::log(mean);
  out.std_error = std::sqrt(var / draws) / mean;
  const double total = static_cast<double>(draws) * p;
  out.clamp_low_fraction = low / total;
  out.clamp_high_fraction = high / total;
  out.warning = out.clamp_low_fraction + out.clamp_high_fraction > warn_fraction;
  return out;
}

struct MamnConfig {
  SaConfig sa;
  int max_components = 10;
  double epsilon = 0.05;
  int is_draws = 100000;
  ClampBounds clamp;
  double warn_fraction = 0.05;
  int burn_in = 1000;
  /// Extra components used when refitting the base after a clamp warning.
  int retry_extra_components = 2;
};

/**
 * f(e) * prod_i clamp(h_i(e_i) / f_{i,eps}(e_i)) * k, where e = y - B'z are the
 * base mixture's errors.
 */
struct MarginallyAdaptedDensity {
  MixtureOfNormals base;
  std::vector<UnivariateMixture> h;
  std::vector<UnivariateMixture> f_marg;  // cached marginals of base
  double epsilon = 0.05;
  ClampBounds clamp;
  LogKEstimate k;
  std::vector<std::string> warnings;

  int dim() const { return base.dim(); }
  void validate() const;
};

/// Builds the adapted density from a fitted base and marginals, then estimates k.
MarginallyAdaptedDensity adapt_marginals(MixtureOfNormals base, std::vector<UnivariateMixture> h,
                                         const MamnConfig& cfg, RngStream& rng);

/**
 * Adapts a fitted base; on a clamp warning the base is refit once with
 * cfg.retry_extra_components more components and kept if the clamp fraction drops.
 */
MarginallyAdaptedDensity fit_mamn_from(const Matrix& data, const Matrix& z, MixtureOfNormals base,
                                       std::vector<UnivariateMixture> h, const MamnConfig& cfg,
                                       RngStream& rng);

/// Base by BIC, h_i by BIC on the base residuals, then fit_mamn_from.
MarginallyAdaptedDensity fit_mamn(const Matrix& data, const Matrix& z, const MamnConfig& cfg,
                                  RngStream& rng);

double mamn_logpdf(const MarginallyAdaptedDensity& model, const Vector& y,
                   const Vector& z = Vector());

struct MhResult {
  Matrix draws;
  double acceptance_rate = 0.0;
  bool warning = false;  // acceptance below 1%
};

/// Independence Metropolis-Hastings with the base as proposal.
template <BaseDensity B>
MhResult independence_mh(const B& f, const std::vector<UnivariateMixture>& h, double eps, int n,
                         int burn_in, RngStream& rng, ClampBounds bounds = {}) {
  if (n < 1 || burn_in < 0) throw DomainError("independence_mh: bad chain length");
  const int p = f.dim();
  std::vector<UnivariateMixture> f_marg;
  for (int i = 0; i < p; ++i) f_marg.push_back(f.marginal(i));
  const int total = n + burn_in + 1;
  const Matrix proposals = f.sample(total, rng);
  MhResult out;
  out.draws.resize(n, p);
  Vector current = proposals.row(0).transpose();
  double current_w = clamped_log_ratio(f_marg, h, eps, current, bounds).log_ratio;
  long accepted = 0;
  for (int t = 1; t < total; ++t) {
    const Vector prop = proposals.row(t).transpose();
    const double w = clamped_log_ratio(f_marg, h, eps, prop, bounds).log_ratio;
    if (w >= current_w || std::log(rng.uniform()) < w - current_w) {
      current = prop;
      current_w = w;
      ++accepted;
    }
    if (t > burn_in) out.draws.row(t - burn_in - 1) = current.transpose();
  }
  out.acceptance_rate = static_cast<double>(accepted) / (total - 1);
  out.warning = out.acceptance_rate < 0.01;
  return out;
}

/// Draws from the adapted density (z is n x k or has zero columns).
MhResult mamn_sample(const MarginallyAdaptedDensity& model, int n, int burn_in, RngStream& rng,
                     const Matrix& z = Matrix());

/// Joint log-density with its univariate marginal log-densities.
struct KnownDensity {
  std::function<double(const Vector&)> logpdf;
  std::vector<std::function<double(double)>> marginal_logpdf;

  int dim() const { return static_cast<int>(marginal_logpdf.size()); }
};

KnownDensity known_density(const MixtureOfNormals& model);

struct Lemma1Report {
  double kl_h_f = 0.0;
  double kl_h_p = 0.0;
  double kl_gap = 0.0;  // kl_h_f - kl_h_p
  double log_k = 0.0;
  std::vector<double> marginal_kl;  // KL(h_i, f_{i,eps})
  double rhs = 0.0;                 // log_k + sum marginal_kl
  bool dominates = false;           // rhs > 0
};

/**
 * Both sides of the KL decomposition for the unclamped adapted density, by
 * quadrature over `box` (p <= 2).
 */
Lemma1Report lemma1_gap(const KnownDensity& h, const KnownDensity& f, double eps,
                        const std::vector<Bracket>& box, int panels = 80);

}  // namespace mvdens
