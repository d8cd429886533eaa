#include "mvdens/marginal_adaptation.hpp"

#include <sstream>

namespace mvdens {

double blended_marginal_logpdf(const UnivariateMixture& f_i, const UnivariateMixture& h_i,
                               double eps, double y) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("blend: eps must lie in [0, 1]");
  const double lf = f_i.logpdf(y);
  const double lh = h_i.logpdf(y);
  if (eps == 0.0) return lf;
  if (eps == 1.0) return lh;
  const double terms[2] = {std::log1p(-eps) + lf, std::log(eps) + lh};
  return logsumexp(terms);
}

RatioTerm clamped_log_ratio(const std::vector<UnivariateMixture>& f_marg,
                            const std::vector<UnivariateMixture>& h, double eps, const Vector& y,
                            ClampBounds bounds) {
  const double lo = std::log(bounds.lo);
  const double hi = std::log(bounds.hi);
  RatioTerm out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double yi = y(static_cast<Eigen::Index>(i));
    double r = h[i].logpdf(yi) - blended_marginal_logpdf(f_marg[i], h[i], eps, yi);
    if (r < lo) {
      r = lo;
      ++out.low;
    } else if (r > hi) {
      r = hi;
      ++out.high;
    }
    out.log_ratio += r;
  }
  return out;
}

void MarginallyAdaptedDensity::validate() const {
  base.validate();
  if (static_cast<int>(h.size()) != dim() || static_cast<int>(f_marg.size()) != dim()) {
    throw DimensionError("mamn: need one marginal per coordinate");
  }
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("mamn: eps must lie in (0, 1]");
  if (!std::isfinite(k.log_k)) throw DomainError("mamn: log k must be finite");
  if (k.clamp_low_fraction < 0.0 || k.clamp_low_fraction > 1.0 || k.clamp_high_fraction < 0.0 ||
      k.clamp_high_fraction > 1.0) {
    throw DomainError("mamn: clamp fractions must lie in [0, 1]");
  }
}

MarginallyAdaptedDensity adapt_marginals(MixtureOfNormals base, std::vector<UnivariateMixture> h,
                                         const MamnConfig& cfg, RngStream& rng) {
  if (static_cast<int>(h.size()) != base.dim()) {
    throw DimensionError("adapt_marginals: need one marginal per coordinate");
  }
  MarginallyAdaptedDensity out;
  out.base = std::move(base);
  out.h = std::move(h);
  for (int i = 0; i < out.base.dim(); ++i) out.f_marg.push_back(marginal(out.base, i));
  out.epsilon = cfg.epsilon;
  out.clamp = cfg.clamp;
  out.k = estimate_log_k(MixtureBase{&out.base}, out.h, cfg.epsilon, cfg.is_draws, rng, cfg.clamp,
                         cfg.warn_fraction);
  if (out.k.warning) {
    std::ostringstream msg;
    msg << "clamp fraction " << out.k.clamp_low_fraction + out.k.clamp_high_fraction
        << " exceeds " << cfg.warn_fraction << "; the estimate of k may be unreliable";
    out.warnings.push_back(msg.str());
  }
  return out;
}

MarginallyAdaptedDensity fit_mamn(const Matrix& data, const Matrix& z, const MamnConfig& cfg,
                                  RngStream& rng) {
  if (data.rows() <= data.cols()) throw DomainError("fit_mamn: need n > p");
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  RngStream base_rng = rng.split(1);
  MixtureOfNormals base = bic_select(data, z, cfg.max_components, cfg.sa, base_rng).model;

  Matrix e = data;
  if (base.regressors() > 0) e -= z * base.coef;
  std::vector<UnivariateMixture> h;
  for (int i = 0; i < p; ++i) {
    RngStream sub = rng.split(100 + static_cast<std::uint64_t>(i));
    const Matrix column = e.col(i);
    h.push_back(to_univariate(bic_select(column, Matrix(n, 0), cfg.max_components, cfg.sa, sub).model));
  }

  return fit_mamn_from(data, z, std::move(base), std::move(h), cfg, rng);
}

MarginallyAdaptedDensity fit_mamn_from(const Matrix& data, const Matrix& z, MixtureOfNormals base,
                                       std::vector<UnivariateMixture> h, const MamnConfig& cfg,
                                       RngStream& rng) {
  const int n = static_cast<int>(data.rows());
  const int m = base.components() + cfg.retry_extra_components;
  RngStream k_rng = rng.split(2);
  MarginallyAdaptedDensity out = adapt_marginals(std::move(base), h, cfg, k_rng);
  if (!out.k.warning || n < 10 * m) return out;
  try {
    RngStream retry_rng = rng.split(3);
    MixtureOfNormals bigger = sa_fit(data, z, m, cfg.sa, retry_rng);
    RngStream retry_k = rng.split(4);
    MarginallyAdaptedDensity second = adapt_marginals(std::move(bigger), h, cfg, retry_k);
    const double before = out.k.clamp_low_fraction + out.k.clamp_high_fraction;
    const double after = second.k.clamp_low_fraction + second.k.clamp_high_fraction;
    std::ostringstream msg;
    msg << "refit base with " << m << " components: clamp fraction " << before << " -> " << after;
    if (after < before) {
      second.warnings.insert(second.warnings.begin(), out.warnings.begin(), out.warnings.end());
      second.warnings.push_back(msg.str() + " (kept)");
      return second;
    }
    out.warnings.push_back(msg.str() + " (discarded)");
  } catch (const EstimationError& err) {
    out.warnings.push_back(std::string("refit with more components failed: ") + err.what());
  }
  return out;
}

double mamn_logpdf(const MarginallyAdaptedDensity& model, const Vector& y, const Vector& z) {
  if (y.size() != model.dim()) throw DimensionError("mamn_logpdf: wrong dimension");
  Vector e = y;
  if (model.base.regressors() > 0) {
    if (z.size() != model.base.regressors()) throw DimensionError("mamn_logpdf: bad regressors");
    e -= model.base.coef.transpose() * z;
  }
  return model.k.log_k + error_logpdf(model.base, e) +
         clamped_log_ratio(model.f_marg, model.h, model.epsilon, e, model.clamp).log_ratio;
}

MhResult mamn_sample(const MarginallyAdaptedDensity& model, int n, int burn_in, RngStream& rng,
                     const Matrix& z) {
  MhResult out = independence_mh(MixtureBase{&model.base}, model.h, model.epsilon, n, burn_in,
                                 rng, model.clamp);
  if (model.base.regressors() > 0) {
    if (z.rows() != n || z.cols() != model.base.regressors()) {
      throw DimensionError("mamn_sample: regressor matrix must be n x k");
    }
    out.draws += z * model.base.coef;
  }
  return out;
}

KnownDensity known_density(const MixtureOfNormals& model) {
  KnownDensity out;
  out.logpdf = [model](const Vector& e) { return error_logpdf(model, e); };
  for (int i = 0; i < model.dim(); ++i) {
    UnivariateMixture mi = marginal(model, i);
    out.marginal_logpdf.push_back([mi](double y) { return mi.logpdf(y); });
  }
  return out;
}

namespace {

double integrate_box(const std::function<double(const Vector&)>& g,
                     const std::vector<Bracket>& box, int panels) {
  if (box.size() == 1) {
    Vector y(1);
    return integrate_1d([&](double a) { y(0) = a; return g(y); }, box[0].lo, box[0].hi, panels);
  }
  Vector y(2);
  return integrate_2d([&](double a, double b) { y(0) = a; y(1) = b; return g(y); }, box[0], box[1],
                      panels);
}

}  // namespace

Lemma1Report lemma1_gap(const KnownDensity& h, const KnownDensity& f, double eps,
                        const std::vector<Bracket>& box, int panels) {
  const int p = h.dim();
  if (p < 1 || p > 2) throw DomainError("lemma1_gap: quadrature supports p in {1, 2}");
  if (f.dim() != p || static_cast<int>(box.size()) != p) {
    throw DimensionError("lemma1_gap: dimensions disagree");
  }
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("lemma1_gap: eps must lie in (0, 1]");

  auto blend = [&](int i, double y) {
    const double terms[2] = {std::log1p(-eps) + f.marginal_logpdf[i](y),
                             std::log(eps) + h.marginal_logpdf[i](y)};
    return eps == 1.0 ? h.marginal_logpdf[i](y) : logsumexp(terms);
  };
  auto log_ratio = [&](const Vector& y) {
    double s = 0.0;
    for (int i = 0; i < p; ++i) s += h.marginal_logpdf[i](y(i)) - blend(i, y(i));
    return s;
  };

  Lemma1Report out;
  const double inv_k = integrate_box([&](const Vector& y) { return std::exp(f.logpdf(y) + log_ratio(y)); },
                                     box, panels);
  if (!(inv_k > 0.0) || !std::isfinite(inv_k)) {
    throw EstimationError("lemma1_gap: quadrature for k did not converge");
  }
  out.log_k = -std::log(inv_k);

  auto xlogx = [](double lh, double diff) { return lh == -INFINITY ? 0.0 : std::exp(lh) * diff; };
  out.kl_h_f = integrate_box(
      [&](const Vector& y) {
        const double lh = h.logpdf(y);
        return xlogx(lh, lh - f.logpdf(y));
      },
      box, panels);
  out.kl_h_p = integrate_box(
      [&](const Vector& y) {
        const double lh = h.logpdf(y);
        return xlogx(lh, lh - (out.log_k + f.logpdf(y) + log_ratio(y)));
      },
      box, panels);
  out.kl_gap = out.kl_h_f - out.kl_h_p;

  out.rhs = out.log_k;
  for (int i = 0; i < p; ++i) {
    const double kl = integrate_1d(
        [&](double y) {
          const double lh = h.marginal_logpdf[i](y);
          return xlogx(lh, lh - blend(i, y));
        },
        box[i].lo, box[i].hi, panels * 4);
    out.marginal_kl.push_back(kl);
    out.rhs += kl;
  }
  if (!std::isfinite(out.kl_gap) || !std::isfinite(out.rhs)) {
    throw EstimationError("lemma1_gap: quadrature produced a non-finite value");
  }
  out.dominates = out.rhs > 0.0;
  return out;
}

}  // namespace mvdens
