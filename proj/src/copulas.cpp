#include "mvdens/copulas.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace mvdens {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double clamp_u(double u, bool* hit = nullptr) {
  const double c = std::clamp(u, kUClamp, 1.0 - kUClamp);
  if (hit && c != u) *hit = true;
  return c;
}

// log|d^j/dt^j of -t^alpha| for j >= 1.
double gumbel_log_abs_g(double alpha, int j, double log_t) {
  double s = 0.0;
  for (int i = 0; i < j; ++i) {
    const double f = std::abs(alpha - i);
    if (f == 0.0) return kNegInf;
    s += std::log(f);
  }
  return s + (alpha - j) * log_t;
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log|psi^{(p)}(t)| for psi(t) = exp(-t^alpha). Derivatives of exp(g) follow
// F^{(n)} = sum_k C(n-1, k) g^{(n-k)} F^{(k)}; every term shares the sign (-1)^n,
// so the recursion runs on magnitudes in log space.
double gumbel_log_abs_psi_derivative(double alpha, int p, double log_t) {
  std::vector<double> log_r(p + 1, 0.0);
  std::vector<double> terms;
  for (int n = 1; n <= p; ++n) {
    terms.clear();
    for (int k = 0; k < n; ++k) {
      terms.push_back(log_binomial(n - 1, k) + gumbel_log_abs_g(alpha, n - k, log_t) + log_r[k]);
    }
    log_r[n] = logsumexp(terms);
  }
  return -std::exp(alpha * log_t) + log_r[p];
}

// Eulerian numbers A(n, k), k = 0..n-1.
std::vector<double> eulerian_row(int n) {
  std::vector<double> row{1.0};
  for (int m = 2; m <= n; ++m) {
    std::vector<double> next(m, 0.0);
    for (int k = 0; k < m; ++k) {
      const double a = k < static_cast<int>(row.size()) ? (k + 1) * row[k] : 0.0;
      const double b = k >= 1 ? (m - k) * row[k - 1] : 0.0;
      next[k] = a + b;
    }
    row = std::move(next);
  }
  return row;
}

// log Li_{-n}(z) for z in (0, 1), given log z.
double log_polylog_negative(int n, double log_z) {
  const double log_one_minus_z = std::log(-std::expm1(log_z));
  if (n == 0) return log_z - log_one_minus_z;
  const std::vector<double> a = eulerian_row(n);
  std::vector<double> terms;
  for (int k = 0; k < n; ++k) terms.push_back(std::log(a[k]) + (k + 1) * log_z);
  return logsumexp(terms) - (n + 1) * log_one_minus_z;
}

double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                          double tol, double* best_value = nullptr) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  const double x = fc >= fd ? c : d;
  if (best_value) *best_value = std::max(fc, fd);
  return x;
}

double safe_objective(double v) { return std::isfinite(v) ? v : kNegInf; }

}  // namespace

// ---------------------------------------------------------------- names

std::string to_string(CopulaFamily family) {
  switch (family) {
    case CopulaFamily::Normal: return "normal";
    case CopulaFamily::StudentT: return "t";
    case CopulaFamily::MixtureCopula: return "mixture";
    case CopulaFamily::Clayton: return "clayton";
    case CopulaFamily::Frank: return "frank";
    case CopulaFamily::Gumbel: return "gumbel";
  }
  return "unknown";
}

CopulaFamily copula_family_from_string(const std::string& name) {
  for (auto f : {CopulaFamily::Normal, CopulaFamily::StudentT, CopulaFamily::MixtureCopula,
                 CopulaFamily::Clayton, CopulaFamily::Frank, CopulaFamily::Gumbel}) {
    if (to_string(f) == name) return f;
  }
  throw DomainError("unknown copula family: " + name);
}

bool is_archimedean(CopulaFamily family) {
  return family == CopulaFamily::Clayton || family == CopulaFamily::Frank ||
         family == CopulaFamily::Gumbel;
}

// ---------------------------------------------------------------- marginals

Vector Marginals::residual(const Vector& y, const Vector& z) const {
  if (y.size() != dim()) throw DimensionError("copula: observation has wrong dimension");
  if (coef.rows() == 0) return y;
  if (z.size() != coef.rows()) throw DimensionError("copula: regressor length mismatch");
  return y - coef.transpose() * z;
}

Matrix Marginals::residuals(const Matrix& y, const Matrix& z) const {
  if (coef.rows() == 0) return y;
  if (z.rows() != y.rows() || z.cols() != coef.rows()) {
    throw DimensionError("copula: regressor matrix must be n x k");
  }
  return y - z * coef;
}

Marginals fit_marginals(const Matrix& data, const Matrix& z, int max_m, const SaConfig& cfg,
                        RngStream& rng) {
  const int p = static_cast<int>(data.cols());
  Marginals out;
  out.coef = Matrix::Zero(z.cols(), p);
  for (int j = 0; j < p; ++j) {
    RngStream sub = rng.split(static_cast<std::uint64_t>(j) + 1);
    const Matrix column = data.col(j);
    BicSelection sel = bic_select(column, z, max_m, cfg, sub);
    out.h.push_back(to_univariate(sel.model));
    if (z.cols() > 0) out.coef.col(j) = sel.model.coef.col(0);
    out.bic.push_back(std::move(sel.table));
  }
  return out;
}

// ---------------------------------------------------------------- latent transform

double latent_quantile(const LatentSpec& latent, int j, double u) {
  return std::visit(
      [&](const auto& spec) -> double {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, NormalLatent>) {
          return normal_quantile(u);
        } else if constexpr (std::is_same_v<T, StudentTLatent>) {
          return t_quantile(u, spec.nu);
        } else {
          return spec.marginals.at(j).quantile(u);
        }
      },
      latent);
}

double latent_cdf(const LatentSpec& latent, int j, double x) {
  return std::visit(
      [&](const auto& spec) -> double {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, NormalLatent>) {
          return normal_cdf(x);
        } else if constexpr (std::is_same_v<T, StudentTLatent>) {
          return t_cdf(x, spec.nu);
        } else {
          return spec.marginals.at(j).cdf(x);
        }
      },
      latent);
}

double latent_logpdf(const LatentSpec& latent, int j, double x) {
  return std::visit(
      [&](const auto& spec) -> double {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, NormalLatent>) {
          return normal_logpdf(x);
        } else if constexpr (std::is_same_v<T, StudentTLatent>) {
          return t_logpdf(x, spec.nu);
        } else {
          return spec.marginals.at(j).logpdf(x);
        }
      },
      latent);
}

TransformedSample transform_to_latent(const Matrix& y, const std::vector<UnivariateMixture>& h,
                                      const LatentSpec& latent) {
  if (y.cols() != static_cast<Eigen::Index>(h.size())) {
    throw DimensionError("transform_to_latent: one marginal per column required");
  }
  if (!y.allFinite()) throw DomainError("transform_to_latent: non-finite observation");
  TransformedSample out;
  out.x.resize(y.rows(), y.cols());
  out.log_jac.resize(y.rows(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const int jj = static_cast<int>(j);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      bool hit = false;
      const double u = clamp_u(h[j].cdf(y(i, j)), &hit);
      if (hit) ++out.clamped;
      const double x = latent_quantile(latent, jj, u);
      out.x(i, j) = x;
      out.log_jac(i, j) = h[j].logpdf(y(i, j)) - latent_logpdf(latent, jj, x);
    }
  }
  return out;
}

// ---------------------------------------------------------------- Archimedean

void check_theta(CopulaFamily family, double theta) {
  if (!std::isfinite(theta)) throw DomainError("archimedean: theta must be finite");
  switch (family) {
    case CopulaFamily::Clayton:
      if (!(theta > 0.0)) throw DomainError("clayton: theta must be positive");
      break;
    case CopulaFamily::Frank:
      if (!(theta > 0.0)) throw DomainError("frank: theta must be positive");
      break;
    case CopulaFamily::Gumbel:
      if (!(theta >= 1.0)) throw DomainError("gumbel: theta must be at least 1");
      break;
    default: throw DomainError("not an Archimedean family");
  }
}

double archimedean_generator(CopulaFamily family, double theta, double u) {
  check_theta(family, theta);
  switch (family) {
    case CopulaFamily::Clayton: return std::expm1(-theta * std::log(u)) / theta;
    case CopulaFamily::Frank: return -std::log(std::expm1(-theta * u) / std::expm1(-theta));
    default: return std::pow(-std::log(u), theta);
  }
}

double archimedean_generator_inverse(CopulaFamily family, double theta, double t) {
  check_theta(family, theta);
  switch (family) {
    case CopulaFamily::Clayton: return std::exp(-std::log1p(theta * t) / theta);
    case CopulaFamily::Frank:
      return -std::log1p(std::expm1(-theta) * std::exp(-t)) / theta;
    default: return std::exp(-std::pow(t, 1.0 / theta));
  }
}

double archimedean_cdf(CopulaFamily family, double theta, const Vector& u) {
  double t = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) t += archimedean_generator(family, theta, u(i));
  return archimedean_generator_inverse(family, theta, t);
}

double archimedean_logpdf(CopulaFamily family, double theta, const Vector& u) {
  check_theta(family, theta);
  const int p = static_cast<int>(u.size());
  if (p < 1) throw DimensionError("archimedean_logpdf: empty point");
  for (int i = 0; i < p; ++i) {
    if (!(u(i) > 0.0 && u(i) < 1.0)) {
      throw DomainError("archimedean_logpdf: u must lie strictly inside (0, 1)");
    }
  }
  if (p == 1) return 0.0;

  switch (family) {
    case CopulaFamily::Clayton: {
      double log_norm = 0.0;
      for (int k = 0; k < p; ++k) log_norm += std::log1p(k * theta);
      std::vector<double> a(p);
      double sum_log_u = 0.0;
      for (int i = 0; i < p; ++i) {
        a[i] = -theta * std::log(u(i));
        sum_log_u += std::log(u(i));
      }
      // log(sum u^-theta - p + 1), using expm1 near independence and log-sum-exp for large powers.
      double log_base;
      if (*std::max_element(a.begin(), a.end()) < 1.0) {
        double s = 0.0;
        for (double v : a) s += std::expm1(v);
        log_base = std::log1p(s);
      } else {
        const double l = logsumexp(a);
        log_base = l + std::log1p((1.0 - p) * std::exp(-l));
      }
      return log_norm - (p + 1.0 / theta) * log_base - (theta + 1.0) * sum_log_u;
    }
    case CopulaFamily::Gumbel: {
      const double alpha = 1.0 / theta;
      std::vector<double> lt(p);
      double jac = 0.0;
      for (int i = 0; i < p; ++i) {
        const double l = std::log(-std::log(u(i)));
        lt[i] = theta * l;
        jac += std::log(theta) + (theta - 1.0) * l - std::log(u(i));
      }
      const double log_t = logsumexp(lt);
      return gumbel_log_abs_psi_derivative(alpha, p, log_t) + jac;
    }
    case CopulaFamily::Frank: {
      double t = 0.0;
      double jac = 0.0;
      for (int i = 0; i < p; ++i) {
        t += -std::log(std::expm1(-theta * u(i)) / std::expm1(-theta));
        jac += std::log(theta) - std::log(std::expm1(theta * u(i)));
      }
      const double log_z = std::log(-std::expm1(-theta)) - t;
      return -std::log(theta) + log_polylog_negative(p - 1, log_z) + jac;
    }
    default: throw DomainError("not an Archimedean family");
  }
}

Matrix archimedean_sample_u(CopulaFamily family, double theta, int p, int n, RngStream& rng) {
  check_theta(family, theta);
  Matrix u(n, p);
  const double pi = std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    double frailty = 1.0;
    switch (family) {
      case CopulaFamily::Clayton:
        frailty = theta * rng.gamma(1.0 / theta);
        break;
      case CopulaFamily::Gumbel: {
        const double alpha = 1.0 / theta;
        if (alpha < 1.0) {
          // Kanter's representation of the positive alpha-stable law with
          // Laplace transform exp(-t^alpha).
          const double angle = pi * rng.uniform();
          const double w = rng.exponential();
          frailty = std::sin(alpha * angle) / std::pow(std::sin(angle), 1.0 / alpha) *
                    std::pow(std::sin((1.0 - alpha) * angle) / w, (1.0 - alpha) / alpha);
        }
        break;
      }
      case CopulaFamily::Frank: {
        // Logarithmic series with parameter 1 - exp(-theta) (Kemp's method).
        const double prob = -std::expm1(-theta);
        const double v = rng.uniform();
        if (v >= prob) {
          frailty = 1.0;
        } else {
          const double q = -std::expm1(-theta * rng.uniform());
          frailty = v <= q ? std::floor(1.0 + std::log(v) / std::log(q)) : 1.0;
        }
        break;
      }
      default: throw DomainError("not an Archimedean family");
    }
    for (int j = 0; j < p; ++j) {
      u(i, j) = archimedean_generator_inverse(family, theta, rng.exponential() / frailty);
    }
  }
  return u;
}

double fit_archimedean(CopulaFamily family, const Matrix& u) {
  const double lower = family == CopulaFamily::Gumbel ? 1.0 : 0.0;
  auto objective = [&](double s) {
    const double theta = lower + std::exp(s);
    double total = 0.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      total += archimedean_logpdf(family, theta, u.row(i).transpose());
    }
    return safe_objective(total);
  };
  // Log-spaced scan of theta - lower over [1e-3, 100], then golden section between neighbours.
  constexpr int kGrid = 41;
  const double s_lo = std::log(1e-3);
  const double s_hi = std::log(100.0);
  std::vector<double> grid(kGrid), values(kGrid);
  for (int g = 0; g < kGrid; ++g) {
    grid[g] = s_lo + (s_hi - s_lo) * g / (kGrid - 1);
    values[g] = objective(grid[g]);
  }
  const int best = static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
  const double a = grid[std::max(best - 1, 0)];
  const double b = grid[std::min(best + 1, kGrid - 1)];
  double refined_value = kNegInf;
  const double s = golden_section_max(objective, a, b, 1e-6, &refined_value);
  return lower + std::exp(refined_value >= values[best] ? s : grid[best]);
}

// ---------------------------------------------------------------- model fitting

void CopulaModel::validate() const {
  if (marginals.dim() < 1) throw DimensionError("copula: no marginals");
  const int p = dim();
  switch (family) {
    case CopulaFamily::Normal:
    case CopulaFamily::StudentT: {
      if (!scale || scale->dim() != p) throw DimensionError("copula: scale matrix missing");
      const Vector d = scale->matrix().diagonal();
      if (((d.array() - 1.0).abs() > 0.01 + 1e-12).any()) {
        throw DomainError("copula: scale must have unit diagonal within 0.01");
      }
      if (family == CopulaFamily::StudentT && !(nu > 2.0)) {
        throw DomainError("t copula: nu must exceed 2");
      }
      break;
    }
    case CopulaFamily::MixtureCopula:
      if (!joint || joint->dim() != p) throw DimensionError("mixture copula: joint missing");
      joint->validate();
      break;
    default: check_theta(family, theta);
  }
}

Matrix penalized_unit_diagonal_sa(const Matrix& x, const SaConfig& cfg, double tolerance,
                                  int max_iterations, RngStream& rng, int* iterations_run) {
  cfg.validate();
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n <= p) throw DomainError("normal copula: need n > p");
  Matrix v = sample_covariance(x);
  const int batch = cfg.batch_size;
  auto max_dev = [&](const Matrix& m) { return (m.diagonal().array() - 1.0).abs().maxCoeff(); };

  int t = 0;
  for (; t < std::max(max_iterations, cfg.iterations); ++t) {
    if (t >= cfg.iterations && max_dev(v) <= tolerance) break;
    Matrix acc = Matrix::Zero(p, p);
    for (int b = 0; b < batch; ++b) {
      const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
      acc.noalias() += x.row(i).transpose() * x.row(i);
    }
    Matrix penalty = Matrix::Zero(p, p);
    penalty.diagonal() = v.diagonal().array() - 1.0;
    const double a = step_size(cfg.alpha_cov, t, cfg.schedule_c, cfg.schedule_tau);
    v += (a / batch) * (acc - batch * v - static_cast<double>(t) * penalty);
    v = spd_project(0.5 * (v + v.transpose()), 1e-8 * v.trace() / p);
    if (!v.allFinite()) {
      std::ostringstream msg;
      msg << "normal copula: non-finite covariance at iteration " << t;
      throw EstimationError(msg.str());
    }
  }
  if (iterations_run) *iterations_run = t;
  if (max_dev(v) > tolerance) {
    std::ostringstream msg;
    msg << "normal copula: unit-diagonal constraint not met after " << t
        << " iterations; diagonal = " << v.diagonal().transpose();
    throw EstimationError(msg.str());
  }
  return v;
}

TScaleFit t_scale_fixed_point(const Matrix& x, double nu, int max_sweeps, double tolerance) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  TScaleFit out;
  out.scale = ((nu - 2.0) / nu) * (x.transpose() * x) / static_cast<double>(n);
  const double start_trace = out.scale.trace();
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    Eigen::LLT<Matrix> llt(out.scale);
    if (llt.info() != Eigen::Success) {
      out.diverged = true;
      return out;
    }
    const Matrix white = llt.matrixL().solve(x.transpose());  // p x n
    const Eigen::RowVectorXd q = white.colwise().squaredNorm();
    Matrix next = Matrix::Zero(p, p);
    for (int i = 0; i < n; ++i) {
      const double w = (nu + p) / (nu + q(i));
      next.noalias() += w * x.row(i).transpose() * x.row(i);
    }
    next /= static_cast<double>(n);
    const double change = (next - out.scale).cwiseAbs().maxCoeff();
    out.scale = next;
    out.sweeps = sweep;
    if (!out.scale.allFinite() || out.scale.trace() > 2.0 * start_trace) {
      out.diverged = true;
      return out;
    }
    if (change < tolerance) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

CopulaModel fit_normal_copula(const Matrix& data, const Matrix& z, const Marginals& marginals,
                              const CopulaFitConfig& cfg, RngStream& rng) {
  if (data.rows() <= data.cols()) throw DomainError("fit_normal_copula: need n > p");
  CopulaModel model;
  model.family = CopulaFamily::Normal;
  model.marginals = marginals;
  const Matrix e = marginals.residuals(data, z);
  const TransformedSample ts = transform_to_latent(e, marginals.h, NormalLatent{});
  int iters = 0;
  SaConfig sa = cfg.sa;
  sa.iterations = std::max(sa.iterations, cfg.penalty_iterations);
  const Matrix v = penalized_unit_diagonal_sa(ts.x, sa, cfg.diag_tolerance,
                                              cfg.max_penalty_iterations, rng, &iters);
  model.scale = SpdMatrix(v);
  model.diagnostics.marginal_bic = marginals.bic;
  model.diagnostics.penalty_iterations = iters;
  return model;
}

namespace {

struct TProfilePoint {
  double loglik = kNegInf;
  Matrix scale;
};

TProfilePoint t_profile(const Matrix& e, const Marginals& marginals, double nu,
                        const CopulaFitConfig& cfg) {
  TProfilePoint out;
  const TransformedSample ts = transform_to_latent(e, marginals.h, StudentTLatent{nu});
  const TScaleFit fit = t_scale_fixed_point(ts.x, nu, cfg.t_max_sweeps, cfg.t_tolerance);
  if (fit.diverged) return out;
  const Vector inv_sd = fit.scale.diagonal().array().rsqrt();
  out.scale = inv_sd.asDiagonal() * fit.scale * inv_sd.asDiagonal();
  const SpdMatrix r(out.scale);
  const Vector zero = Vector::Zero(e.cols());
  double total = ts.log_jac.sum();
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    total += mvt_logpdf(ts.x.row(i).transpose(), zero, r, nu);
  }
  out.loglik = safe_objective(total);
  return out;
}

}  // namespace

CopulaModel fit_t_copula(const Matrix& data, const Matrix& z, const Marginals& marginals,
                         const CopulaFitConfig& cfg) {
  if (data.rows() <= data.cols()) throw DomainError("fit_t_copula: need n > p");
  if (cfg.nu_grid.empty()) throw DomainError("fit_t_copula: empty nu grid");
  for (double nu : cfg.nu_grid) {
    if (!(nu > 2.0)) throw DomainError("fit_t_copula: grid values must exceed 2");
  }
  CopulaModel model;
  model.family = CopulaFamily::StudentT;
  model.marginals = marginals;
  model.diagnostics.marginal_bic = marginals.bic;
  const Matrix e = marginals.residuals(data, z);

  std::vector<double> grid = cfg.nu_grid;
  std::sort(grid.begin(), grid.end());
  std::vector<double> values(grid.size(), kNegInf);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    values[g] = t_profile(e, marginals, grid[g], cfg).loglik;
    if (!std::isfinite(values[g])) {
      std::ostringstream msg;
      msg << "t copula: fixed point diverged for nu = " << grid[g] << "; skipped";
      model.diagnostics.warnings.push_back(msg.str());
    }
    model.diagnostics.nu_profile.emplace_back(grid[g], values[g]);
  }
  const auto best_it = std::max_element(values.begin(), values.end());
  if (!std::isfinite(*best_it)) throw EstimationError("t copula: every nu on the grid failed");
  const std::size_t best = static_cast<std::size_t>(best_it - values.begin());

  double nu_hat = grid[best];
  if (grid.size() > 1) {
    const double a = grid[best == 0 ? 0 : best - 1];
    const double b = grid[std::min(best + 1, grid.size() - 1)];
    double refined = kNegInf;
    const double cand = golden_section_max(
        [&](double nu) { return t_profile(e, marginals, nu, cfg).loglik; }, a, b,
        1e-3 * (b - a), &refined);
    if (refined > *best_it) nu_hat = cand;
  }
  const TProfilePoint final_fit = t_profile(e, marginals, nu_hat, cfg);
  model.nu = nu_hat;
  model.scale = SpdMatrix(final_fit.scale);
  return model;
}

CopulaModel fit_mn_copula(const Matrix& data, const Matrix& z, const Marginals& marginals,
                          const CopulaFitConfig& cfg, RngStream& rng) {
  if (data.rows() <= data.cols()) throw DomainError("fit_mn_copula: need n > p");
  CopulaModel model;
  model.family = CopulaFamily::MixtureCopula;
  model.marginals = marginals;
  model.diagnostics.marginal_bic = marginals.bic;
  const Matrix e = marginals.residuals(data, z);
  const TransformedSample ts = transform_to_latent(e, marginals.h, NormalLatent{});
  BicSelection sel = bic_select(ts.x, Matrix(ts.x.rows(), 0), cfg.max_components, cfg.sa, rng);
  model.joint = std::move(sel.model);
  model.diagnostics.joint_bic = std::move(sel.table);
  build_latent_tables(model, e.colwise().minCoeff().transpose(),
                      e.colwise().maxCoeff().transpose(), cfg.table_nodes);
  return model;
}

CopulaModel fit_archimedean_copula(CopulaFamily family, const Matrix& data, const Matrix& z,
                                   const Marginals& marginals) {
  if (!is_archimedean(family)) throw DomainError("fit_archimedean_copula: not Archimedean");
  CopulaModel model;
  model.family = family;
  model.marginals = marginals;
  model.diagnostics.marginal_bic = marginals.bic;
  const Matrix e = marginals.residuals(data, z);
  Matrix u(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) u(i, j) = clamp_u(marginals.h[j].cdf(e(i, j)));
  }
  model.theta = fit_archimedean(family, u);
  return model;
}

void build_latent_tables(CopulaModel& model, const Vector& lo, const Vector& hi, int nodes) {
  if (!model.joint) throw DomainError("build_latent_tables: mixture copula has no joint");
  const int p = model.dim();
  model.tables.assign(p, LatentTable{});
  for (int j = 0; j < p; ++j) {
    const UnivariateMixture fj = marginal(*model.joint, j);
    LatentTable& table = model.tables[j];
    table.latent = fj;
    table.lo = lo(j);
    table.hi = hi(j);
    table.nodes = nodes;
    if (!(hi(j) > lo(j)) || nodes < 2) continue;
    std::vector<double> ys(nodes), xs(nodes);
    for (int k = 0; k < nodes; ++k) {
      ys[k] = lo(j) + (hi(j) - lo(j)) * k / (nodes - 1.0);
      xs[k] = fj.quantile(clamp_u(model.marginals.h[j].cdf(ys[k])));
    }
    table.map = MonotoneCubic(std::move(ys), std::move(xs));
  }
}

LatentSpec latent_spec(const CopulaModel& model) {
  switch (model.family) {
    case CopulaFamily::Normal: return NormalLatent{};
    case CopulaFamily::StudentT: return StudentTLatent{model.nu};
    case CopulaFamily::MixtureCopula: {
      MixtureLatent spec;
      for (int j = 0; j < model.dim(); ++j) spec.marginals.push_back(marginal(*model.joint, j));
      return spec;
    }
    default: throw DomainError("latent_spec: Archimedean copulas have no latent variables");
  }
}

double copula_logpdf(const CopulaModel& model, const Vector& y, const Vector& z,
                     bool* clamped) {
  const Vector e = model.marginals.residual(y, z);
  const int p = model.dim();
  bool hit = false;
  double log_h = 0.0;
  for (int j = 0; j < p; ++j) log_h += model.marginals.h[j].logpdf(e(j));

  double result = 0.0;
  switch (model.family) {
    case CopulaFamily::Normal:
    case CopulaFamily::StudentT: {
      const bool is_t = model.family == CopulaFamily::StudentT;
      Vector x(p);
      double log_fj = 0.0;
      for (int j = 0; j < p; ++j) {
        const double u = clamp_u(model.marginals.h[j].cdf(e(j)), &hit);
        x(j) = is_t ? t_quantile(u, model.nu) : normal_quantile(u);
        log_fj += is_t ? t_logpdf(x(j), model.nu) : normal_logpdf(x(j));
      }
      const Vector zero = Vector::Zero(p);
      const double log_f = is_t ? mvt_logpdf(x, zero, *model.scale, model.nu)
                                : mvn_logpdf(x, zero, *model.scale);
      result = log_f + log_h - log_fj;
      break;
    }
    case CopulaFamily::MixtureCopula: {
      Vector x(p);
      double log_fj = 0.0;
      for (int j = 0; j < p; ++j) {
        if (static_cast<int>(model.tables.size()) != p) {
          throw DomainError("mixture copula: latent tables not built");
        }
        const UnivariateMixture& fj = model.tables[j].latent;
        if (!model.tables[j].map.empty() && model.tables[j].map.contains(e(j))) {
          x(j) = model.tables[j].map(e(j));
        } else {
          x(j) = fj.quantile(clamp_u(model.marginals.h[j].cdf(e(j)), &hit));
        }
        log_fj += fj.logpdf(x(j));
      }
      result = error_logpdf(*model.joint, x) + log_h - log_fj;
      break;
    }
    default: {
      Vector u(p);
      for (int j = 0; j < p; ++j) u(j) = clamp_u(model.marginals.h[j].cdf(e(j)), &hit);
      result = archimedean_logpdf(model.family, model.theta, u) + log_h;
    }
  }
  if (clamped) *clamped = hit;
  return result;
}

Matrix copula_sample(const CopulaModel& model, int n, RngStream& rng, const Matrix& z) {
  const int p = model.dim();
  const int k = static_cast<int>(model.marginals.coef.rows());
  if (k > 0 && (z.rows() != n || z.cols() != k)) {
    throw DimensionError("copula_sample: regressor matrix must be n x k");
  }
  Matrix u(n, p);
  switch (model.family) {
    case CopulaFamily::Normal:
    case CopulaFamily::StudentT: {
      const Matrix& l = model.scale->factor();
      for (int i = 0; i < n; ++i) {
        Vector x = l * rng.normal_vector(p);
        if (model.family == CopulaFamily::StudentT) {
          x /= std::sqrt(2.0 * rng.gamma(0.5 * model.nu) / model.nu);
          for (int j = 0; j < p; ++j) u(i, j) = t_cdf(x(j), model.nu);
        } else {
          for (int j = 0; j < p; ++j) u(i, j) = normal_cdf(x(j));
        }
      }
      break;
    }
    case CopulaFamily::MixtureCopula: {
      const Matrix x = sample(*model.joint, Matrix(), n, rng);
      for (int j = 0; j < p; ++j) {
        const UnivariateMixture fj = marginal(*model.joint, j);
        for (int i = 0; i < n; ++i) u(i, j) = fj.cdf(x(i, j));
      }
      break;
    }
    default: u = archimedean_sample_u(model.family, model.theta, p, n, rng);
  }
  Matrix y(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) y(i, j) = model.marginals.h[j].quantile(clamp_u(u(i, j)));
  }
  if (k > 0) y += z * model.marginals.coef;
  return y;
}

std::string format_dof(double nu) {
  if (nu > 30.0) return "> 30";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << nu;
  return out.str();
}

}  // namespace mvdens
