#include "mvdens/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace mvdens {

namespace {

constexpr double kWeightFloor = 1e-6;

void check_regressors(const Matrix& data, const Matrix& z) {
  if (z.cols() > 0 && z.rows() != data.rows()) {
    throw DimensionError("regressor matrix must have one row per observation");
  }
}

Vector project_simplex(Vector w) {
  w = w.cwiseMax(kWeightFloor);
  return w / w.sum();
}

// Symmetrize and floor eigenvalues at 1e-8 * trace / p.
Matrix keep_spd(const Matrix& v) {
  const Matrix sym = 0.5 * (v + v.transpose());
  const double trace = std::max(sym.trace(), std::numeric_limits<double>::min());
  return spd_project(sym, 1e-8 * trace / static_cast<double>(sym.rows()));
}

Vector first_principal_axis(const Matrix& cov, double& variance) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const int last = static_cast<int>(cov.rows()) - 1;
  variance = std::max(eig.eigenvalues()(last), 0.0);
  Vector axis = eig.eigenvectors().col(last);
  Eigen::Index big = 0;
  axis.cwiseAbs().maxCoeff(&big);
  if (axis(big) < 0.0) axis = -axis;
  return axis;
}

}  // namespace

// ---------------------------------------------------------------- MixtureOfNormals

void MixtureOfNormals::validate() const {
  const int m = components();
  if (m < 1) throw DomainError("mixture needs at least one component");
  if (static_cast<int>(means.size()) != m || static_cast<int>(covariances.size()) != m) {
    throw DimensionError("mixture: weights, means and covariances disagree in length");
  }
  const int p = dim();
  for (int j = 0; j < m; ++j) {
    if (means[j].size() != p || covariances[j].dim() != p) {
      throw DimensionError("mixture: component dimension mismatch");
    }
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw DomainError("mixture: weights must be a probability vector");
  }
  if (coef.rows() > 0 && coef.cols() != p) {
    throw DimensionError("mixture: coefficient matrix must be k x p");
  }
}

// ---------------------------------------------------------------- UnivariateMixture

UnivariateMixture::UnivariateMixture(Vector weights, Vector means, Vector sds)
    : weights_(std::move(weights)), means_(std::move(means)), sds_(std::move(sds)) {
  if (weights_.size() == 0 || weights_.size() != means_.size() ||
      weights_.size() != sds_.size()) {
    throw DimensionError("UnivariateMixture: parameter lengths disagree");
  }
  if ((sds_.array() <= 0.0).any() || (weights_.array() < 0.0).any()) {
    throw DomainError("UnivariateMixture: invalid weights or scales");
  }
  if (std::abs(weights_.sum() - 1.0) > 1e-9) {
    throw DomainError("UnivariateMixture: weights must sum to one");
  }
}

UnivariateMixture UnivariateMixture::standard_normal() {
  return UnivariateMixture(Vector::Ones(1), Vector::Zero(1), Vector::Ones(1));
}

double UnivariateMixture::logpdf(double y) const {
  const int m = components();
  if (m == 1) return normal_logpdf(y, means_(0), sds_(0));
  double terms[64];
  std::vector<double> heap;
  double* buf = terms;
  if (m > 64) {
    heap.resize(m);
    buf = heap.data();
  }
  for (int j = 0; j < m; ++j) {
    buf[j] = std::log(weights_(j)) + normal_logpdf(y, means_(j), sds_(j));
  }
  return logsumexp(std::span<const double>(buf, m));
}

double UnivariateMixture::cdf(double y) const {
  double s = 0.0;
  for (int j = 0; j < components(); ++j) s += weights_(j) * normal_cdf((y - means_(j)) / sds_(j));
  return std::clamp(s, 0.0, 1.0);
}

double UnivariateMixture::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("univariate_quantile: u must lie in (0, 1)");
  if (components() == 1) return means_(0) + sds_(0) * normal_quantile(u);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const double zlo = normal_quantile(0.5 * u);
  const double zhi = normal_quantile(0.5 * (1.0 + u));
  for (int j = 0; j < components(); ++j) {
    lo = std::min(lo, means_(j) + sds_(j) * zlo);
    hi = std::max(hi, means_(j) + sds_(j) * zhi);
  }
  return find_root([this](double y) { return cdf(y); }, u, {lo, hi},
                   [this](double y) { return pdf(y); });
}

double univariate_cdf(const UnivariateMixture& mix, double y) { return mix.cdf(y); }
double univariate_quantile(const UnivariateMixture& mix, double u) { return mix.quantile(u); }

// ---------------------------------------------------------------- configuration

void SaConfig::validate() const {
  if (batch_size < 1 || iterations < 1) {
    throw DomainError("SaConfig: batch size and iterations must be positive");
  }
  if (!(alpha_coef > 0 && alpha_mean > 0 && alpha_cov > 0 && alpha_weight > 0 &&
        schedule_c > 0 && schedule_tau > 0 && prior_dof > 0)) {
    throw DomainError("SaConfig: gains and schedule constants must be positive");
  }
}

double step_size(double alpha0, int k, double c, double tau) {
  const double r = static_cast<double>(k) / tau;
  const double a = 1.0 + (c / alpha0) * r;
  return alpha0 * a / (a + tau * r * r);
}

// ---------------------------------------------------------------- evaluation

Responsibilities responsibilities(const MixtureOfNormals& model, const Vector& y,
                                  const Vector& z) {
  const int m = model.components();
  Vector resid = y;
  if (model.regressors() > 0) resid -= model.coef.transpose() * z;
  std::vector<double> logs(m);
  for (int j = 0; j < m; ++j) {
    logs[j] = std::log(model.weights(j)) +
              mvn_logpdf(resid, model.means[j], model.covariances[j]);
  }
  Responsibilities out;
  const double total = logsumexp(logs);
  if (!std::isfinite(total)) {
    out.prob = Vector::Constant(m, 1.0 / m);
    out.underflow = true;
    return out;
  }
  out.prob.resize(m);
  for (int j = 0; j < m; ++j) out.prob(j) = std::exp(logs[j] - total);
  return out;
}

double error_logpdf(const MixtureOfNormals& model, const Vector& e) {
  const int m = model.components();
  if (e.size() != model.dim()) throw DimensionError("logpdf: dimension mismatch");
  if (m == 1) return mvn_logpdf(e, model.means[0], model.covariances[0]);
  std::vector<double> logs(m);
  for (int j = 0; j < m; ++j) {
    logs[j] = std::log(model.weights(j)) + mvn_logpdf(e, model.means[j], model.covariances[j]);
  }
  return logsumexp(logs);
}

double logpdf(const MixtureOfNormals& model, const Vector& y, const Vector& z) {
  if (model.regressors() == 0) return error_logpdf(model, y);
  if (z.size() != model.regressors()) throw DimensionError("logpdf: regressor length mismatch");
  return error_logpdf(model, y - model.coef.transpose() * z);
}

double loglik(const MixtureOfNormals& model, const Matrix& data, const Matrix& z) {
  check_regressors(data, z);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Vector y = data.row(i).transpose();
    total += model.regressors() > 0 ? logpdf(model, y, z.row(i).transpose())
                                    : error_logpdf(model, y);
  }
  return total;
}

Matrix sample(const MixtureOfNormals& model, const Matrix& z, int n, RngStream& rng) {
  const int p = model.dim();
  if (model.regressors() > 0 && (z.rows() != n || z.cols() != model.regressors())) {
    throw DimensionError("sample: regressor matrix must be n x k");
  }
  Matrix out(n, p);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int j = 0;
    double acc = model.weights(0);
    while (u > acc && j + 1 < model.components()) acc += model.weights(++j);
    Vector draw = model.means[j] + model.covariances[j].factor() * rng.normal_vector(p);
    if (model.regressors() > 0) draw += model.coef.transpose() * z.row(i).transpose();
    out.row(i) = draw.transpose();
  }
  return out;
}

UnivariateMixture marginal(const MixtureOfNormals& model, int i) {
  if (i < 0 || i >= model.dim()) throw DimensionError("marginal: coordinate out of range");
  const int m = model.components();
  Vector means(m), sds(m);
  for (int j = 0; j < m; ++j) {
    means(j) = model.means[j](i);
    sds(j) = std::sqrt(model.covariances[j].factor().row(i).squaredNorm());
  }
  return UnivariateMixture(model.weights, means, sds);
}

UnivariateMixture to_univariate(const MixtureOfNormals& model) {
  if (model.dim() != 1) throw DimensionError("to_univariate: model must be one-dimensional");
  return marginal(model, 0);
}

// ---------------------------------------------------------------- fitting

namespace {

struct RegressionSetup {
  Matrix coef;       // k x p OLS on de-meaned data
  Matrix residuals;  // y - z coef
  Matrix vz_inv;     // inverse sample covariance of z
};

RegressionSetup ols_setup(const Matrix& data, const Matrix& z) {
  RegressionSetup out;
  if (z.cols() == 0) {
    out.coef = Matrix(0, data.cols());
    out.residuals = data;
    return out;
  }
  const Matrix zc = z.rowwise() - z.colwise().mean();
  const Matrix yc = data.rowwise() - data.colwise().mean();
  Eigen::ColPivHouseholderQR<Matrix> qr(zc);
  if (qr.rank() < z.cols()) throw DomainError("init_params: regressor matrix is rank deficient");
  out.coef = qr.solve(yc);
  out.residuals = data - z * out.coef;
  out.vz_inv = SpdMatrix(sample_covariance(z)).inverse();
  return out;
}

MixtureOfNormals init_from_residuals(const Matrix& residuals, const Matrix& coef, int m) {
  const Vector centre = residuals.colwise().mean().transpose();
  const Matrix cov = sample_covariance(residuals);
  double variance = 0.0;
  const Vector axis = first_principal_axis(cov, variance);
  const double spread = 2.0 * std::sqrt(variance);

  MixtureOfNormals model;
  model.coef = coef;
  model.weights = Vector::Constant(m, 1.0 / m);
  const SpdMatrix start(keep_spd(cov / static_cast<double>(m)));
  for (int j = 0; j < m; ++j) {
    const double t = m == 1 ? 0.0 : -1.0 + 2.0 * j / static_cast<double>(m - 1);
    model.means.push_back(centre + t * spread * axis);
    model.covariances.push_back(start);
  }
  return model;
}

}  // namespace

MixtureOfNormals init_params(const Matrix& data, const Matrix& z, int m) {
  if (m < 1) throw DomainError("init_params: m must be at least 1");
  if (data.rows() <= data.cols()) throw DomainError("init_params: need n > p");
  check_regressors(data, z);
  const RegressionSetup reg = ols_setup(data, z);
  return init_from_residuals(reg.residuals, reg.coef, m);
}

MixtureOfNormals sa_fit(const Matrix& data, const Matrix& z, int m, const SaConfig& cfg,
                        RngStream& rng) {
  cfg.validate();
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  if (m < 1) throw DomainError("sa_fit: m must be at least 1");
  if (n < 10 * m) throw DomainError("sa_fit: need at least 10 observations per component");
  if (!data.allFinite()) throw DomainError("sa_fit: data contain non-finite values");
  check_regressors(data, z);

  const RegressionSetup reg = ols_setup(data, z);
  const MixtureOfNormals start = init_from_residuals(reg.residuals, reg.coef, m);
  const int k = static_cast<int>(z.cols());
  const Matrix prior_scale = sample_covariance(reg.residuals) / cfg.prior_dof;

  Matrix coef = start.coef;
  Vector weights = start.weights;
  std::vector<Vector> means = start.means;
  std::vector<Matrix> covs(m);
  for (int j = 0; j < m; ++j) covs[j] = start.covariances[j].matrix();

  const int batch = cfg.batch_size;
  std::vector<Eigen::LLT<Matrix>> chol(m);
  std::vector<double> log_norm(m);
  std::vector<Vector> resid_j(m, Vector(p));
  std::vector<double> logs(m);
  Vector prob(m);

  std::vector<double> sum_p(m);
  std::vector<Vector> sum_pe(m);
  std::vector<Matrix> sum_pee(m);
  Matrix sum_ze(k, p);
  const double half_p_log2pi = 0.5 * p * std::log(2.0 * std::numbers::pi);

  for (int t = 0; t < cfg.iterations; ++t) {
    for (int j = 0; j < m; ++j) {
      chol[j].compute(covs[j]);
      if (chol[j].info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "sa_fit: covariance " << j << " lost positive definiteness at iteration " << t;
        throw EstimationError(msg.str());
      }
      log_norm[j] = -half_p_log2pi - chol[j].matrixLLT().diagonal().array().log().sum();
      sum_p[j] = 0.0;
      sum_pe[j] = Vector::Zero(p);
      sum_pee[j] = Matrix::Zero(p, p);
    }
    sum_ze.setZero();

    for (int b = 0; b < batch; ++b) {
      const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
      Vector r = data.row(i).transpose();
      if (k > 0) r -= coef.transpose() * z.row(i).transpose();
      for (int j = 0; j < m; ++j) {
        resid_j[j] = r - means[j];
        const Vector w = chol[j].matrixL().solve(resid_j[j]);
        logs[j] = std::log(weights(j)) + log_norm[j] - 0.5 * w.squaredNorm();
      }
      const double total = logsumexp(logs);
      if (std::isfinite(total)) {
        for (int j = 0; j < m; ++j) prob(j) = std::exp(logs[j] - total);
      } else {
        prob.setConstant(1.0 / m);
      }
      Vector pe_sum = Vector::Zero(p);
      for (int j = 0; j < m; ++j) {
        sum_p[j] += prob(j);
        sum_pe[j] += prob(j) * resid_j[j];
        sum_pee[j].noalias() += prob(j) * resid_j[j] * resid_j[j].transpose();
        pe_sum += prob(j) * resid_j[j];
      }
      if (k > 0) sum_ze.noalias() += z.row(i).transpose() * pe_sum.transpose();
    }

    const double a_coef = step_size(cfg.alpha_coef, t, cfg.schedule_c, cfg.schedule_tau);
    const double a_mean = step_size(cfg.alpha_mean, t, cfg.schedule_c, cfg.schedule_tau);
    const double a_cov = step_size(cfg.alpha_cov, t, cfg.schedule_c, cfg.schedule_tau);
    const double a_wt = step_size(cfg.alpha_weight, t, cfg.schedule_c, cfg.schedule_tau);

    if (k > 0) coef += (a_coef / batch) * reg.vz_inv * sum_ze;
    for (int j = 0; j < m; ++j) {
      const double scale = cfg.weight_normalized ? 1.0 / std::max(weights(j), cfg.weight_floor) : 1.0;
      const Matrix updated = covs[j] + (scale * a_cov / batch) * (sum_pee[j] - sum_p[j] * covs[j]) +
                             (a_cov / n) * (prior_scale - covs[j]);
      means[j] += (scale * a_mean / batch) * sum_pe[j];
      covs[j] = keep_spd(updated);
      weights(j) += (a_wt / batch) * (sum_p[j] - batch * weights(j));
    }
    weights = project_simplex(weights);

    bool finite = weights.allFinite() && coef.allFinite();
    for (int j = 0; j < m && finite; ++j) finite = means[j].allFinite() && covs[j].allFinite();
    if (!finite) {
      std::ostringstream msg;
      msg << "sa_fit: non-finite parameters at iteration " << t;
      throw EstimationError(msg.str());
    }
  }

  MixtureOfNormals model;
  model.weights = weights;
  model.means = std::move(means);
  model.coef = coef;
  for (int j = 0; j < m; ++j) model.covariances.emplace_back(covs[j]);
  model.metadata.seed = rng.seed();
  model.metadata.iterations = cfg.iterations;
  return model;
}

int free_parameters(int m, int p, int k) {
  return (m - 1) + m * p + m * p * (p + 1) / 2 + k * p;
}

BicSelection bic_select(const Matrix& data, const Matrix& z, int max_m, const SaConfig& cfg,
                        RngStream& rng) {
  if (max_m < 1) throw DomainError("bic_select: max_m must be at least 1");
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  const int k = static_cast<int>(z.cols());

  BicSelection out;
  std::optional<MixtureOfNormals> best;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= max_m; ++m) {
    BicEntry entry;
    entry.components = m;
    entry.parameters = free_parameters(m, p, k);
    RngStream sub = rng.split(static_cast<std::uint64_t>(m));
    try {
      MixtureOfNormals fit = sa_fit(data, z, m, cfg, sub);
      entry.loglik = loglik(fit, data, z);
      entry.bic = -2.0 * entry.loglik + entry.parameters * std::log(static_cast<double>(n));
      entry.ok = std::isfinite(entry.bic);
      if (!entry.ok) entry.message = "non-finite log-likelihood";
      if (entry.ok && entry.bic < best_bic) {
        best_bic = entry.bic;
        fit.metadata.bic = entry.bic;
        best = std::move(fit);
      }
    } catch (const std::exception& e) {
      entry.ok = false;
      entry.message = e.what();
      if (n >= 10 * m) std::clog << "warning: bic_select skipped m=" << m << ": " << e.what() << '\n';
    }
    out.table.push_back(entry);
  }
  if (!best) throw EstimationError("bic_select: every candidate fit failed");
  out.model = std::move(*best);
  return out;
}

std::vector<int> match_components(const std::vector<Vector>& fitted,
                                  const std::vector<Vector>& reference) {
  std::vector<int> out(reference.size(), -1);
  std::vector<bool> used(fitted.size(), false);
  std::vector<bool> done(reference.size(), false);
  for (std::size_t round = 0; round < std::min(fitted.size(), reference.size()); ++round) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t r = 0; r < reference.size(); ++r) {
      if (done[r]) continue;
      for (std::size_t f = 0; f < fitted.size(); ++f) {
        if (used[f]) continue;
        const double d = (fitted[f] - reference[r]).squaredNorm();
        if (d < best) {
          best = d;
          bi = r;
          bj = f;
        }
      }
    }
    out[bi] = static_cast<int>(bj);
    done[bi] = true;
    used[bj] = true;
  }
  return out;
}

}  // namespace mvdens
