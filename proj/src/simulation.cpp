#include "mvdens/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace mvdens {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MixtureOfNormals make_mixture(std::vector<double> weights, std::vector<Vector> means,
                              std::vector<Matrix> covs) {
  MixtureOfNormals m;
  m.weights = Eigen::Map<Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  m.means = std::move(means);
  for (const auto& c : covs) m.covariances.emplace_back(c);
  m.coef = Matrix(0, m.means.front().size());
  return m;
}

Matrix equicorrelation(int p, double diag, double off) {
  return (diag - off) * Matrix::Identity(p, p) + off * Matrix::Ones(p, p);
}

// Phi^{-1}(H(y)) for a normal mixture H, using the survival function in the upper tail.
double normal_score(const UnivariateMixture& h, double y) {
  double lower = 0.0, upper = 0.0;
  for (int c = 0; c < h.components(); ++c) {
    const double s = (y - h.means()(c)) / h.sds()(c);
    lower += h.weights()(c) * normal_cdf(s);
    upper += h.weights()(c) * normal_cdf(-s);
  }
  if (lower <= 0.5) return normal_quantile(std::clamp(lower, kUClamp, 1.0 - kUClamp));
  return -normal_quantile(std::clamp(upper, kUClamp, 1.0 - kUClamp));
}

}  // namespace

std::string to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::NormalCopula: return "normal_copula";
    case DgpKind::ClaytonCopula: return "clayton";
    case DgpKind::ScaleMixture: return "scale_mixture";
    case DgpKind::MnPlusUniform: return "mn_plus_uniform";
    case DgpKind::ThreeSeparated: return "three_separated";
    case DgpKind::TwoScaleBivariate: return "two_scale";
  }
  return "unknown";
}

DgpKind dgp_kind_from_string(const std::string& name) {
  for (auto k : {DgpKind::NormalCopula, DgpKind::ClaytonCopula, DgpKind::ScaleMixture,
                 DgpKind::MnPlusUniform, DgpKind::ThreeSeparated, DgpKind::TwoScaleBivariate}) {
    if (to_string(k) == name) return k;
  }
  throw DomainError("unknown dgp kind: " + name);
}

UnivariateMixture three_component_marginal() {
  Vector w(3), mu(3), sd(3);
  w << 0.6, 0.2, 0.2;
  mu << 0.0, -3.0, 3.0;
  sd << 1.0, 3.0, std::sqrt(0.1);
  return UnivariateMixture(w, mu, sd);
}

DgpSpec dgp_normal_copula(int p) {
  if (p < 1) throw DomainError("dgp: p must be positive");
  DgpSpec d;
  d.kind = DgpKind::NormalCopula;
  d.p = p;
  d.copula_marginal = three_component_marginal();
  d.copula_scale = SpdMatrix(equicorrelation(p, 1.0, 0.5));
  return d;
}

DgpSpec dgp_clayton(int p, double theta) {
  if (p < 1) throw DomainError("dgp: p must be positive");
  check_theta(CopulaFamily::Clayton, theta);
  DgpSpec d;
  d.kind = DgpKind::ClaytonCopula;
  d.p = p;
  d.copula_marginal = three_component_marginal();
  d.theta = theta;
  return d;
}

DgpSpec dgp_scale_mixture(int p) {
  if (p < 1) throw DomainError("dgp: p must be positive");
  DgpSpec d;
  d.kind = DgpKind::ScaleMixture;
  d.p = p;
  d.mixture = make_mixture({0.7, 0.3}, {Vector::Zero(p), Vector::Zero(p)},
                           {Matrix::Identity(p, p), equicorrelation(p, 9.0, 5.0)});
  return d;
}

DgpSpec dgp_mn_plus_uniform(int p) {
  if (p < 1) throw DomainError("dgp: p must be positive");
  DgpSpec d;
  d.kind = DgpKind::MnPlusUniform;
  d.p = p;
  Vector m2 = Vector::Zero(p), m3 = Vector::Zero(p);
  m2(p - 1) = -3.0;
  m3(p - 1) = -6.0;
  const Matrix eye = Matrix::Identity(p, p);
  d.mixture = make_mixture({0.6, 0.2, 0.2}, {Vector::Zero(p), m2, m3}, {eye, 2.0 * eye, eye});
  d.uniform_weight = 0.34;
  d.uniform_half_width = 10.0;
  return d;
}

std::pair<DgpSpec, DgpSpec> dgp_figure1() {
  const Matrix eye = Matrix::Identity(2, 2);
  DgpSpec three;
  three.kind = DgpKind::ThreeSeparated;
  three.p = 2;
  three.mixture = make_mixture({1.0 / 3, 1.0 / 3, 1.0 / 3},
                               {Vector::Zero(2), Vector::Constant(2, -5.0), Vector::Constant(2, 5.0)},
                               {eye, eye, eye});
  DgpSpec two;
  two.kind = DgpKind::TwoScaleBivariate;
  two.p = 2;
  two.mixture = make_mixture({0.6, 0.4}, {Vector::Zero(2), Vector::Zero(2)}, {eye, 16.0 * eye});
  return {three, two};
}

double DgpSpec::marginal_logpdf(int j, double y) const {
  switch (kind) {
    case DgpKind::NormalCopula:
    case DgpKind::ClaytonCopula: return copula_marginal.logpdf(y);
    case DgpKind::MnPlusUniform: {
      const double normal = std::log1p(-uniform_weight) + marginal(mixture, j).logpdf(y);
      if (std::abs(y) > uniform_half_width) return normal;
      const double terms[2] = {normal, std::log(uniform_weight / (2.0 * uniform_half_width))};
      return logsumexp(terms);
    }
    default: return marginal(mixture, j).logpdf(y);
  }
}

double DgpSpec::marginal_cdf(int j, double y) const {
  switch (kind) {
    case DgpKind::NormalCopula:
    case DgpKind::ClaytonCopula: return copula_marginal.cdf(y);
    case DgpKind::MnPlusUniform: {
      const double w = uniform_half_width;
      const double uni = std::clamp((y + w) / (2.0 * w), 0.0, 1.0);
      return (1.0 - uniform_weight) * marginal(mixture, j).cdf(y) + uniform_weight * uni;
    }
    default: return marginal(mixture, j).cdf(y);
  }
}

double DgpSpec::logpdf(const Vector& y) const {
  if (y.size() != p) throw DimensionError("dgp logpdf: wrong dimension");
  switch (kind) {
    case DgpKind::NormalCopula: {
      Vector x(p);
      double jac = 0.0;
      for (int j = 0; j < p; ++j) {
        x(j) = normal_score(copula_marginal, y(j));
        jac += copula_marginal.logpdf(y(j)) - normal_logpdf(x(j));
      }
      return mvn_logpdf(x, Vector::Zero(p), copula_scale) + jac;
    }
    case DgpKind::ClaytonCopula: {
      Vector u(p);
      double jac = 0.0;
      for (int j = 0; j < p; ++j) {
        u(j) = std::clamp(copula_marginal.cdf(y(j)), kUClamp, 1.0 - kUClamp);
        jac += copula_marginal.logpdf(y(j));
      }
      return archimedean_logpdf(CopulaFamily::Clayton, theta, u) + jac;
    }
    case DgpKind::MnPlusUniform: {
      const double normal = std::log1p(-uniform_weight) + error_logpdf(mixture, y);
      if ((y.array().abs() > uniform_half_width).any()) return normal;
      const double terms[2] = {normal, std::log(uniform_weight) -
                                           p * std::log(2.0 * uniform_half_width)};
      return logsumexp(terms);
    }
    default: return error_logpdf(mixture, y);
  }
}

Matrix DgpSpec::sample(int n, RngStream& rng) const {
  if (n < 0) throw DomainError("dgp sample: n must be non-negative");
  Matrix y(n, p);
  switch (kind) {
    case DgpKind::NormalCopula: {
      const Matrix& l = copula_scale.factor();
      for (int i = 0; i < n; ++i) {
        const Vector x = l * rng.normal_vector(p);
        for (int j = 0; j < p; ++j) {
          y(i, j) = copula_marginal.quantile(std::clamp(normal_cdf(x(j)), kUClamp, 1.0 - kUClamp));
        }
      }
      return y;
    }
    case DgpKind::ClaytonCopula: {
      const Matrix u = archimedean_sample_u(CopulaFamily::Clayton, theta, p, n, rng);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
          y(i, j) = copula_marginal.quantile(std::clamp(u(i, j), kUClamp, 1.0 - kUClamp));
        }
      }
      return y;
    }
    case DgpKind::MnPlusUniform: {
      std::vector<bool> uniform(n);
      int n_normal = 0;
      for (int i = 0; i < n; ++i) {
        uniform[i] = rng.uniform() < uniform_weight;
        if (!uniform[i]) ++n_normal;
      }
      const Matrix normal = mvdens::sample(mixture, Matrix(n_normal, 0), n_normal, rng);
      for (int i = 0, k = 0; i < n; ++i) {
        if (uniform[i]) {
          for (int j = 0; j < p; ++j) y(i, j) = uniform_half_width * (2.0 * rng.uniform() - 1.0);
        } else {
          y.row(i) = normal.row(k++);
        }
      }
      return y;
    }
    default: return mvdens::sample(mixture, Matrix(n, 0), n, rng);
  }
}

Matrix latent_plot_data(const DgpSpec& dgp, int n, RngStream& rng) {
  const Matrix y = dgp.sample(n, rng);
  Matrix out(n, 2 * dgp.p);
  out.leftCols(dgp.p) = y;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dgp.p; ++j) {
      out(i, dgp.p + j) =
          normal_quantile(std::clamp(dgp.marginal_cdf(j, y(i, j)), kUClamp, 1.0 - kUClamp));
    }
  }
  return out;
}

// ---------------------------------------------------------------- estimators

const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names{"NC",    "tC",     "MNC", "Clayton",
                                              "Frank", "Gumbel", "MN",  "MAMN"};
  return names;
}

bool is_estimator_name(const std::string& name) {
  const auto& n = estimator_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

CopulaFitConfig EstimatorOptions::copula_config() const {
  CopulaFitConfig c;
  c.sa = sa;
  c.max_components = max_components;
  c.nu_grid = nu_grid;
  return c;
}

MamnConfig EstimatorOptions::mamn_config() const {
  MamnConfig c;
  c.sa = sa;
  c.max_components = max_components;
  c.epsilon = epsilon;
  c.is_draws = is_draws;
  return c;
}

double model_logpdf(const FittedModel& model, const Vector& y, const Vector& z) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MixtureOfNormals>) {
          return logpdf(m, y, z);
        } else if constexpr (std::is_same_v<T, CopulaModel>) {
          return copula_logpdf(m, y, z);
        } else {
          return mamn_logpdf(m, y, z);
        }
      },
      model);
}

Matrix model_sample(const FittedModel& model, int n, RngStream& rng, const Matrix& z,
                    double* acceptance_rate) {
  return std::visit(
      [&](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MixtureOfNormals>) {
          return sample(m, z.cols() > 0 ? z : Matrix(n, 0), n, rng);
        } else if constexpr (std::is_same_v<T, CopulaModel>) {
          return copula_sample(m, n, rng, z);
        } else {
          MhResult r = mamn_sample(m, n, 1000, rng, z);
          if (acceptance_rate) *acceptance_rate = r.acceptance_rate;
          return r.draws;
        }
      },
      model);
}

double model_components(const FittedModel& model) {
  if (const auto* m = std::get_if<MixtureOfNormals>(&model)) return m->components();
  if (const auto* c = std::get_if<CopulaModel>(&model)) {
    return c->joint ? c->joint->components() : kNaN;
  }
  return std::get<MarginallyAdaptedDensity>(model).base.components();
}

double model_dof(const FittedModel& model) {
  if (const auto* c = std::get_if<CopulaModel>(&model)) {
    if (c->family == CopulaFamily::StudentT) return c->nu;
  }
  return kNaN;
}

EstimatorSuite::EstimatorSuite(const Matrix& data, const Matrix& z, EstimatorOptions options,
                               RngStream rng)
    : data_(data),
      z_(z.cols() > 0 ? z : Matrix(data.rows(), 0)),
      options_(std::move(options)),
      rng_(rng) {
  if (data_.rows() <= data_.cols()) throw DomainError("estimators: need n > p");
  if (z_.rows() != data_.rows()) throw DimensionError("estimators: regressor rows mismatch");
}

const Marginals& EstimatorSuite::marginals() {
  if (!marginals_) {
    RngStream sub = rng_.split(1);
    marginals_ = fit_marginals(data_, z_, options_.max_components, options_.sa, sub);
  }
  return *marginals_;
}

const MixtureOfNormals& EstimatorSuite::joint() {
  if (!joint_) {
    RngStream sub = rng_.split(2);
    joint_ = bic_select(data_, z_, options_.max_components, options_.sa, sub).model;
  }
  return *joint_;
}

FittedModel EstimatorSuite::fit(const std::string& name) {
  const CopulaFitConfig cc = options_.copula_config();
  if (name == "NC") {
    RngStream sub = rng_.split(10);
    return fit_normal_copula(data_, z_, marginals(), cc, sub);
  }
  if (name == "tC") return fit_t_copula(data_, z_, marginals(), cc);
  if (name == "MNC") {
    RngStream sub = rng_.split(11);
    return fit_mn_copula(data_, z_, marginals(), cc, sub);
  }
  if (name == "Clayton") return fit_archimedean_copula(CopulaFamily::Clayton, data_, z_, marginals());
  if (name == "Frank") return fit_archimedean_copula(CopulaFamily::Frank, data_, z_, marginals());
  if (name == "Gumbel") return fit_archimedean_copula(CopulaFamily::Gumbel, data_, z_, marginals());
  if (name == "MN") return joint();
  if (name == "MAMN") {
    const MixtureOfNormals& base = joint();
    std::vector<UnivariateMixture> h;
    if (base.regressors() == 0) {
      h = marginals().h;
    } else {
      const Matrix e = data_ - z_ * base.coef;
      const int n = static_cast<int>(e.rows());
      for (int j = 0; j < e.cols(); ++j) {
        RngStream sub = rng_.split(100 + static_cast<std::uint64_t>(j));
        const Matrix column = e.col(j);
        h.push_back(to_univariate(
            bic_select(column, Matrix(n, 0), options_.max_components, options_.sa, sub).model));
      }
    }
    RngStream sub = rng_.split(12);
    return fit_mamn_from(data_, z_, base, std::move(h), options_.mamn_config(), sub);
  }
  std::string valid;
  for (const auto& n : estimator_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw DomainError("unknown estimator '" + name + "'; valid names: " + valid);
}

FittedModel fit_estimator(const std::string& name, const Matrix& data, const Matrix& z,
                          const EstimatorOptions& options, RngStream& rng) {
  EstimatorSuite suite(data, z, options, rng);
  return suite.fit(name);
}

ReplicationResult run_replications(const DgpSpec& dgp, const std::vector<std::string>& estimators,
                                   const ReplicationConfig& cfg, const FitObserver& observer) {
  if (cfg.replications < 1 || cfg.n <= dgp.p || cfg.n_test < 1) {
    throw DomainError("run_replications: bad replication sizes");
  }
  for (const auto& name : estimators) {
    if (!is_estimator_name(name)) {
      std::string valid;
      for (const auto& n : estimator_names()) valid += (valid.empty() ? "" : ", ") + n;
      throw DomainError("unknown estimator '" + name + "'; valid names: " + valid);
    }
  }
  const int reps = cfg.replications;
  const int k = static_cast<int>(estimators.size());
  ReplicationResult result;
  result.estimators = estimators;
  result.kl = Matrix::Constant(reps, k, kNaN);
  result.l2 = Matrix::Constant(reps, k, kNaN);
  std::vector<std::vector<std::string>> failures(reps);
  std::mutex observer_mutex;

  auto run_one = [&](int r) {
    RngStream rep(cfg.seed, static_cast<std::uint64_t>(r));
    RngStream train_rng = rep.split(0);
    RngStream test_rng = rep.split(1);
    const Matrix train = dgp.sample(cfg.n, train_rng);
    const Matrix test = dgp.sample(cfg.n_test, test_rng);
    std::vector<double> truth(cfg.n_test);
    for (int i = 0; i < cfg.n_test; ++i) truth[i] = dgp.logpdf(test.row(i).transpose());

    EstimatorSuite suite(train, Matrix(cfg.n, 0), cfg.options, rep.split(2));
    for (int e = 0; e < k; ++e) {
      try {
        const FittedModel model = suite.fit(estimators[e]);
        std::vector<double> est(cfg.n_test);
        for (int i = 0; i < cfg.n_test; ++i) {
          try {
            est[i] = model_logpdf(model, test.row(i).transpose());
          } catch (const std::exception&) {
            est[i] = kNaN;
          }
        }
        result.kl(r, e) = kl_hat(truth, est).value;
        result.l2(r, e) = l2_hat(truth, est).value;
        if (observer) {
          std::lock_guard<std::mutex> lock(observer_mutex);
          observer(r, estimators[e], model, test);
        }
      } catch (const std::exception& err) {
        failures[r].push_back("replication " + std::to_string(r) + ", " + estimators[e] + ": " +
                              err.what());
      }
    }
  };

  const int jobs = std::max(1, std::min(cfg.jobs, reps));
  if (jobs == 1) {
    for (int r = 0; r < reps; ++r) run_one(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (int r = next++; r < reps; r = next++) run_one(r);
      });
    }
  }
  for (auto& f : failures) result.failures.insert(result.failures.end(), f.begin(), f.end());
  return result;
}

}  // namespace mvdens
