#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mvdens/copulas.hpp"
#include "mvdens/core_math.hpp"
#include "mvdens/evaluation.hpp"
#include "mvdens/marginal_adaptation.hpp"
#include "mvdens/mixture.hpp"

namespace mvdens {

enum class DgpKind { NormalCopula, ClaytonCopula, ScaleMixture, MnPlusUniform, ThreeSeparated, TwoScaleBivariate };

std::string to_string(DgpKind kind);
DgpKind dgp_kind_from_string(const std::string& name);

/// A data-generating process with an exact log-density and sampler.
struct DgpSpec {
  DgpKind kind = DgpKind::NormalCopula;
  int p = 0;
  UnivariateMixture copula_marginal;  // copula kinds: every H_j
  SpdMatrix copula_scale;             // NormalCopula
  double theta = 0.0;                 // ClaytonCopula
  MixtureOfNormals mixture;           // mixture kinds (for MnPlusUniform: the normal part)
  double uniform_weight = 0.0;        // MnPlusUniform
  double uniform_half_width = 0.0;

  double logpdf(const Vector& y) const;
  double marginal_logpdf(int j, double y) const;
  double marginal_cdf(int j, double y) const;
  Matrix sample(int n, RngStream& rng) const;
};

/// Three-component marginal with means (0, -3, 3), weights (0.6, 0.2, 0.2), variances (1, 9, 0.1).
UnivariateMixture three_component_marginal();

DgpSpec dgp_normal_copula(int p = 5);
DgpSpec dgp_clayton(int p = 5, double theta = 5.0);
DgpSpec dgp_scale_mixture(int p = 5);
DgpSpec dgp_mn_plus_uniform(int p = 5);
/// (three well-separated bivariate clusters, two-scale bivariate mixture)
std::pair<DgpSpec, DgpSpec> dgp_figure1();

/// n x 2p matrix [y, x] with x_j = Phi^{-1}(H_j(y_j)) under the true marginals.
Matrix latent_plot_data(const DgpSpec& dgp, int n, RngStream& rng);

// ---------------------------------------------------------------- estimators

/// Names accepted by fit_estimator, in table order.
const std::vector<std::string>& estimator_names();
bool is_estimator_name(const std::string& name);

struct EstimatorOptions {
  SaConfig sa;
  int max_components = 10;
  std::vector<double> nu_grid{2.5, 3, 4, 5, 6, 8, 10, 15, 20, 30, 60};
  double epsilon = 0.05;
  int is_draws = 100000;

  CopulaFitConfig copula_config() const;
  MamnConfig mamn_config() const;
};

using FittedModel = std::variant<MixtureOfNormals, CopulaModel, MarginallyAdaptedDensity>;

double model_logpdf(const FittedModel& model, const Vector& y, const Vector& z = Vector());
Matrix model_sample(const FittedModel& model, int n, RngStream& rng, const Matrix& z = Matrix(),
                    double* acceptance_rate = nullptr);
/// Number of mixture components of the fitted joint (NaN where not applicable).
double model_components(const FittedModel& model);
/// Degrees of freedom for t copulas (NaN otherwise).
double model_dof(const FittedModel& model);

/**
 * Fits estimators on one data set, sharing the marginal fits among copula
 * estimators and the joint mixture between MN and MAMN.
 */
class EstimatorSuite {
 public:
  EstimatorSuite(const Matrix& data, const Matrix& z, EstimatorOptions options, RngStream rng);

  FittedModel fit(const std::string& name);

 private:
  const Marginals& marginals();
  const MixtureOfNormals& joint();

  Matrix data_;
  Matrix z_;
  EstimatorOptions options_;
  RngStream rng_;
  std::optional<Marginals> marginals_;
  std::optional<MixtureOfNormals> joint_;
};

/// One-off fit of a named estimator.
FittedModel fit_estimator(const std::string& name, const Matrix& data, const Matrix& z,
                          const EstimatorOptions& options, RngStream& rng);

struct ReplicationResult {
  std::vector<std::string> estimators;
  Matrix kl;  // replications x estimators; NaN for failures
  Matrix l2;
  std::vector<std::string> failures;
};

struct ReplicationConfig {
  int replications = 50;
  int n = 500;
  int n_test = 5000;
  int jobs = 1;
  std::uint64_t seed = 1;
  EstimatorOptions options;
};

/// Called once per successful fit with (replication, estimator, model, test sample).
using FitObserver = std::function<void(int, const std::string&, const FittedModel&, const Matrix&)>;

/**
 * For each replication r: training set from stream (seed, r) child 0, test
 * set from child 1, fits from child 2; losses are kl_hat and l2_hat.
 */
ReplicationResult run_replications(const DgpSpec& dgp, const std::vector<std::string>& estimators,
                                   const ReplicationConfig& cfg, const FitObserver& observer = {});

}  // namespace mvdens
