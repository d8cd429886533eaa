#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvdens/core_math.hpp"

namespace mvdens {

/// Provenance of a fitted mixture.
struct FitMetadata {
  std::uint64_t seed = 0;
  int iterations = 0;
  std::optional<double> bic;
};

/**
 * Multivariate normal mixture for y = B'z + e, where the error e has density
 * sum_j weights(j) * N(means[j], covariances[j]).
 *
 * `coef` is k x p (k regressors, no constant); it has zero rows for a pure
 * density estimate.
 */
struct MixtureOfNormals {
  Vector weights;
  std::vector<Vector> means;
  std::vector<SpdMatrix> covariances;
  Matrix coef;
  FitMetadata metadata;

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  int regressors() const { return static_cast<int>(coef.rows()); }

  /// Throws DimensionError / DomainError when the invariants do not hold.
  void validate() const;
};

/// One-dimensional normal mixture used as a marginal model.
class UnivariateMixture {
 public:
  UnivariateMixture() = default;
  UnivariateMixture(Vector weights, Vector means, Vector sds);

  static UnivariateMixture standard_normal();

  int components() const { return static_cast<int>(weights_.size()); }
  const Vector& weights() const { return weights_; }
  const Vector& means() const { return means_; }
  const Vector& sds() const { return sds_; }

  double logpdf(double y) const;
  double pdf(double y) const { return std::exp(logpdf(y)); }
  double cdf(double y) const;
  double quantile(double u) const;

 private:
  Vector weights_;
  Vector means_;
  Vector sds_;
};

double univariate_cdf(const UnivariateMixture& mix, double y);
double univariate_quantile(const UnivariateMixture& mix, double u);

/// Tuning of the stochastic-approximation fit.
struct SaConfig {
  int batch_size = 20;
  int iterations = 1000;
  double alpha_coef = 0.5;
  double alpha_mean = 0.5;
  double alpha_cov = 0.1;
  double alpha_weight = 0.1;
  double schedule_c = 1.0;
  double schedule_tau = 10000.0;
  double prior_dof = 1.0;
  /// Divide the mean and covariance steps by max(pi_j, weight_floor).
  bool weight_normalized = true;
  double weight_floor = 0.05;

  void validate() const;
};

/// Search-then-converge gain sequence.
double step_size(double alpha0, int k, double c = 1.0, double tau = 100.0);

struct Responsibilities {
  Vector prob;
  bool underflow = false;
};

/// Posterior component probabilities of one observation (z may be empty).
Responsibilities responsibilities(const MixtureOfNormals& model, const Vector& y,
                                  const Vector& z = Vector());

/// Starting values: OLS coefficients, means along the first residual principal component.
MixtureOfNormals init_params(const Matrix& data, const Matrix& z, int m);

/**
 * Fits an m-component mixture by mini-batch stochastic approximation with an
 * inverse-Wishart prior on each covariance. `z` may have zero columns.
 */
MixtureOfNormals sa_fit(const Matrix& data, const Matrix& z, int m, const SaConfig& cfg,
                        RngStream& rng);

struct BicEntry {
  int components = 0;
  int parameters = 0;
  double loglik = 0.0;
  double bic = 0.0;
  bool ok = false;
  std::string message;
};

struct BicSelection {
  MixtureOfNormals model;
  std::vector<BicEntry> table;
};

/// Number of free parameters of an m-component, p-dimensional mixture with k regressors.
int free_parameters(int m, int p, int k);

/**
 * Fits m = 1..max_m and keeps the smallest BIC (ties go to fewer components).
 * Each m uses its own split of `rng`; failed fits are recorded and skipped.
 */
BicSelection bic_select(const Matrix& data, const Matrix& z, int max_m, const SaConfig& cfg,
                        RngStream& rng);

double logpdf(const MixtureOfNormals& model, const Vector& y, const Vector& z = Vector());
/// Log-density of the error term e = y - B'z.
double error_logpdf(const MixtureOfNormals& model, const Vector& e);
double loglik(const MixtureOfNormals& model, const Matrix& data, const Matrix& z);

/// n draws; z is n x k or has zero columns.
Matrix sample(const MixtureOfNormals& model, const Matrix& z, int n, RngStream& rng);

/// Marginal of coordinate i (0-based) of the error density.
UnivariateMixture marginal(const MixtureOfNormals& model, int i);

/// Builds a one-dimensional mixture from a p = 1 MixtureOfNormals.
UnivariateMixture to_univariate(const MixtureOfNormals& model);

/// Greedy matching of fitted component means to reference means; returns the
/// fitted component index assigned to each reference.
std::vector<int> match_components(const std::vector<Vector>& fitted,
                                  const std::vector<Vector>& reference);

}  // namespace mvdens
