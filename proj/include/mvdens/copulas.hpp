#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mvdens/core_math.hpp"
#include "mvdens/mixture.hpp"

namespace mvdens {

enum class CopulaFamily { Normal, StudentT, MixtureCopula, Clayton, Frank, Gumbel };

std::string to_string(CopulaFamily family);
CopulaFamily copula_family_from_string(const std::string& name);
bool is_archimedean(CopulaFamily family);

/// Lower clamp for u before quantile inversion; the upper clamp is 1 - kUClamp.
inline constexpr double kUClamp = 1e-12;

/// Univariate mixture marginals H_j plus their per-coordinate regression coefficients.
struct Marginals {
  std::vector<UnivariateMixture> h;
  Matrix coef;  // k x p; zero rows without regressors
  std::vector<std::vector<BicEntry>> bic;

  int dim() const { return static_cast<int>(h.size()); }
  /// y - coef' z (or y itself without regressors).
  Vector residual(const Vector& y, const Vector& z) const;
  Matrix residuals(const Matrix& y, const Matrix& z) const;
};

/// Fits every coordinate with bic_select (p = 1), each on its own split of `rng`.
Marginals fit_marginals(const Matrix& data, const Matrix& z, int max_m, const SaConfig& cfg,
                        RngStream& rng);

// ---------------------------------------------------------------- latent transform

struct NormalLatent {};
struct StudentTLatent {
  double nu;
};
/// Latent marginals taken from a fitted joint mixture (F_j = j-th marginal).
struct MixtureLatent {
  std::vector<UnivariateMixture> marginals;
};
using LatentSpec = std::variant<NormalLatent, StudentTLatent, MixtureLatent>;

struct TransformedSample {
  Matrix x;         // n x p latent values
  Matrix log_jac;   // n x p of log h_j(y_j) - log f_j(x_j)
  int clamped = 0;  // entries whose u hit the clamp
};

/// x_ij = F_j^{-1}(H_j(y_ij)); y is assumed already net of any regression part.
TransformedSample transform_to_latent(const Matrix& y, const std::vector<UnivariateMixture>& h,
                                      const LatentSpec& latent);

double latent_quantile(const LatentSpec& latent, int j, double u);
double latent_cdf(const LatentSpec& latent, int j, double x);
double latent_logpdf(const LatentSpec& latent, int j, double x);

// ---------------------------------------------------------------- Archimedean

/// Generator G(u) of an Archimedean family.
double archimedean_generator(CopulaFamily family, double theta, double u);
/// Generator inverse psi(t) = G^{-1}(t).
double archimedean_generator_inverse(CopulaFamily family, double theta, double t);
double archimedean_cdf(CopulaFamily family, double theta, const Vector& u);
/// log of the p-th mixed partial derivative of C at u.
double archimedean_logpdf(CopulaFamily family, double theta, const Vector& u);
void check_theta(CopulaFamily family, double theta);
/// Draws n x p uniforms via the frailty (Marshall-Olkin) construction.
Matrix archimedean_sample_u(CopulaFamily family, double theta, int p, int n, RngStream& rng);
/// Maximum pseudo-likelihood estimate of theta from an n x p matrix of u values.
double fit_archimedean(CopulaFamily family, const Matrix& u);

// ---------------------------------------------------------------- models

/// Cached F_j^{-1}(H_j(y)) over the training range of one coordinate.
struct LatentTable {
  double lo = 0.0;
  double hi = 0.0;
  int nodes = 0;
  MonotoneCubic map;
  UnivariateMixture latent;  // F_j, the joint's j-th marginal
};

struct CopulaDiagnostics {
  std::vector<std::vector<BicEntry>> marginal_bic;
  std::vector<BicEntry> joint_bic;
  std::vector<std::pair<double, double>> nu_profile;  // (nu, y log-likelihood)
  std::vector<std::string> warnings;
  int penalty_iterations = 0;
};

struct CopulaModel {
  CopulaFamily family = CopulaFamily::Normal;
  Marginals marginals;
  std::optional<SpdMatrix> scale;          // Normal, StudentT
  double nu = 0.0;                         // StudentT
  std::optional<MixtureOfNormals> joint;   // MixtureCopula
  double theta = 0.0;                      // Archimedean
  std::vector<LatentTable> tables;         // MixtureCopula inversion cache
  CopulaDiagnostics diagnostics;

  int dim() const { return marginals.dim(); }
  void validate() const;
};

struct CopulaFitConfig {
  SaConfig sa;
  int max_components = 10;
  std::vector<double> nu_grid{2.5, 3, 4, 5, 6, 8, 10, 15, 20, 30, 60};
  double diag_tolerance = 0.01;
  /// Minimum number of penalized SA updates for the normal copula.
  int penalty_iterations = 5000;
  int max_penalty_iterations = 10000;
  int table_nodes = 512;
  int t_max_sweeps = 500;
  double t_tolerance = 1e-8;
};

/**
 * Penalized stochastic approximation for a unit-diagonal covariance:
 * V += (a_t / S) [sum_{i in batch} (x_i x_i' - V) - t diag(V_ii - 1)].
 * Runs at least cfg.iterations updates and keeps going (up to max_iterations) until
 * every |V_ii - 1| <= tolerance; throws EstimationError otherwise.
 */
Matrix penalized_unit_diagonal_sa(const Matrix& x, const SaConfig& cfg, double tolerance,
                                  int max_iterations, RngStream& rng, int* iterations_run = nullptr);

struct TScaleFit {
  Matrix scale;
  int sweeps = 0;
  bool converged = false;
  bool diverged = false;
};

/// Fixed-point estimate of the t_nu(0, V) scale for latent data x.
TScaleFit t_scale_fixed_point(const Matrix& x, double nu, int max_sweeps, double tolerance);

// The fits below take fitted marginals; z is n x k or has zero columns.
CopulaModel fit_normal_copula(const Matrix& data, const Matrix& z, const Marginals& marginals,
                              const CopulaFitConfig& cfg, RngStream& rng);
CopulaModel fit_t_copula(const Matrix& data, const Matrix& z, const Marginals& marginals,
                         const CopulaFitConfig& cfg);
CopulaModel fit_mn_copula(const Matrix& data, const Matrix& z, const Marginals& marginals,
                          const CopulaFitConfig& cfg, RngStream& rng);
CopulaModel fit_archimedean_copula(CopulaFamily family, const Matrix& data, const Matrix& z,
                                   const Marginals& marginals);

/// (Re)builds the MixtureCopula inversion tables over [lo_j, hi_j].
void build_latent_tables(CopulaModel& model, const Vector& lo, const Vector& hi, int nodes);

/// Latent spec used by a fitted model for density evaluation.
LatentSpec latent_spec(const CopulaModel& model);

/// log p(y) = log f(x) + sum_j [log h_j(y_j) - log f_j(x_j)].
double copula_logpdf(const CopulaModel& model, const Vector& y, const Vector& z = Vector(),
                     bool* clamped = nullptr);

/// Draws n observations (z is n x k or has zero columns).
Matrix copula_sample(const CopulaModel& model, int n, RngStream& rng, const Matrix& z = Matrix());

/// Degrees of freedom as reported in tables: values above 30 print as "> 30".
std::string format_dof(double nu);

}  // namespace mvdens
