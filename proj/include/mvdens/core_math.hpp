#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvdens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when argument shapes disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown for values outside an operation's domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when an iterative estimator fails (NaN, divergence, unmet constraint).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Symmetric positive definite matrix stored with its lower Cholesky factor.
 *
 * Construction from a covariance attempts a plain factorization first; if that
 * fails, 1e-10 * trace / dim is added to the diagonal once before giving up.
 */
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(const Matrix& cov);

  /// Wrap an existing lower-triangular factor (diagonal must be positive).
  static SpdMatrix from_factor(const Matrix& lower);
  static SpdMatrix identity(int dim);

  int dim() const { return static_cast<int>(factor_.rows()); }
  const Matrix& factor() const { return factor_; }
  Matrix matrix() const { return factor_ * factor_.transpose(); }
  Matrix inverse() const;
  double log_det() const;

  /// Mahalanobis form r' A^{-1} r.
  double quad_form(const Vector& r) const;
  /// Solves L w = r and returns w.
  Vector whiten(const Vector& r) const;

 private:
  Matrix factor_;
};

/**
 * Seedable random stream. (seed, stream) pairs map to independent engines;
 * the same pair always replays the same sequence.
 */
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Child stream derived deterministically from this stream's identity.
  RngStream split(std::uint64_t child) const;

  double uniform();           // (0, 1), never 0 or 1
  double normal();
  double exponential();
  double gamma(double shape);  // unit scale
  std::size_t index(std::size_t n);
  Vector normal_vector(int dim);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

double mvn_logpdf(const Vector& x, const Vector& mu, const SpdMatrix& cov);
double mvt_logpdf(const Vector& x, const Vector& mu, const SpdMatrix& scale, double nu);

double normal_logpdf(double x, double mu = 0.0, double sd = 1.0);
double normal_cdf(double z);
double normal_quantile(double u);

double t_logpdf(double x, double nu);
double t_cdf(double z, double nu);
double t_quantile(double u, double nu);

double logsumexp(std::span<const double> v);

/// Interval [lo, hi] for root bracketing.
struct Bracket {
  double lo;
  double hi;
};

/**
 * Solves f(x) = target for monotone increasing f on the bracket.
 * Bisects 20 times, then Newton steps (derivative by `df` if given, else a central
 * difference) guarded by bisection.
 */
double find_root(const std::function<double(double)>& f, double target, Bracket bracket,
                 const std::function<double(double)>& df = {});

/// Composite Gauss-Legendre quadrature over [lo, hi] with `panels` panels.
double integrate_1d(const std::function<double(double)>& f, double lo, double hi,
                    int panels = 400);

/// Tensor composite Gauss-Legendre over a rectangle.
double integrate_2d(const std::function<double(double, double)>& f, Bracket x, Bracket y,
                    int panels = 200);

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> x, std::vector<double> y);

  bool empty() const { return x_.empty(); }
  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }
  bool contains(double t) const { return !x_.empty() && t >= x_.front() && t <= x_.back(); }
  double operator()(double t) const;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> slope_;
};

/// Symmetric eigenvalue floor: returns S with eigenvalues clipped below at `floor`.
Matrix spd_project(const Matrix& sym, double floor);

/// Sample covariance (divisor n) of the rows of `data`.
Matrix sample_covariance(const Matrix& data);

}  // namespace mvdens
