#include "mvdens/core_math.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss.hpp>

namespace mvdens {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

// Acklam's rational approximation for the lower half, |error| < 1.2e-9.
double acklam_lower(double u) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double kLow = 0.02425;
  if (u < kLow) {
    const double q = std::sqrt(-2.0 * std::log(u));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = u - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

// ---------------------------------------------------------------- SpdMatrix

SpdMatrix::SpdMatrix(const Matrix& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw DimensionError("SpdMatrix: matrix must be square and non-empty");
  }
  if (!cov.allFinite()) {
    throw DomainError("SpdMatrix: non-finite entries");
  }
  const Matrix sym = 0.5 * (cov + cov.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * sym.trace() / static_cast<double>(sym.rows());
    Matrix bumped = sym;
    bumped.diagonal().array() += std::max(jitter, 0.0);
    llt.compute(bumped);
    if (llt.info() != Eigen::Success || jitter <= 0.0) {
      throw DomainError("SpdMatrix: matrix is not positive definite");
    }
  }
  factor_ = llt.matrixL();
  if ((factor_.diagonal().array() <= 0.0).any()) {
    throw DomainError("SpdMatrix: matrix is not positive definite");
  }
}

SpdMatrix SpdMatrix::from_factor(const Matrix& lower) {
  if (lower.rows() != lower.cols() || lower.rows() == 0) {
    throw DimensionError("SpdMatrix: factor must be square and non-empty");
  }
  if (!lower.allFinite() || (lower.diagonal().array() <= 0.0).any()) {
    throw DomainError("SpdMatrix: factor diagonal must be strictly positive");
  }
  SpdMatrix out;
  out.factor_ = lower.triangularView<Eigen::Lower>();
  return out;
}

SpdMatrix SpdMatrix::identity(int dim) { return from_factor(Matrix::Identity(dim, dim)); }

Matrix SpdMatrix::inverse() const {
  const Matrix linv =
      factor_.triangularView<Eigen::Lower>().solve(Matrix::Identity(dim(), dim()));
  return linv.transpose() * linv;
}

double SpdMatrix::log_det() const { return 2.0 * factor_.diagonal().array().log().sum(); }

Vector SpdMatrix::whiten(const Vector& r) const {
  if (r.size() != dim()) {
    throw DimensionError("SpdMatrix: vector length does not match dimension");
  }
  return factor_.triangularView<Eigen::Lower>().solve(r);
}

double SpdMatrix::quad_form(const Vector& r) const { return whiten(r).squaredNorm(); }

// ---------------------------------------------------------------- RngStream

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, splitmix64(stream_ * 0x9E3779B97F4A7C15ULL + child + 1));
}

double RngStream::uniform() {
  // 53 random bits centred in their cell: never exactly 0 or 1.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

double RngStream::exponential() { return -std::log(uniform()); }

double RngStream::gamma(double shape) {
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

std::size_t RngStream::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Vector RngStream::normal_vector(int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal();
  return v;
}

// ---------------------------------------------------------------- densities

double mvn_logpdf(const Vector& x, const Vector& mu, const SpdMatrix& cov) {
  if (x.size() != mu.size() || x.size() != cov.dim()) {
    throw DimensionError("mvn_logpdf: dimension mismatch");
  }
  const double p = static_cast<double>(x.size());
  return -0.5 * (p * kLog2Pi + cov.log_det() + cov.quad_form(x - mu));
}

double mvt_logpdf(const Vector& x, const Vector& mu, const SpdMatrix& scale, double nu) {
  if (!(nu > 2.0)) throw DomainError("mvt_logpdf: degrees of freedom must exceed 2");
  if (x.size() != mu.size() || x.size() != scale.dim()) {
    throw DimensionError("mvt_logpdf: dimension mismatch");
  }
  const double p = static_cast<double>(x.size());
  const double q = scale.quad_form(x - mu);
  return std::lgamma(0.5 * (nu + p)) - std::lgamma(0.5 * nu) -
         0.5 * p * std::log(nu * std::numbers::pi) - 0.5 * scale.log_det() -
         0.5 * (nu + p) * std::log1p(q / nu);
}

double normal_logpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * (kLog2Pi + z * z) - std::log(sd);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("normal_quantile: u must lie in (0, 1)");
  if (u == 0.5) return 0.0;
  // Work in the lower tail so the Newton residual keeps full relative precision.
  const bool upper = u > 0.5;
  const double tail = upper ? 1.0 - u : u;
  double x = acklam_lower(tail);
  const double resid = normal_cdf(x) - tail;
  x -= resid / std::exp(normal_logpdf(x));
  return upper ? -x : x;
}

double t_logpdf(double x, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - 0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

double t_cdf(double z, double nu) {
  if (!(nu > 0.0)) throw DomainError("t_cdf: degrees of freedom must be positive");
  if (!std::isfinite(z)) return z > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t(nu), z);
}

double t_quantile(double u, double nu) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("t_quantile: u must lie in (0, 1)");
  if (!(nu > 0.0)) throw DomainError("t_quantile: degrees of freedom must be positive");
  return boost::math::quantile(boost::math::students_t(nu), u);
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw DimensionError("logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// ---------------------------------------------------------------- root finding

double find_root(const std::function<double(double)>& f, double target, Bracket bracket,
                 const std::function<double(double)>& df) {
  double lo = bracket.lo;
  double hi = bracket.hi;
  if (!(lo <= hi)) throw DomainError("find_root: empty bracket");
  const double flo = f(lo);
  const double fhi = f(hi);
  if (target < flo || target > fhi) {
    throw DomainError("find_root: target outside f(bracket)");
  }
  if (flo == target) return lo;
  if (fhi == target) return hi;

  for (int i = 0; i < 20; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  auto derivative = [&](double x) {
    if (df) return df(x);
    const double h = 1e-7 * (1.0 + std::abs(x));
    return (f(x + h) - f(x - h)) / (2.0 * h);
  };

  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double fx = f(x);
    if (fx == target) return x;
    (fx < target ? lo : hi) = x;
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(x))) return 0.5 * (lo + hi);
    const double d = derivative(x);
    double next = (d > 0.0 && std::isfinite(d)) ? x - (fx - target) / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() *
                                  std::max(1.0, std::abs(x))) {
      return next;
    }
    x = next;
  }
  return x;
}

// ---------------------------------------------------------------- quadrature

double integrate_1d(const std::function<double(double)>& f, double lo, double hi, int panels) {
  using Rule = boost::math::quadrature::gauss<double, 10>;
  const auto& nodes = Rule::abscissa();
  const auto& weights = Rule::weights();
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double centre = lo + (k + 0.5) * width;
    const double half = 0.5 * width;
    double s = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      s += weights[j] * (f(centre - half * nodes[j]) + f(centre + half * nodes[j]));
    }
    total += half * s;
  }
  return total;
}

double integrate_2d(const std::function<double(double, double)>& f, Bracket x, Bracket y,
                    int panels) {
  using Rule = boost::math::quadrature::gauss<double, 10>;
  const auto& nodes = Rule::abscissa();
  const auto& weights = Rule::weights();

  // Expand the tensor rule into flat node/weight lists per axis.
  auto axis = [&](Bracket b, std::vector<double>& pts, std::vector<double>& wts) {
    const double width = (b.hi - b.lo) / panels;
    const double half = 0.5 * width;
    for (int k = 0; k < panels; ++k) {
      const double centre = b.lo + (k + 0.5) * width;
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        pts.push_back(centre - half * nodes[j]);
        wts.push_back(half * weights[j]);
        pts.push_back(centre + half * nodes[j]);
        wts.push_back(half * weights[j]);
      }
    }
  };
  std::vector<double> xs, wx, ys, wy;
  axis(x, xs, wx);
  axis(y, ys, wy);
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < ys.size(); ++j) row += wy[j] * f(xs[i], ys[j]);
    total += wx[i] * row;
  }
  return total;
}

// ---------------------------------------------------------------- interpolation

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw DimensionError("MonotoneCubic: need matching nodes");
  std::vector<double> delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(x_[i + 1] > x_[i])) throw DomainError("MonotoneCubic: nodes must increase");
    delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
  }
  slope_.assign(n, 0.0);
  slope_.front() = delta.front();
  slope_.back() = delta.back();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) continue;
    // Weighted harmonic mean keeps the interpolant monotone.
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    const double w0 = 2.0 * h1 + h0;
    const double w1 = h1 + 2.0 * h0;
    slope_[i] = (w0 + w1) / (w0 / delta[i - 1] + w1 / delta[i]);
  }
}

double MonotoneCubic::operator()(double t) const {
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  i = std::min(i, x_.size() - 2);
  const double h = x_[i + 1] - x_[i];
  const double s = (t - x_[i]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y_[i] + (s3 - 2 * s2 + s) * h * slope_[i] +
         (-2 * s3 + 3 * s2) * y_[i + 1] + (s3 - s2) * h * slope_[i + 1];
}

// ---------------------------------------------------------------- matrices

Matrix spd_project(const Matrix& sym, double floor) {
  const Matrix s = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  Vector values = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix sample_covariance(const Matrix& data) {
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Matrix centred = data.rowwise() - mean;
  return centred.transpose() * centred / static_cast<double>(data.rows());
}

}  // namespace mvdens
