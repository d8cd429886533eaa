#include "mvdens/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mvdens {

namespace {

LossEstimate mean_with_se(const std::vector<double>& terms, int floored) {
  LossEstimate out;
  out.floored = floored;
  const double n = static_cast<double>(terms.size());
  if (terms.empty()) throw DimensionError("loss estimate: empty test sample");
  const double mean = std::accumulate(terms.begin(), terms.end(), 0.0) / n;
  double ss = 0.0;
  for (double t : terms) ss += (t - mean) * (t - mean);
  out.value = mean;
  out.std_error = terms.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return out;
}

void check_sizes(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("loss estimate: length mismatch");
}

double floor_log_density(double v, int& floored) {
  if (std::isfinite(v)) return std::max(v, kLogDensityFloor);
  ++floored;
  return kLogDensityFloor;
}

std::vector<double> evaluate(const LogDensityFn& f, const Matrix& sample) {
  std::vector<double> out(sample.rows());
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    try {
      out[i] = f(sample.row(i).transpose());
    } catch (const std::exception&) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

std::string fmt(double v, int digits = 4) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

LossEstimate kl_hat(const std::vector<double>& true_logpdf, const std::vector<double>& est_logpdf) {
  check_sizes(true_logpdf, est_logpdf);
  int floored = 0;
  std::vector<double> terms(true_logpdf.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    terms[i] = true_logpdf[i] - floor_log_density(est_logpdf[i], floored);
  }
  return mean_with_se(terms, floored);
}

LossEstimate l2_hat(const std::vector<double>& true_logpdf, const std::vector<double>& est_logpdf) {
  check_sizes(true_logpdf, est_logpdf);
  int floored = 0;
  std::vector<double> terms(true_logpdf.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double lt = true_logpdf[i];
    const double le = floor_log_density(est_logpdf[i], floored);
    // (p - q)^2 / p = p (1 - q/p)^2
    const double d = -std::expm1(le - lt);
    terms[i] = std::exp(lt) * d * d;
  }
  return mean_with_se(terms, floored);
}

LossEstimate kl_hat(const LogDensityFn& true_logpdf, const LogDensityFn& est_logpdf,
                    const Matrix& test_sample) {
  return kl_hat(evaluate(true_logpdf, test_sample), evaluate(est_logpdf, test_sample));
}

LossEstimate l2_hat(const LogDensityFn& true_logpdf, const LogDensityFn& est_logpdf,
                    const Matrix& test_sample) {
  return l2_hat(evaluate(true_logpdf, test_sample), evaluate(est_logpdf, test_sample));
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_std_error(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double half_width = 1.96 * std::sqrt(static_cast<double>(n)) / 2.0;
  const int lo = std::max(1, static_cast<int>(std::floor(n / 2.0 - half_width)));
  const int hi = std::min(n, static_cast<int>(std::ceil(1.0 + n / 2.0 + half_width)));
  return (values[hi - 1] - values[lo - 1]) / (2.0 * 1.96);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& values) {
  WilcoxonResult out;
  std::vector<double> d;
  for (double v : values) {
    if (std::isfinite(v) && v != 0.0) d.push_back(v);
  }
  const int n = static_cast<int>(d.size());
  out.n_used = n;
  if (n == 0) return out;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  bool ties = false;
  for (int i = 0; i < n;) {
    int j = i;
    // log-ratios of equal magnitude can differ in the last bits
    const double base = std::abs(d[order[i]]);
    while (j + 1 < n && std::abs(d[order[j + 1]]) - base <= 1e-12 * base) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) rank[order[k]] = avg;
    const double t = j - i + 1;
    if (t > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    i = j + 1;
  }
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0) out.statistic += rank[i];
  }

  if (!ties && n <= 50) {
    out.exact = true;
    const int max_w = n * (n + 1) / 2;
    std::vector<double> count(max_w + 1, 0.0);
    count[0] = 1.0;
    for (int r = 1; r <= n; ++r) {
      for (int w = max_w; w >= r; --w) count[w] += count[w - r];
    }
    const double total = std::ldexp(1.0, n);
    const int w = static_cast<int>(std::lround(out.statistic));
    double lower = 0.0, upper = 0.0;
    for (int k = 0; k <= max_w; ++k) {
      if (k <= w) lower += count[k];
      if (k >= w) upper += count[k];
    }
    out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    return out;
  }

  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) return out;
  const double z = std::max(std::abs(out.statistic - mean) - 0.5, 0.0) / std::sqrt(var);
  out.p_value = std::min(1.0, 2.0 * normal_cdf(-z));
  return out;
}

std::string significance_flag(double p_value) {
  if (p_value > 0.05) return "**";
  if (p_value > 0.01) return "*";
  return "";
}

LossReport log_ratio_table(const Matrix& losses, const std::vector<std::string>& estimators,
                           int reference, const std::string& loss_name) {
  const int reps = static_cast<int>(losses.rows());
  const int k = static_cast<int>(losses.cols());
  if (k < 2) throw DimensionError("log_ratio_table: need at least two estimators");
  if (static_cast<int>(estimators.size()) != k) {
    throw DimensionError("log_ratio_table: one name per estimator column");
  }
  if (reference < 0 || reference >= k) throw DimensionError("log_ratio_table: bad reference");
  if (reps < 10) throw DomainError("log_ratio_table: at least 10 replications required");

  LossReport report;
  report.loss_name = loss_name;
  report.estimators = estimators;
  report.losses = losses;
  report.reference = reference;
  for (int e = 0; e < k; ++e) {
    EstimatorSummary s;
    s.name = estimators[e];
    std::vector<double> ratios;
    for (int r = 0; r < reps; ++r) {
      const double a = losses(r, e);
      const double b = losses(r, reference);
      if (std::isfinite(a) && std::isfinite(b) && a > 0.0 && b > 0.0) {
        ratios.push_back(std::log(a) - std::log(b));
      } else {
        ++s.n_excluded;
      }
    }
    s.n_valid = static_cast<int>(ratios.size());
    s.median = median(ratios);
    s.std_error = median_std_error(ratios);
    s.p_value = wilcoxon_signed_rank(ratios).p_value;
    s.flag = significance_flag(s.p_value);
    report.summary.push_back(s);
  }
  return report;
}

void write_report_csv(std::ostream& out, const std::vector<LossReport>& reports) {
  out << "loss,estimator,reference,median,std_error,p_value,flag,n_valid,n_excluded\n";
  for (const auto& rep : reports) {
    for (const auto& s : rep.summary) {
      out << rep.loss_name << ',' << s.name << ',' << rep.estimators[rep.reference] << ','
          << fmt(s.median, 6) << ',' << fmt(s.std_error, 6) << ',' << fmt(s.p_value, 6) << ','
          << s.flag << ',' << s.n_valid << ',' << s.n_excluded << '\n';
    }
  }
}

std::string format_report_text(const std::vector<LossReport>& reports) {
  std::ostringstream out;
  if (reports.empty()) return "";
  const auto& names = reports.front().estimators;
  constexpr int kWidth = 14;
  out << "median log(loss / loss of " << names[reports.front().reference]
      << "); standard errors in brackets\n"
      << "* not rejected at 1%, ** not rejected at 5% (signed-rank test)\n";
  out << std::setw(6) << "";
  for (const auto& n : names) out << std::setw(kWidth) << n;
  out << '\n';
  for (const auto& rep : reports) {
    out << std::setw(6) << rep.loss_name;
    for (const auto& s : rep.summary) out << std::setw(kWidth) << fmt(s.median) + s.flag;
    out << '\n' << std::setw(6) << "";
    for (const auto& s : rep.summary) out << std::setw(kWidth) << "(" + fmt(s.std_error) + ")";
    out << '\n';
  }
  return out.str();
}

void write_plot_data_csv(std::ostream& out, const std::vector<LossReport>& reports) {
  out << "replication,loss,estimator,value,log_ratio\n";
  for (const auto& rep : reports) {
    for (Eigen::Index r = 0; r < rep.losses.rows(); ++r) {
      const double ref = rep.losses(r, rep.reference);
      for (Eigen::Index e = 0; e < rep.losses.cols(); ++e) {
        const double v = rep.losses(r, e);
        const double lr = (v > 0 && ref > 0) ? std::log(v) - std::log(ref)
                                             : std::numeric_limits<double>::quiet_NaN();
        out << r << ',' << rep.loss_name << ',' << rep.estimators[e] << ',' << fmt(v, 8) << ','
            << fmt(lr, 8) << '\n';
      }
    }
  }
}

LpsResult lps_cv(const Matrix& data, const Matrix& z, const EstimatorFactory& factory, int folds,
                 RngStream& rng) {
  const int n = static_cast<int>(data.rows());
  if (folds < 2) throw DomainError("lps_cv: need at least two folds");
  if (n < folds) throw DomainError("lps_cv: more folds than observations");
  if (z.cols() > 0 && z.rows() != n) throw DimensionError("lps_cv: regressor rows mismatch");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.index(static_cast<std::size_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  LpsResult out;
  out.fold_of_row.assign(n, 0);
  for (int pos = 0; pos < n; ++pos) {
    out.fold_of_row[perm[pos]] = static_cast<int>(static_cast<long>(pos) * folds / n);
  }

  double total = 0.0;
  int completed = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (out.fold_of_row[i] == f ? test : train).push_back(i);
    const Matrix ytr = data(train, Eigen::all);
    const Matrix yte = data(test, Eigen::all);
    const Matrix ztr = z.cols() > 0 ? Matrix(z(train, Eigen::all)) : Matrix(ytr.rows(), 0);
    const Matrix zte = z.cols() > 0 ? Matrix(z(test, Eigen::all)) : Matrix(yte.rows(), 0);
    RngStream sub = rng.split(static_cast<std::uint64_t>(f) + 1);
    try {
      const FittedScorer scorer = factory(ytr, ztr, sub);
      double s = 0.0;
      for (Eigen::Index i = 0; i < yte.rows(); ++i) {
        const Vector zi = zte.cols() > 0 ? Vector(zte.row(i).transpose()) : Vector();
        s += scorer.logpdf(yte.row(i).transpose(), zi);
      }
      if (!std::isfinite(s)) throw EstimationError("non-finite held-out log-density");
      out.fold_scores.push_back(s);
      out.components.push_back(scorer.components);
      out.dof.push_back(scorer.dof);
      total += s;
      ++completed;
    } catch (const std::exception& err) {
      out.fold_scores.push_back(std::numeric_limits<double>::quiet_NaN());
      out.components.push_back(std::numeric_limits<double>::quiet_NaN());
      out.dof.push_back(std::numeric_limits<double>::quiet_NaN());
      ++out.failed_folds;
      out.errors.push_back("fold " + std::to_string(f) + ": " + err.what());
    }
  }
  out.lps = completed > 0 ? total / completed : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw DimensionError("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

double ks_critical_1pct(int n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("kendall_tau: bad lengths");
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = (a[i] > a[j]) - (a[i] < a[j]);
      const int sy = (b[i] > b[j]) - (b[i] < b[j]);
      s += sx * sy;
    }
  }
  return s / (0.5 * n * (n - 1.0));
}

}  // namespace mvdens
