#pragma once

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "mvdens/core_math.hpp"

namespace mvdens {

/// Log-density used in place of a non-finite estimate.
inline constexpr double kLogDensityFloor = -700.0;

struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;  // Monte-Carlo standard error of the mean
  int floored = 0;         // points whose estimate was non-finite
};

/// Mean of true - est log-densities over a test sample drawn from the truth.
LossEstimate kl_hat(const std::vector<double>& true_logpdf, const std::vector<double>& est_logpdf);
/// Mean of (p - p_hat)^2 / p, computed from log-densities.
LossEstimate l2_hat(const std::vector<double>& true_logpdf, const std::vector<double>& est_logpdf);

using LogDensityFn = std::function<double(const Vector&)>;
LossEstimate kl_hat(const LogDensityFn& true_logpdf, const LogDensityFn& est_logpdf,
                    const Matrix& test_sample);
LossEstimate l2_hat(const LogDensityFn& true_logpdf, const LogDensityFn& est_logpdf,
                    const Matrix& test_sample);

/// Median with the midpoint convention for even counts.
double median(std::vector<double> values);
/// Standard error of the median from the order-statistic (binomial) 95% interval.
double median_std_error(std::vector<double> values);

struct WilcoxonResult {
  double statistic = 0.0;  // W+, sum of positive ranks
  double p_value = 1.0;    // two-sided
  int n_used = 0;          // nonzero differences
  bool exact = false;
};

/// One-sample signed-rank test of median zero; zeros are dropped.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& values);

/// Significance marker: "*" when not rejected at 1%, "**" when not rejected at 5%.
std::string significance_flag(double p_value);

struct EstimatorSummary {
  std::string name;
  double median = 0.0;
  double std_error = 0.0;
  double p_value = 1.0;
  std::string flag;
  int n_valid = 0;
  int n_excluded = 0;  // non-finite or non-positive losses
};

struct LossReport {
  std::string loss_name;
  std::vector<std::string> estimators;
  Matrix losses;  // replications x estimators; NaN marks a failed fit
  int reference = 0;
  std::vector<EstimatorSummary> summary;
};

/// Median log(loss / loss_ref) per estimator with SE and signed-rank p-value.
LossReport log_ratio_table(const Matrix& losses, const std::vector<std::string>& estimators,
                           int reference, const std::string& loss_name = "KL");

void write_report_csv(std::ostream& out, const std::vector<LossReport>& reports);
std::string format_report_text(const std::vector<LossReport>& reports);
/// Long format: replication, loss, estimator, value, log_ratio.
void write_plot_data_csv(std::ostream& out, const std::vector<LossReport>& reports);

/// A fitted model reduced to what cross-validation needs.
struct FittedScorer {
  std::function<double(const Vector& y, const Vector& z)> logpdf;
  double components = std::numeric_limits<double>::quiet_NaN();
  double dof = std::numeric_limits<double>::quiet_NaN();
};
using EstimatorFactory =
    std::function<FittedScorer(const Matrix& y, const Matrix& z, RngStream& rng)>;

struct LpsResult {
  double lps = 0.0;                 // mean over completed folds of the held-out sum
  std::vector<double> fold_scores;  // NaN for failed folds
  std::vector<int> fold_of_row;     // fold assignment after shuffling
  std::vector<double> components;
  std::vector<double> dof;
  int failed_folds = 0;
  std::vector<std::string> errors;
};

/// k-fold cross-validated log-predictive score (z may have zero columns).
LpsResult lps_cv(const Matrix& data, const Matrix& z, const EstimatorFactory& factory, int folds,
                 RngStream& rng);

/// Kolmogorov-Smirnov distance between a sample and a continuous cdf.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);
/// Asymptotic 1% critical value 1.6276 / sqrt(n).
double ks_critical_1pct(int n);

/// Kendall's tau-a (O(n^2)).
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mvdens
