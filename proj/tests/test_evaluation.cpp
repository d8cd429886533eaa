#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mvdens/evaluation.hpp"
#include "oracles.hpp"

using namespace mvdens;

namespace {

Matrix normal_sample(int n, RngStream& rng) {
  Matrix y(n, 1);
  for (int i = 0; i < n; ++i) y(i, 0) = rng.normal();
  return y;
}

LogDensityFn normal_fn(double mu, double var) {
  return [=](const Vector& y) { return std::log(oracle::phi(y(0), mu, std::sqrt(var))); };
}

// Two-sided exact signed-rank p-value by enumerating all sign patterns.
double exact_signed_rank_p(const std::vector<double>& d) {
  const int n = static_cast<int>(d.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[idx[i]] = i + 1;
  int w = 0;
  for (int i = 0; i < n; ++i) w += d[i] > 0 ? rank[i] : 0;
  long lower = 0, upper = 0;
  for (long mask = 0; mask < (1L << n); ++mask) {
    int s = 0;
    for (int i = 0; i < n; ++i) s += (mask >> i & 1) ? i + 1 : 0;
    lower += s <= w;
    upper += s >= w;
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / static_cast<double>(1L << n));
}

}  // namespace

TEST_CASE("kl_hat") {
  RngStream rng(1);
  const Matrix y = normal_sample(5000, rng);
  const auto zero = kl_hat(normal_fn(0, 1), normal_fn(0, 1), y);
  CHECK(zero.value == 0.0);

  const auto shift = kl_hat(normal_fn(0, 1), normal_fn(1, 1), y);
  CHECK(std::abs(shift.value - 0.5) < 3.0 * shift.std_error);
  const auto scale = kl_hat(normal_fn(0, 1), normal_fn(0, 2), y);
  const double closed = 0.5 * (0.5 + std::log(2.0) - 1.0);
  CHECK(closed == doctest::Approx(0.09657).epsilon(1e-4));
  CHECK(std::abs(scale.value - closed) < 3.0 * scale.std_error);
}

TEST_CASE("kl_hat floors non-finite estimates") {
  const std::vector<double> t{-1.0, -2.0, -1.5};
  const std::vector<double> e{-1.0, -INFINITY, NAN};
  const auto r = kl_hat(t, e);
  CHECK(r.floored == 2);
  CHECK(r.value == doctest::Approx((0.0 + (-2.0 + 700.0) + (-1.5 + 700.0)) / 3.0));
}

TEST_CASE("kl_hat is positive on average for a wrong estimator") {
  double total = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    RngStream rng(50 + seed);
    total += kl_hat(normal_fn(0, 1), normal_fn(0.1, 1.1), normal_sample(5000, rng)).value;
  }
  CHECK(total / 20 > 0.0);
}

TEST_CASE("l2_hat against quadrature") {
  RngStream rng(2);
  const Matrix y = normal_sample(5000, rng);
  CHECK(l2_hat(normal_fn(0, 1), normal_fn(0, 1), y).value == 0.0);
  for (auto [mu, var] : {std::pair{0.5, 1.0}, std::pair{0.0, 1.5}}) {
    const double quad = oracle::simpson_1d(
        [&](double x) {
          const double d = oracle::phi(x) - oracle::phi(x, mu, std::sqrt(var));
          return d * d;
        },
        -20, 20, 20000);
    const auto r = l2_hat(normal_fn(0, 1), normal_fn(mu, var), y);
    CHECK(r.value > 0.0);
    CHECK(std::abs(r.value - quad) < 3.0 * r.std_error);
  }
}

TEST_CASE("Monte Carlo error shrinks as N^-1/2") {
  auto spread = [](int n) {
    std::vector<double> v;
    for (int seed = 0; seed < 40; ++seed) {
      RngStream rng(900 + seed);
      v.push_back(kl_hat(normal_fn(0, 1), normal_fn(0.5, 1.3), normal_sample(n, rng)).value);
    }
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };
  const double ratio = spread(1250) / spread(5000);
  CHECK(ratio > 2.0 * 0.7);
  CHECK(ratio < 2.0 * 1.3);
}

TEST_CASE("median and its standard error") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  std::vector<double> sym(50);
  for (int i = 0; i < 50; ++i) sym[i] = i < 25 ? -0.1 : 0.1;
  CHECK(median(sym) == 0.0);
  RngStream rng(3);
  std::vector<double> big(2000);
  for (double& x : big) x = rng.normal();
  // asymptotic SE of a normal median: sqrt(pi / 2) / sqrt(n)
  CHECK(median_std_error(big) == doctest::Approx(std::sqrt(std::numbers::pi / 2.0 / 2000.0)).epsilon(0.15));
}

TEST_CASE("Wilcoxon signed-rank matches the exact null for small n") {
  RngStream rng(4);
  for (int n = 1; n <= 12; ++n) {
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> d(n);
      for (double& x : d) x = rng.normal() + 0.3;
      const auto r = wilcoxon_signed_rank(d);
      CHECK(r.exact);
      CHECK(r.p_value == doctest::Approx(exact_signed_rank_p(d)).epsilon(1e-12));
    }
  }
  // reference values from an independent statistics package
  const auto exact = wilcoxon_signed_rank({1.2, -0.3, 0.8, 2.1, -0.4, 0.9, 1.6, 0.05, -1.1, 0.7});
  CHECK(exact.p_value == doctest::Approx(0.130859375).epsilon(1e-12));
  const auto approx = wilcoxon_signed_rank({0.3, -0.1, 0.5, 0.5, 0.2, -0.2, 0.7, 0.1, -0.4, 0.9, 0.6, 0.6, 0.05, -0.05});
  CHECK(!approx.exact);
  CHECK(approx.p_value == doctest::Approx(0.035238516319533744).epsilon(1e-10));
}

TEST_CASE("significance flags") {
  CHECK(significance_flag(0.5) == "**");
  CHECK(significance_flag(0.03) == "*");
  CHECK(significance_flag(0.001) == "");
}

TEST_CASE("log_ratio_table") {
  const int reps = 50;
  Matrix same(reps, 2);
  RngStream rng(5);
  for (int r = 0; r < reps; ++r) same(r, 0) = same(r, 1) = 0.1 + rng.uniform();
  const auto a = log_ratio_table(same, {"ref", "copy"}, 0);
  CHECK(a.summary[1].median == 0.0);
  CHECK(a.summary[1].p_value == 1.0);
  CHECK(a.summary[1].flag == "**");
  CHECK(a.summary[0].median == 0.0);

  Matrix up(reps, 2);
  for (int r = 0; r < reps; ++r) {
    up(r, 0) = 0.2 + rng.uniform();
    up(r, 1) = up(r, 0) * std::exp(0.1);
  }
  const auto b = log_ratio_table(up, {"ref", "worse"}, 0);
  CHECK(b.summary[1].median == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(b.summary[1].p_value < 0.01);
  CHECK(b.summary[1].flag == "");

  Matrix pm(reps, 2);
  for (int r = 0; r < reps; ++r) {
    pm(r, 0) = 1.0;
    pm(r, 1) = std::exp(r % 2 ? 0.1 : -0.1);
  }
  const auto c = log_ratio_table(pm, {"ref", "mixed"}, 0);
  CHECK(std::abs(c.summary[1].median) < 1e-15);
  CHECK(c.summary[1].p_value > 0.05);
  CHECK(c.summary[1].flag == "**");

  // antisymmetry under swapping the reference
  Matrix losses(reps, 2);
  for (int r = 0; r < reps; ++r) {
    losses(r, 0) = 0.05 + rng.uniform();
    losses(r, 1) = 0.05 + rng.uniform();
  }
  const auto fwd = log_ratio_table(losses, {"a", "b"}, 0);
  const auto rev = log_ratio_table(losses, {"a", "b"}, 1);
  CHECK(fwd.summary[1].median == -rev.summary[0].median);
  CHECK(fwd.summary[1].p_value == doctest::Approx(rev.summary[0].p_value).epsilon(1e-14));

  // failed fits are excluded and counted
  losses(3, 1) = NAN;
  const auto excl = log_ratio_table(losses, {"a", "b"}, 0);
  CHECK(excl.summary[1].n_valid == reps - 1);
  CHECK(excl.summary[1].n_excluded == 1);
  CHECK_THROWS(log_ratio_table(Matrix::Ones(5, 2), {"a", "b"}, 0));
}

TEST_CASE("report writers") {
  Matrix losses(10, 2);
  for (int r = 0; r < 10; ++r) {
    losses(r, 0) = 1.0;
    losses(r, 1) = 2.0;
  }
  const auto rep = log_ratio_table(losses, {"A", "B"}, 0);
  std::ostringstream csv;
  write_report_csv(csv, {rep});
  std::istringstream lines(csv.str());
  std::string header, row_a, row_b;
  std::getline(lines, header);
  std::getline(lines, row_a);
  std::getline(lines, row_b);
  CHECK(header == "loss,estimator,reference,median,std_error,p_value,flag,n_valid,n_excluded");
  CHECK(row_a.rfind("KL,A,A,0.000000,", 0) == 0);
  CHECK(row_b.rfind("KL,B,A,0.693147,", 0) == 0);
  std::ostringstream plot;
  write_plot_data_csv(plot, {rep});
  CHECK(plot.str().rfind("replication,loss,estimator,value,log_ratio\n", 0) == 0);
  const std::string text = format_report_text({rep});
  CHECK(text.find("0.6931") != std::string::npos);
}

TEST_CASE("lps_cv") {
  // uniform density on a box: every fold scores n_fold * log(1 / volume)
  RngStream rng(6);
  Matrix y(100, 2);
  for (int i = 0; i < 100; ++i) y.row(i) << 4.0 * rng.uniform() - 2.0, 3.0 * rng.uniform();
  const EstimatorFactory uniform = [](const Matrix&, const Matrix&, RngStream&) {
    FittedScorer s;
    s.logpdf = [](const Vector&, const Vector&) { return std::log(1.0 / 12.0); };
    return s;
  };
  RngStream cv(7);
  const auto r = lps_cv(y, Matrix(100, 0), uniform, 10, cv);
  CHECK(r.lps == doctest::Approx(10.0 * std::log(1.0 / 12.0)).epsilon(1e-12));
  for (double f : r.fold_scores) CHECK(f == doctest::Approx(10.0 * std::log(1.0 / 12.0)).epsilon(1e-12));

  // determinism
  RngStream cv2(7);
  const auto again = lps_cv(y, Matrix(100, 0), uniform, 10, cv2);
  CHECK(again.fold_of_row == r.fold_of_row);
  CHECK(again.lps == r.lps);

  // true model beats a wider normal; expected gap per point is
  // E[log N(y;0,1) - log N(y;0,4)] = log 2 - 3/8
  RngStream data(8);
  const Matrix x = normal_sample(1000, data);
  auto normal_factory = [](double var) -> EstimatorFactory {
    return [var](const Matrix&, const Matrix&, RngStream&) {
      FittedScorer s;
      s.logpdf = [var](const Vector& v, const Vector&) { return std::log(oracle::phi(v(0), 0.0, std::sqrt(var))); };
      return s;
    };
  };
  RngStream c1(9), c2(9);
  const auto good = lps_cv(x, Matrix(1000, 0), normal_factory(1.0), 10, c1);
  const auto wide = lps_cv(x, Matrix(1000, 0), normal_factory(4.0), 10, c2);
  CHECK(good.lps > wide.lps);
  CHECK((good.lps - wide.lps) / 100.0 == doctest::Approx(std::log(2.0) - 0.375).epsilon(0.2));

  RngStream c3(1);
  CHECK_THROWS(lps_cv(x, Matrix(1000, 0), normal_factory(1.0), 1001, c3));
}

TEST_CASE("KS statistic and Kendall tau") {
  std::vector<double> u{0.1, 0.4, 0.35, 0.8};
  CHECK(ks_statistic(u, [](double x) { return x; }) == doctest::Approx(oracle::ks(u, [](double x) { return x; })));
  CHECK(ks_critical_1pct(10000) == doctest::Approx(0.016276));
  CHECK(kendall_tau({1, 2, 3, 4}, {1, 2, 3, 4}) == 1.0);
  CHECK(kendall_tau({1, 2, 3, 4}, {4, 3, 2, 1}) == -1.0);
  // 6 pairs: concordant 4, discordant 2
  CHECK(kendall_tau({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(4.0 / 6.0));
}
