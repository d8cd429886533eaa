#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "mvdens/io.hpp"

namespace mvdens::cli {

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string out = ".";
  bool emit_plot_data = false;
};

// ---------------------------------------------------------------- config helpers

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw InputError("unknown key '" + key + "' in " + where + " (allowed: " + list + ")");
    }
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InputError(std::string("config key '") + key + "' has the wrong type");
  }
}

template <class T>
T get_required(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError(std::string("missing key '") + key + "' in " + where);
  return get_or<T>(j, key, T{});
}

Json load_config(const std::string& path) {
  if (path.empty()) throw InputError("--config is required");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

SaConfig parse_sa(const Json& j) {
  check_keys(j, {"batch_size", "iterations", "alpha_coef", "alpha_mean", "alpha_cov", "alpha_weight",
                 "schedule_c", "schedule_tau", "prior_dof", "weight_normalized", "weight_floor"},
             "options.sa");
  SaConfig c;
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.iterations = get_or(j, "iterations", c.iterations);
  c.alpha_coef = get_or(j, "alpha_coef", c.alpha_coef);
  c.alpha_mean = get_or(j, "alpha_mean", c.alpha_mean);
  c.alpha_cov = get_or(j, "alpha_cov", c.alpha_cov);
  c.alpha_weight = get_or(j, "alpha_weight", c.alpha_weight);
  c.schedule_c = get_or(j, "schedule_c", c.schedule_c);
  c.schedule_tau = get_or(j, "schedule_tau", c.schedule_tau);
  c.prior_dof = get_or(j, "prior_dof", c.prior_dof);
  c.weight_normalized = get_or(j, "weight_normalized", c.weight_normalized);
  c.weight_floor = get_or(j, "weight_floor", c.weight_floor);
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw InputError(e.what());
  }
  return c;
}

EstimatorOptions parse_options(const Json& root) {
  EstimatorOptions o;
  if (!root.contains("options")) return o;
  const Json& j = root.at("options");
  check_keys(j, {"sa", "max_components", "nu_grid", "epsilon", "is_draws"}, "options");
  if (j.contains("sa")) o.sa = parse_sa(j.at("sa"));
  o.max_components = get_or(j, "max_components", o.max_components);
  o.nu_grid = get_or(j, "nu_grid", o.nu_grid);
  o.epsilon = get_or(j, "epsilon", o.epsilon);
  o.is_draws = get_or(j, "is_draws", o.is_draws);
  if (o.max_components < 1) throw InputError("options.max_components must be at least 1");
  if (o.nu_grid.empty() || std::any_of(o.nu_grid.begin(), o.nu_grid.end(), [](double v) { return !(v > 2.0); })) {
    throw InputError("options.nu_grid must be non-empty with values above 2");
  }
  if (!(o.epsilon > 0.0 && o.epsilon <= 1.0)) throw InputError("options.epsilon must lie in (0, 1]");
  if (o.is_draws < 1000) throw InputError("options.is_draws must be at least 1000");
  return o;
}

struct DgpChoice {
  bool figure1 = false;
  DgpSpec spec;
  Json description;
};

DgpChoice parse_dgp(const Json& j) {
  check_keys(j, {"kind", "p", "theta"}, "dgp");
  DgpChoice out;
  const std::string kind = get_required<std::string>(j, "kind", "dgp");
  const int p = get_or(j, "p", 5);
  if (p < 1) throw InputError("dgp.p must be positive");
  out.description = {{"kind", kind}};
  if (kind == "figure1") {
    out.figure1 = true;
    return out;
  }
  DgpKind k;
  try {
    k = dgp_kind_from_string(kind);
  } catch (const DomainError&) {
    throw InputError("unknown dgp kind '" + kind +
                     "' (valid: normal_copula, clayton, scale_mixture, mn_plus_uniform, figure1)");
  }
  switch (k) {
    case DgpKind::NormalCopula: out.spec = dgp_normal_copula(p); break;
    case DgpKind::ClaytonCopula: {
      const double theta = get_or(j, "theta", 5.0);
      if (!(theta > 0.0)) throw InputError("dgp.theta must be positive");
      out.spec = dgp_clayton(p, theta);
      out.description["theta"] = theta;
      break;
    }
    case DgpKind::ScaleMixture: out.spec = dgp_scale_mixture(p); break;
    case DgpKind::MnPlusUniform: out.spec = dgp_mn_plus_uniform(p); break;
    default: throw InputError("dgp kind '" + kind + "' is only available through figure1");
  }
  out.description["p"] = p;
  return out;
}

std::vector<std::string> parse_estimators(const Json& j) {
  const auto names = get_required<std::vector<std::string>>(j, "estimators", "config");
  if (names.empty()) throw InputError("estimators must not be empty");
  for (const auto& n : names) {
    if (!is_estimator_name(n)) {
      std::string valid;
      for (const auto& v : estimator_names()) valid += (valid.empty() ? "" : ", ") + v;
      throw InputError("unknown estimator '" + n + "' (valid: " + valid + ")");
    }
  }
  return names;
}

std::uint64_t resolve_seed(const Json& j, const CommonFlags& flags) {
  if (flags.seed) return *flags.seed;
  return get_or<std::uint64_t>(j, "seed", 1);
}

fs::path prepare_out(const CommonFlags& flags) {
  const fs::path dir(flags.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + flags.out + "'");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

std::vector<std::string> coordinate_names(const std::string& prefix, int p) {
  std::vector<std::string> names;
  for (int j = 1; j <= p; ++j) names.push_back(prefix + std::to_string(j));
  return names;
}

struct Dataset {
  Matrix y;
  Matrix z;
};

Dataset load_dataset(const Json& j) {
  const std::string input = get_required<std::string>(j, "input", "config");
  const CsvTable table = read_csv_file(input);
  const auto regressors = get_or(j, "regressors", std::vector<std::string>{});
  std::vector<std::string> columns = get_or(j, "columns", std::vector<std::string>{});
  if (columns.empty()) {
    for (const auto& h : table.header) {
      if (std::find(regressors.begin(), regressors.end(), h) == regressors.end()) columns.push_back(h);
    }
  }
  Dataset d;
  d.y = table.columns(columns);
  d.z = regressors.empty() ? Matrix(d.y.rows(), 0) : table.columns(regressors);
  if (d.y.cols() < 1) throw InputError("no response columns selected");
  if (d.y.rows() <= d.y.cols()) throw InputError("need more rows than response columns");
  return d;
}

std::string fmt(double v, const char* f = "%.6f") {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string describe(const FittedModel& model) {
  std::ostringstream log;
  auto bic_lines = [&](const std::vector<BicEntry>& table, const std::string& label) {
    log << label << "\n  m  parameters  loglik  bic\n";
    for (const auto& e : table) {
      log << "  " << e.components << "  " << e.parameters << "  "
          << (e.ok ? fmt(e.loglik, "%.4f") + "  " + fmt(e.bic, "%.4f") : "failed: " + e.message) << "\n";
    }
  };
  if (const auto* m = std::get_if<MixtureOfNormals>(&model)) {
    log << "mixture of normals, m = " << m->components() << "\n";
    if (m->metadata.bic) log << "bic = " << fmt(*m->metadata.bic, "%.4f") << "\n";
  } else if (const auto* c = std::get_if<CopulaModel>(&model)) {
    log << "copula family = " << to_string(c->family) << "\n";
    for (std::size_t j = 0; j < c->marginals.bic.size(); ++j) {
      bic_lines(c->marginals.bic[j], "marginal " + std::to_string(j + 1) + " BIC table");
    }
    if (c->family == CopulaFamily::StudentT) {
      log << "nu profile (nu, log-likelihood)\n";
      for (const auto& [nu, ll] : c->diagnostics.nu_profile) log << "  " << fmt(nu, "%g") << "  " << fmt(ll, "%.4f") << "\n";
      log << "DoF = " << format_dof(c->nu) << " (nu = " << fmt(c->nu, "%.4f") << ")\n";
    }
    if (c->joint) bic_lines(c->diagnostics.joint_bic, "joint BIC table");
    if (is_archimedean(c->family)) log << "theta = " << fmt(c->theta, "%.6f") << "\n";
    if (c->family == CopulaFamily::Normal) {
      log << "penalized SA iterations = " << c->diagnostics.penalty_iterations << "\n";
    }
    for (const auto& w : c->diagnostics.warnings) log << "warning: " << w << "\n";
  } else {
    const auto& a = std::get<MarginallyAdaptedDensity>(model);
    log << "marginally adapted mixture, base m = " << a.base.components() << "\n"
        << "epsilon = " << a.epsilon << "\nlog k = " << fmt(a.k.log_k) << " (se " << fmt(a.k.std_error)
        << ", M = " << a.k.draws << ")\n"
        << "clamp fraction low = " << fmt(a.k.clamp_low_fraction) << ", high = " << fmt(a.k.clamp_high_fraction)
        << "\n";
    for (const auto& w : a.warnings) log << "warning: " << w << "\n";
  }
  return log.str();
}

// ---------------------------------------------------------------- subcommands

int cmd_simulate(const CommonFlags& flags) {
  const Json cfg = load_config(flags.config);
  check_keys(cfg, {"dgp", "n", "n_test", "seed"}, "simulate config");
  const DgpChoice dgp = parse_dgp(get_required<Json>(cfg, "dgp", "simulate config"));
  const int n = get_required<int>(cfg, "n", "simulate config");
  const int n_test = get_or(cfg, "n_test", 0);
  if (n < 1) throw InputError("n must be positive");
  if (n_test < 0) throw InputError("n_test must be non-negative");
  const std::uint64_t seed = resolve_seed(cfg, flags);
  const fs::path out = prepare_out(flags);
  RngStream root(seed, 0);

  Json manifest = {{"seed", seed}, {"dgp", dgp.description}, {"n", n}, {"n_test", n_test}};
  if (dgp.figure1) {
    const auto [three, two] = dgp_figure1();
    const std::vector<std::string> header{"y1", "y2", "x1", "x2"};
    RngStream r1 = root.split(0), r2 = root.split(1);
    write_csv_file((out / "figure1_three_separated.csv").string(), header, latent_plot_data(three, n, r1));
    write_csv_file((out / "figure1_two_scale.csv").string(), header, latent_plot_data(two, n, r2));
    manifest["files"] = {"figure1_three_separated.csv", "figure1_two_scale.csv"};
  } else {
    const auto header = coordinate_names("y", dgp.spec.p);
    RngStream train_rng = root.split(0);
    write_csv_file((out / "train.csv").string(), header, dgp.spec.sample(n, train_rng));
    manifest["files"] = {"train.csv"};
    if (n_test > 0) {
      RngStream test_rng = root.split(1);
      write_csv_file((out / "test.csv").string(), header, dgp.spec.sample(n_test, test_rng));
      manifest["files"].push_back("test.csv");
    }
  }
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

int cmd_fit(const CommonFlags& flags) {
  const Json cfg = load_config(flags.config);
  check_keys(cfg, {"input", "estimator", "columns", "regressors", "options", "seed"}, "fit config");
  const std::string name = get_required<std::string>(cfg, "estimator", "fit config");
  if (!is_estimator_name(name)) {
    std::string valid;
    for (const auto& v : estimator_names()) valid += (valid.empty() ? "" : ", ") + v;
    throw InputError("unknown estimator '" + name + "' (valid: " + valid + ")");
  }
  const EstimatorOptions options = parse_options(cfg);
  const Dataset data = load_dataset(cfg);
  const std::uint64_t seed = resolve_seed(cfg, flags);
  const fs::path out = prepare_out(flags);
  RngStream rng(seed, 0);
  std::string log = "estimator = " + name + "\nseed = " + std::to_string(seed) + "\nn = " +
                    std::to_string(data.y.rows()) + ", p = " + std::to_string(data.y.cols()) +
                    ", k = " + std::to_string(data.z.cols()) + "\n";
  try {
    const FittedModel model = fit_estimator(name, data.y, data.z, options, rng);
    write_text(out / "model.json", to_json(model).dump(2) + "\n");
    log += describe(model);
    write_text(out / "fit_log.txt", log);
  } catch (const EstimationError& e) {
    write_text(out / "fit_log.txt", log + "estimation failed: " + e.what() + "\n");
    throw;
  }
  return kExitOk;
}

int cmd_evaluate(const CommonFlags& flags) {
  const Json cfg = load_config(flags.config);
  check_keys(cfg, {"dgp", "estimators", "reference", "replications", "n", "n_test", "options", "seed"},
             "evaluate config");
  const DgpChoice dgp = parse_dgp(get_required<Json>(cfg, "dgp", "evaluate config"));
  if (dgp.figure1) throw InputError("figure1 is not an evaluation DGP");
  const auto estimators = parse_estimators(cfg);
  const std::string reference = get_or<std::string>(cfg, "reference", estimators.front());
  const auto ref_it = std::find(estimators.begin(), estimators.end(), reference);
  if (ref_it == estimators.end()) throw InputError("reference '" + reference + "' is not among the estimators");
  if (estimators.size() < 2) throw InputError("evaluate needs at least two estimators");
  ReplicationConfig rc;
  rc.replications = get_or(cfg, "replications", 50);
  rc.n = get_or(cfg, "n", 500);
  rc.n_test = get_or(cfg, "n_test", 5000);
  rc.options = parse_options(cfg);
  rc.seed = resolve_seed(cfg, flags);
  rc.jobs = flags.jobs > 0 ? flags.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (rc.replications < 10) throw InputError("replications must be at least 10");
  if (rc.n <= dgp.spec.p) throw InputError("n must exceed the dimension");
  if (rc.n_test < 1) throw InputError("n_test must be positive");
  const fs::path out = prepare_out(flags);

  const ReplicationResult result = run_replications(dgp.spec, estimators, rc);
  const int ref = static_cast<int>(ref_it - estimators.begin());
  const std::vector<LossReport> reports{log_ratio_table(result.kl, estimators, ref, "KL"),
                                        log_ratio_table(result.l2, estimators, ref, "L2")};
  std::ostringstream csv;
  write_report_csv(csv, reports);
  write_text(out / "report.csv", csv.str());
  std::string text = "dgp = " + to_string(dgp.spec.kind) + ", p = " + std::to_string(dgp.spec.p) +
                     ", n = " + std::to_string(rc.n) + ", replications = " +
                     std::to_string(rc.replications) + ", seed = " + std::to_string(rc.seed) + "\n" +
                     format_report_text(reports);
  write_text(out / "report.txt", text);
  std::cout << text;
  if (flags.emit_plot_data) {
    std::ostringstream plot;
    write_plot_data_csv(plot, reports);
    write_text(out / "plot_data.csv", plot.str());
  }
  std::string failures;
  for (const auto& f : result.failures) failures += f + "\n";
  write_text(out / "failures.txt", failures);
  if (!result.failures.empty()) {
    std::cerr << result.failures.size() << " estimator fits failed; see failures.txt\n";
  }
  return kExitOk;
}

int cmd_cv(const CommonFlags& flags) {
  const Json cfg = load_config(flags.config);
  check_keys(cfg, {"input", "dgp", "n", "columns", "regressors", "estimators", "folds", "options", "seed"},
             "cv config");
  const auto estimators = parse_estimators(cfg);
  const int folds = get_or(cfg, "folds", 10);
  const EstimatorOptions options = parse_options(cfg);
  const std::uint64_t seed = resolve_seed(cfg, flags);
  RngStream root(seed, 0);

  Dataset data;
  if (cfg.contains("input")) {
    if (cfg.contains("dgp")) throw InputError("give either input or dgp, not both");
    data = load_dataset(cfg);
  } else {
    const DgpChoice dgp = parse_dgp(get_required<Json>(cfg, "dgp", "cv config"));
    if (dgp.figure1) throw InputError("figure1 is not a cross-validation DGP");
    const int n = get_required<int>(cfg, "n", "cv config");
    if (n < 1) throw InputError("n must be positive");
    RngStream data_rng = root.split(0);
    data.y = dgp.spec.sample(n, data_rng);
    data.z = Matrix(n, 0);
  }
  if (folds < 2) throw InputError("folds must be at least 2");
  if (folds > data.y.rows()) throw InputError("folds exceed the number of observations");
  const fs::path out = prepare_out(flags);

  struct Row {
    std::string name;
    LpsResult result;
    double noc, dof;
  };
  std::vector<Row> rows;
  for (const auto& name : estimators) {
    EstimatorFactory factory = [&](const Matrix& y, const Matrix& z, RngStream& rng) {
      FittedModel model = fit_estimator(name, y, z, options, rng);
      FittedScorer s;
      s.components = model_components(model);
      s.dof = model_dof(model);
      s.logpdf = [m = std::move(model)](const Vector& yi, const Vector& zi) { return model_logpdf(m, yi, zi); };
      return s;
    };
    // every estimator sees the same fold assignment
    RngStream cv_rng = root.split(1);
    LpsResult r = lps_cv(data.y, data.z, factory, folds, cv_rng);
    auto finite_mean = [](const std::vector<double>& v) {
      double s = 0.0;
      int c = 0;
      for (double x : v) {
        if (std::isfinite(x)) {
          s += x;
          ++c;
        }
      }
      return c > 0 ? s / c : std::numeric_limits<double>::quiet_NaN();
    };
    rows.push_back({name, r, finite_mean(r.components), finite_mean(r.dof)});
  }
  std::vector<int> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double la = rows[a].result.lps, lb = rows[b].result.lps;
    if (std::isnan(la)) return false;
    if (std::isnan(lb)) return true;
    return la > lb;
  });
  std::vector<int> rank(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i) + 1;

  std::ostringstream csv, text;
  csv << "estimator,lps,rank,noc,dof,failed_folds\n";
  text << "LPS = average over " << folds << " folds of the summed held-out log-density\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %14s %6s %8s %8s\n", "", "LPS", "Rank", "NoC", "DoF");
  text << line;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    const std::string dof = std::isnan(r.dof) ? "" : format_dof(r.dof);
    csv << r.name << ',' << fmt(r.result.lps) << ',' << rank[i] << ',' << fmt(r.noc, "%.2f") << ','
        << (std::isnan(r.dof) ? "NA" : fmt(r.dof, "%.4f")) << ',' << r.result.failed_folds << '\n';
    std::snprintf(line, sizeof line, "%-10s %14.2f %6d %8s %8s\n", r.name.c_str(), r.result.lps, rank[i],
                  std::isnan(r.noc) ? "" : fmt(r.noc, "%.1f").c_str(), dof.c_str());
    text << line;
    for (const auto& e : r.result.errors) std::cerr << r.name << ": " << e << "\n";
  }
  write_text(out / "lps.csv", csv.str());
  write_text(out / "lps.txt", text.str());
  std::cout << text.str();
  return kExitOk;
}

int cmd_sample(const CommonFlags& flags) {
  const Json cfg = load_config(flags.config);
  check_keys(cfg, {"model", "n", "burn_in", "regressors_input", "regressors", "seed"}, "sample config");
  const std::string model_path = get_required<std::string>(cfg, "model", "sample config");
  const int n = get_required<int>(cfg, "n", "sample config");
  const int burn_in = get_or(cfg, "burn_in", 1000);
  if (n < 1) throw InputError("n must be positive");
  if (burn_in < 0) throw InputError("burn_in must be non-negative");
  std::ifstream in(model_path);
  if (!in) throw InputError("cannot open model '" + model_path + "'");
  Json mj;
  try {
    mj = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError("model file is not valid JSON: " + std::string(e.what()));
  }
  const FittedModel model = model_from_json(mj);
  Matrix z(n, 0);
  if (cfg.contains("regressors_input")) {
    const CsvTable zt = read_csv_file(get_required<std::string>(cfg, "regressors_input", "sample config"));
    const auto names = get_or(cfg, "regressors", zt.header);
    z = zt.columns(names);
    if (z.rows() != n) throw InputError("regressor file must have n rows");
  }
  const std::uint64_t seed = resolve_seed(cfg, flags);
  const fs::path out = prepare_out(flags);
  RngStream rng(seed, 0);
  Matrix draws;
  std::string log = "seed = " + std::to_string(seed) + "\nn = " + std::to_string(n) + "\n";
  if (const auto* a = std::get_if<MarginallyAdaptedDensity>(&model)) {
    const MhResult r = mamn_sample(*a, n, burn_in, rng, z);
    draws = r.draws;
    log += "independence Metropolis-Hastings, burn-in = " + std::to_string(burn_in) +
           "\nacceptance rate = " + fmt(r.acceptance_rate) + "\n";
    if (r.warning) log += "warning: acceptance rate below 1%\n";
    std::cout << "acceptance rate = " << fmt(r.acceptance_rate) << "\n";
  } else {
    draws = model_sample(model, n, rng, z);
  }
  write_csv_file((out / "sample.csv").string(), coordinate_names("y", static_cast<int>(draws.cols())), draws);
  write_text(out / "sample_log.txt", log);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multivariate density estimation with mixtures, copulas and marginal adaptation"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON configuration file")->required();
    sub->add_option("--seed", seed_value, "random seed (overrides the config)");
    sub->add_option("--jobs", flags.jobs, "worker threads (default: logical cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_flag("--emit-plot-data", flags.emit_plot_data, "write long-format plot data");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "write training/test samples from a DGP");
  CLI::App* fit = app.add_subcommand("fit", "fit one estimator to a CSV data set");
  CLI::App* evaluate = app.add_subcommand("evaluate", "replicated KL/L2 comparison on a DGP");
  CLI::App* cv = app.add_subcommand("cv", "cross-validated log predictive scores");
  CLI::App* sample = app.add_subcommand("sample", "draw from a serialized model");
  for (auto* s : {simulate, fit, evaluate, cv, sample}) add_common(s);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }
  if (app.get_subcommands().front()->count("--seed") > 0) flags.seed = seed_value;

  try {
    if (simulate->parsed()) return cmd_simulate(flags);
    if (fit->parsed()) return cmd_fit(flags);
    if (evaluate->parsed()) return cmd_evaluate(flags);
    if (cv->parsed()) return cmd_cv(flags);
    return cmd_sample(flags);
  } catch (const EstimationError& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  }
}

}  // namespace mvdens::cli
