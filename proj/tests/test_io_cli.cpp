#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "mvdens/io.hpp"

using namespace mvdens;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mvdens_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& s) const { return path / s; }
};

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd, const fs::path& config, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{cmd, "--config", config.string(), "--out", out.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return cli::run(args);
}

// rank column of an lps.csv row
int rank_of(const std::string& csv, const std::string& name) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(name + ",", 0) != 0) continue;
    std::istringstream fields(line);
    std::string f;
    for (int i = 0; i < 3; ++i) std::getline(fields, f, ',');
    return std::stoi(f);
  }
  return -1;
}

}  // namespace

TEST_CASE("CSV reading") {
  std::istringstream good("a,\"b\"\n1,2.5\n-3e-1,4\n");
  const CsvTable t = read_csv(good);
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.data(1, 0) == -0.3);
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), InputError);

  std::istringstream bad("a,b\n1,2\n3,x\n");
  try {
    read_csv(bad);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream ragged("a,b\n1,2\n3\n");
  CHECK_THROWS_AS(read_csv(ragged), InputError);
}

TEST_CASE("CSV and JSON round trip at full precision") {
  RngStream rng(1);
  Matrix m(20, 3);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.normal() * std::pow(10.0, j * 7 - 7);
  std::stringstream ss;
  write_csv(ss, {"x", "y", "z"}, m);
  const CsvTable back = read_csv(ss);
  CHECK(back.data == m);

  RngStream fit_rng(2);
  Matrix y(300, 2);
  for (int i = 0; i < 300; ++i) y.row(i) = rng.normal_vector(2).transpose();
  const FittedModel model = fit_estimator("MN", y, Matrix(300, 0), EstimatorOptions{}, fit_rng);
  const FittedModel again = model_from_json(Json::parse(to_json(model).dump()));
  for (int i = 0; i < 10; ++i) {
    const Vector v = rng.normal_vector(2);
    CHECK(model_logpdf(again, v, Vector(0)) == model_logpdf(model, v, Vector(0)));
  }

  RngStream c_rng(3);
  const FittedModel cop = fit_estimator("tC", y, Matrix(300, 0), EstimatorOptions{}, c_rng);
  const FittedModel cop2 = model_from_json(Json::parse(to_json(cop).dump()));
  const Vector v = rng.normal_vector(2);
  CHECK(model_logpdf(cop2, v, Vector(0)) == model_logpdf(cop, v, Vector(0)));
  CHECK_THROWS(model_from_json(Json{{"type", "unknown"}}));
}

TEST_CASE("simulate subcommand") {
  TempDir dir("simulate");
  write(dir / "sim.json", R"({"dgp": {"kind": "clayton", "p": 3}, "n": 50, "n_test": 20, "seed": 9})");
  CHECK(run("simulate", dir / "sim.json", dir / "a") == cli::kExitOk);
  CHECK(run("simulate", dir / "sim.json", dir / "b") == cli::kExitOk);
  CHECK(slurp(dir / "a/train.csv") == slurp(dir / "b/train.csv"));
  CHECK(slurp(dir / "a/test.csv") == slurp(dir / "b/test.csv"));
  CHECK(read_csv_file((dir / "a/train.csv").string()).data.rows() == 50);
  CHECK(run("simulate", dir / "sim.json", dir / "c", {"--seed", "10"}) == cli::kExitOk);
  CHECK(slurp(dir / "a/train.csv") != slurp(dir / "c/train.csv"));

  write(dir / "fig.json", R"({"dgp": {"kind": "figure1"}, "n": 100, "seed": 1})");
  CHECK(run("simulate", dir / "fig.json", dir / "f") == cli::kExitOk);
  const CsvTable fig = read_csv_file((dir / "f/figure1_two_scale.csv").string());
  CHECK(fig.header == std::vector<std::string>{"y1", "y2", "x1", "x2"});
  CHECK(fs::exists(dir / "f/figure1_three_separated.csv"));

  write(dir / "zero.json", R"({"dgp": {"kind": "clayton"}, "n": 0})");
  CHECK(run("simulate", dir / "zero.json", dir / "z") == cli::kExitInput);
  write(dir / "typo.json", R"({"dgp": {"kind": "clayton"}, "n": 10, "sed": 1})");
  CHECK(run("simulate", dir / "typo.json", dir / "z") == cli::kExitInput);
  write(dir / "kind.json", R"({"dgp": {"kind": "gaussian"}, "n": 10})");
  CHECK(run("simulate", dir / "kind.json", dir / "z") == cli::kExitInput);
  CHECK(run("simulate", dir / "missing.json", dir / "z") == cli::kExitInput);
}

TEST_CASE("fit subcommand selects one component on single-normal data") {
  TempDir dir("fit");
  RngStream rng(4);
  Matrix y(1000, 2);
  for (int i = 0; i < 1000; ++i) y.row(i) = rng.normal_vector(2).transpose();
  write_csv_file((dir / "normal.csv").string(), {"a", "b"}, y);
  write(dir / "fit.json", "{\"input\": \"" + (dir / "normal.csv").string() + "\", \"estimator\": \"MN\"}");
  CHECK(run("fit", dir / "fit.json", dir / "mn") == cli::kExitOk);
  const FittedModel mn = model_from_json(Json::parse(slurp(dir / "mn/model.json")));
  CHECK(std::get<MixtureOfNormals>(mn).components() == 1);
  CHECK(fs::exists(dir / "mn/fit_log.txt"));

  write(dir / "sim.json", R"({"dgp": {"kind": "normal_copula", "p": 2}, "n": 1000, "seed": 3})");
  CHECK(run("simulate", dir / "sim.json", dir / "nc") == cli::kExitOk);
  write(dir / "mnc.json",
        "{\"input\": \"" + (dir / "nc/train.csv").string() + "\", \"estimator\": \"MNC\", \"seed\": 2}");
  CHECK(run("fit", dir / "mnc.json", dir / "mnc") == cli::kExitOk);
  const FittedModel mnc = model_from_json(Json::parse(slurp(dir / "mnc/model.json")));
  CHECK(std::get<CopulaModel>(mnc).joint->components() == 1);

  write(dir / "bad.json", "{\"input\": \"" + (dir / "normal.csv").string() + "\", \"estimator\": \"XYZ\"}");
  CHECK(run("fit", dir / "bad.json", dir / "x") == cli::kExitInput);
}

TEST_CASE("evaluate subcommand") {
  TempDir dir("evaluate");
  write(dir / "eval.json", R"({"dgp": {"kind": "normal_copula", "p": 2},
    "estimators": ["NC", "tC", "MNC", "Clayton", "Frank", "Gumbel", "MN", "MAMN"],
    "replications": 10, "n": 150, "n_test": 300, "options": {"is_draws": 5000}, "seed": 1})");
  CHECK(run("evaluate", dir / "eval.json", dir / "r", {"--jobs", "1", "--emit-plot-data"}) == cli::kExitOk);
  const std::string csv = slurp(dir / "r/report.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "loss,estimator,reference,median,std_error,p_value,flag,n_valid,n_excluded");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    if (line.rfind("KL,NC,", 0) == 0 || line.rfind("L2,NC,", 0) == 0) CHECK(line.find(",0.000000,") != std::string::npos);
  }
  CHECK(rows == 16);
  CHECK(fs::exists(dir / "r/plot_data.csv"));

  write(dir / "few.json", R"({"dgp": {"kind": "clayton", "p": 2}, "estimators": ["NC", "MN"], "replications": 5})");
  CHECK(run("evaluate", dir / "few.json", dir / "x") == cli::kExitInput);
  write(dir / "unknown.json", R"({"dgp": {"kind": "clayton", "p": 2}, "estimators": ["NC", "copula"]})");
  CHECK(run("evaluate", dir / "unknown.json", dir / "x") == cli::kExitInput);
}

TEST_CASE("cv subcommand") {
  TempDir dir("cv");
  write(dir / "one.json", R"({"dgp": {"kind": "normal_copula", "p": 2}, "n": 200, "estimators": ["NC"], "folds": 5})");
  CHECK(run("cv", dir / "one.json", dir / "one") == cli::kExitOk);
  CHECK(slurp(dir / "one/lps.csv").rfind("estimator,lps,rank,noc,dof,failed_folds\nNC,", 0) == 0);
  CHECK(rank_of(slurp(dir / "one/lps.csv"), "NC") == 1);

  int wins = 0;
  for (int seed = 1; seed <= 10; ++seed) {
    write(dir / "cmp.json", R"({"dgp": {"kind": "clayton", "p": 2}, "n": 300, "estimators": ["NC", "Clayton"],
      "folds": 5, "seed": )" + std::to_string(seed) + "}");
    CHECK(run("cv", dir / "cmp.json", dir / "cmp") == cli::kExitOk);
    wins += rank_of(slurp(dir / "cmp/lps.csv"), "Clayton") == 1;
  }
  CHECK(wins >= 8);

  write(dir / "folds.json", R"({"dgp": {"kind": "clayton", "p": 2}, "n": 4, "folds": 5, "estimators": ["NC"]})");
  CHECK(run("cv", dir / "folds.json", dir / "x") == cli::kExitInput);
}

TEST_CASE("command line errors") {
  CHECK(cli::run({}) == cli::kExitInput);
  CHECK(cli::run({"bogus"}) == cli::kExitInput);
  CHECK(cli::run({"fit"}) == cli::kExitInput);
}
