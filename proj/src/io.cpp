#include "mvdens/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mvdens {

// ---------------------------------------------------------------- CSV

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw InputError("no column named '" + name + "'");
}

Matrix CsvTable::columns(const std::vector<std::string>& names) const {
  Matrix out(data.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) out.col(i) = data.col(column(names[i]));
  return out;
}

namespace {

struct Record {
  std::vector<std::string> fields;
  int line = 0;
};

std::vector<Record> parse_records(const std::string& text) {
  std::vector<Record> records;
  Record current;
  std::string field;
  int line = 1;
  current.line = 1;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    current.fields.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(current);
    current = Record{};
    current.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started) throw InputError("quote inside unquoted field", line);
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw InputError("unterminated quoted field", line);
  if (field_started || !current.fields.empty() || !field.empty()) end_record();
  return records;
}

double parse_number(const std::string& s, int line, std::size_t col) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != last) {
    throw InputError("field " + std::to_string(col + 1) + " is not a number: '" + s + "'", line);
  }
  if (!std::isfinite(v)) {
    throw InputError("field " + std::to_string(col + 1) + " is not finite", line);
  }
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::vector<Record> records = parse_records(buf.str());
  if (records.empty()) throw InputError("empty CSV: a header row is required");
  CsvTable table;
  table.header = records.front().fields;
  const std::size_t p = table.header.size();
  for (const auto& h : table.header) {
    if (h.empty()) throw InputError("empty column name in header", records.front().line);
  }
  table.data.resize(static_cast<Eigen::Index>(records.size() - 1), static_cast<Eigen::Index>(p));
  for (std::size_t r = 1; r < records.size(); ++r) {
    const Record& rec = records[r];
    if (rec.fields.size() != p) {
      throw InputError("expected " + std::to_string(p) + " fields, found " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    }
    for (std::size_t c = 0; c < p; ++c) {
      table.data(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
          parse_number(rec.fields[c], rec.line, c);
    }
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& data) {
  if (static_cast<Eigen::Index>(header.size()) != data.cols()) {
    throw DimensionError("write_csv: header and column count differ");
  }
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << quote_if_needed(header[i]);
  out << '\n';
  char buf[40];
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const Matrix& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_csv(out, header, data);
  if (!out) throw InputError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------- JSON

namespace {

Json vec_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector json_vec(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json mat_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_json(m.row(r).transpose()));
  return rows;
}

Matrix json_mat(const Json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = json_vec(j[r]);
    if (row.size() != cols) throw InputError("matrix row has the wrong length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InputError(std::string("missing JSON field '") + key + "'");
  return j.at(key);
}

Json bic_json(const std::vector<BicEntry>& table) {
  Json out = Json::array();
  for (const auto& e : table) {
    out.push_back({{"m", e.components}, {"parameters", e.parameters}, {"loglik", e.loglik},
                   {"bic", e.bic}, {"ok", e.ok}, {"message", e.message}});
  }
  return out;
}

std::vector<BicEntry> json_bic(const Json& j) {
  std::vector<BicEntry> out;
  for (const auto& e : j) {
    BicEntry b;
    b.components = e.at("m").get<int>();
    b.parameters = e.at("parameters").get<int>();
    b.loglik = e.at("loglik").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("loglik").get<double>();
    b.bic = e.at("bic").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("bic").get<double>();
    b.ok = e.at("ok").get<bool>();
    b.message = e.at("message").get<std::string>();
    out.push_back(b);
  }
  return out;
}

}  // namespace

Json to_json(const UnivariateMixture& mix) {
  return {{"weights", vec_json(mix.weights())}, {"means", vec_json(mix.means())},
          {"sds", vec_json(mix.sds())}};
}

UnivariateMixture univariate_from_json(const Json& j) {
  return UnivariateMixture(json_vec(field(j, "weights")), json_vec(field(j, "means")),
                           json_vec(field(j, "sds")));
}

Json to_json(const MixtureOfNormals& model) {
  Json j;
  j["type"] = "mixture";
  j["m"] = model.components();
  j["p"] = model.dim();
  j["k"] = model.regressors();
  j["weights"] = vec_json(model.weights);
  j["means"] = Json::array();
  for (const auto& mu : model.means) j["means"].push_back(vec_json(mu));
  j["cholesky_factors"] = Json::array();
  for (const auto& c : model.covariances) j["cholesky_factors"].push_back(mat_json(c.factor()));
  j["B"] = mat_json(model.coef);
  j["fit_metadata"] = {{"seed", model.metadata.seed},
                       {"iterations", model.metadata.iterations},
                       {"bic", model.metadata.bic ? Json(*model.metadata.bic) : Json(nullptr)}};
  return j;
}

MixtureOfNormals mixture_from_json(const Json& j) {
  try {
    MixtureOfNormals m;
    const int comps = field(j, "m").get<int>();
    const int p = field(j, "p").get<int>();
    const int k = field(j, "k").get<int>();
    m.weights = json_vec(field(j, "weights"));
    for (const auto& mu : field(j, "means")) m.means.push_back(json_vec(mu));
    for (const auto& l : field(j, "cholesky_factors")) {
      m.covariances.push_back(SpdMatrix::from_factor(json_mat(l, p)));
    }
    m.coef = k > 0 ? json_mat(field(j, "B"), p) : Matrix(0, p);
    if (m.coef.rows() != k) throw InputError("B must have k rows");
    const Json& meta = field(j, "fit_metadata");
    m.metadata.seed = meta.at("seed").get<std::uint64_t>();
    m.metadata.iterations = meta.at("iterations").get<int>();
    if (!meta.at("bic").is_null()) m.metadata.bic = meta.at("bic").get<double>();
    if (m.components() != comps) throw InputError("weights length disagrees with m");
    m.validate();
    return m;
  } catch (const Json::exception& e) {
    throw InputError(std::string("invalid mixture JSON: ") + e.what());
  }
}

Json to_json(const CopulaModel& model) {
  Json j;
  j["type"] = "copula";
  j["family"] = to_string(model.family);
  j["p"] = model.dim();
  j["marginals"] = Json::array();
  for (const auto& h : model.marginals.h) j["marginals"].push_back(to_json(h));
  j["coef"] = mat_json(model.marginals.coef);
  j["k"] = model.marginals.coef.rows();
  j["marginal_bic"] = Json::array();
  for (const auto& t : model.marginals.bic) j["marginal_bic"].push_back(bic_json(t));
  if (model.scale) j["scale_cholesky"] = mat_json(model.scale->factor());
  if (model.family == CopulaFamily::StudentT) j["nu"] = model.nu;
  if (model.joint) {
    j["joint"] = to_json(*model.joint);
    j["joint_bic"] = bic_json(model.diagnostics.joint_bic);
    Json ranges = Json::array();
    for (const auto& t : model.tables) ranges.push_back({t.lo, t.hi});
    j["table_ranges"] = ranges;
    j["table_nodes"] = model.tables.empty() ? 0 : model.tables.front().nodes;
  }
  if (is_archimedean(model.family)) j["theta"] = model.theta;
  Json profile = Json::array();
  for (const auto& [nu, ll] : model.diagnostics.nu_profile) {
    profile.push_back({nu, std::isfinite(ll) ? Json(ll) : Json(nullptr)});
  }
  j["diagnostics"] = {{"nu_profile", profile},
                      {"warnings", model.diagnostics.warnings},
                      {"penalty_iterations", model.diagnostics.penalty_iterations}};
  return j;
}

CopulaModel copula_from_json(const Json& j) {
  try {
    CopulaModel m;
    m.family = copula_family_from_string(field(j, "family").get<std::string>());
    const int p = field(j, "p").get<int>();
    for (const auto& h : field(j, "marginals")) m.marginals.h.push_back(univariate_from_json(h));
    const int k = field(j, "k").get<int>();
    m.marginals.coef = k > 0 ? json_mat(field(j, "coef"), p) : Matrix(0, p);
    if (j.contains("marginal_bic")) {
      for (const auto& t : j.at("marginal_bic")) m.marginals.bic.push_back(json_bic(t));
    }
    m.diagnostics.marginal_bic = m.marginals.bic;
    if (j.contains("scale_cholesky")) {
      m.scale = SpdMatrix::from_factor(json_mat(j.at("scale_cholesky"), p));
    }
    if (j.contains("nu")) m.nu = j.at("nu").get<double>();
    if (j.contains("theta")) m.theta = j.at("theta").get<double>();
    if (j.contains("joint")) {
      m.joint = mixture_from_json(j.at("joint"));
      if (j.contains("joint_bic")) m.diagnostics.joint_bic = json_bic(j.at("joint_bic"));
      const Json& ranges = field(j, "table_ranges");
      Vector lo(p), hi(p);
      for (int i = 0; i < p; ++i) {
        lo(i) = ranges.at(i).at(0).get<double>();
        hi(i) = ranges.at(i).at(1).get<double>();
      }
      build_latent_tables(m, lo, hi, field(j, "table_nodes").get<int>());
    }
    if (j.contains("diagnostics")) {
      const Json& d = j.at("diagnostics");
      for (const auto& e : d.at("nu_profile")) {
        m.diagnostics.nu_profile.emplace_back(
            e.at(0).get<double>(),
            e.at(1).is_null() ? -std::numeric_limits<double>::infinity() : e.at(1).get<double>());
      }
      m.diagnostics.warnings = d.at("warnings").get<std::vector<std::string>>();
      m.diagnostics.penalty_iterations = d.at("penalty_iterations").get<int>();
    }
    if (m.dim() != p) throw InputError("marginal count disagrees with p");
    m.validate();
    return m;
  } catch (const Json::exception& e) {
    throw InputError(std::string("invalid copula JSON: ") + e.what());
  }
}

Json to_json(const MarginallyAdaptedDensity& model) {
  Json j;
  j["type"] = "mamn";
  j["base"] = to_json(model.base);
  j["marginals"] = Json::array();
  for (const auto& h : model.h) j["marginals"].push_back(to_json(h));
  j["epsilon"] = model.epsilon;
  j["clamp"] = {model.clamp.lo, model.clamp.hi};
  j["log_k"] = model.k.log_k;
  j["log_k_std_error"] = model.k.std_error;
  j["M"] = model.k.draws;
  j["clamp_low_fraction"] = model.k.clamp_low_fraction;
  j["clamp_high_fraction"] = model.k.clamp_high_fraction;
  j["clamp_warning"] = model.k.warning;
  j["warnings"] = model.warnings;
  return j;
}

MarginallyAdaptedDensity mamn_from_json(const Json& j) {
  try {
    MarginallyAdaptedDensity m;
    m.base = mixture_from_json(field(j, "base"));
    for (const auto& h : field(j, "marginals")) m.h.push_back(univariate_from_json(h));
    for (int i = 0; i < m.base.dim(); ++i) m.f_marg.push_back(marginal(m.base, i));
    m.epsilon = field(j, "epsilon").get<double>();
    m.clamp.lo = field(j, "clamp").at(0).get<double>();
    m.clamp.hi = field(j, "clamp").at(1).get<double>();
    m.k.log_k = field(j, "log_k").get<double>();
    m.k.std_error = field(j, "log_k_std_error").get<double>();
    m.k.draws = field(j, "M").get<int>();
    m.k.clamp_low_fraction = field(j, "clamp_low_fraction").get<double>();
    m.k.clamp_high_fraction = field(j, "clamp_high_fraction").get<double>();
    m.k.warning = field(j, "clamp_warning").get<bool>();
    m.warnings = field(j, "warnings").get<std::vector<std::string>>();
    m.validate();
    return m;
  } catch (const Json::exception& e) {
    throw InputError(std::string("invalid adapted-density JSON: ") + e.what());
  }
}

Json to_json(const FittedModel& model) {
  return std::visit([](const auto& m) { return to_json(m); }, model);
}

FittedModel model_from_json(const Json& j) {
  const std::string type = field(j, "type").get<std::string>();
  if (type == "mixture") return mixture_from_json(j);
  if (type == "copula") return copula_from_json(j);
  if (type == "mamn") return mamn_from_json(j);
  throw InputError("unknown model type '" + type + "'");
}

}  // namespace mvdens
