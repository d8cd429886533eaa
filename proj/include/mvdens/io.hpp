#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvdens/copulas.hpp"
#include "mvdens/marginal_adaptation.hpp"
#include "mvdens/mixture.hpp"
#include "mvdens/simulation.hpp"

namespace mvdens {

/// Malformed input (CSV, JSON, configuration). Carries a line number when known.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct CsvTable {
  std::vector<std::string> header;
  Matrix data;

  /// Index of a named column; throws InputError if absent.
  int column(const std::string& name) const;
  /// Columns in the order given.
  Matrix columns(const std::vector<std::string>& names) const;
};

/// RFC-4180 reader: header row required, every other field numeric.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);
/// Values are written with 17 significant digits.
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& data);
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const Matrix& data);

using Json = nlohmann::json;

Json to_json(const UnivariateMixture& mix);
UnivariateMixture univariate_from_json(const Json& j);
Json to_json(const MixtureOfNormals& model);
MixtureOfNormals mixture_from_json(const Json& j);
Json to_json(const CopulaModel& model);
CopulaModel copula_from_json(const Json& j);
Json to_json(const MarginallyAdaptedDensity& model);
MarginallyAdaptedDensity mamn_from_json(const Json& j);

/// Tagged with "type": "mixture" | "copula" | "mamn".
Json to_json(const FittedModel& model);
FittedModel model_from_json(const Json& j);

}  // namespace mvdens
