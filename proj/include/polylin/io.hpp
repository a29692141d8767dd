#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "polylin/continuous.hpp"
#include "polylin/linearize.hpp"
#include "polylin/operator_sequence.hpp"
#include "polylin/perturbation.hpp"
#include "polylin/spectrum.hpp"

namespace polylin::io {

using Json = nlohmann::ordered_json;

/// Throws Config on an unreadable file.
std::string read_file(const std::filesystem::path& path);

/// Parses JSON text; malformed input raises Config naming line and column.
Json parse_json(std::string_view text, std::string_view what);

/// Config error if `doc` is not an object or carries a key outside `allowed`.
void require_fields(const Json& doc, const std::vector<std::string>& allowed, std::string_view what);

/// Discrete system document. `window` bounds builtin sequences that are
/// produced by integration.
struct SystemDocument {
  std::string name;
  int dim = 0;
  long origin = 1;
  std::string kind;
  OperatorSequence sequence;
};
SystemDocument parse_system(std::string_view text, long window);

/// Continuous system document; a missing "f_expr" means zero forcing.
struct ContinuousDocument {
  std::string name;
  int dim = 0;
  CoefficientField field;
  Forcing forcing;
  double eta = 0.0;
};
ContinuousDocument parse_continuous_system(std::string_view text);

/// Perturbation document; "c" is the claimed decay constant.
PerturbationFamily parse_perturbation(std::string_view text, int dim);

/// NaN and infinities become null.
Json number(double x);
/// Shortest text with 17 significant digits.
std::string format_double(double x);

Json to_json(const DichotomyEstimate& e);
Json to_json(const SpectrumResult& s);
Json to_json(const SpectralGapReport& g);
Json to_json(const PerturbationCertificate& c);
Json to_json(const GronwallReport& g);
Json to_json(const SolverDiagnostics& d);
Json to_json(const ConjugacyReport& r);
Json to_json(const RegularityReport& r);
Json to_json(const ForcingCertificate& c);
Json to_json(const SolutionMappingReport& r);
Json to_json(const ContinuousRegularityReport& r);
Json to_json(const Error& e);

/// Rows already formatted as text.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string csv() const;
};

}  // namespace polylin::io
