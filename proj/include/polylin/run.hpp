#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "polylin/io.hpp"

namespace polylin {

enum class Command { Spectrum, Dichotomy, Linearize, Continuous, Demo };
enum class OutputFormat { Json, Csv, Both };

std::string_view to_string(Command c);
Command parse_command(std::string_view s);
OutputFormat parse_format(std::string_view s);

inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunConfig {
  Command command = Command::Spectrum;
  /// Exactly one of the two selects the system (demo ignores both).
  std::string system_path;
  std::string builtin;
  /// Optional for linearize; the default is the bump with size `c`.
  std::string perturbation_path;

  long window = 4096;        // original-time window of spectrum and dichotomy scans
  double grid_step = 1e-3;   // exponent units
  double tol = 1e-8;         // conjugacy residual tolerance
  long horizon = 64;         // last index of the conjugacy, regularity and solution-mapping checks
  double R_grid = 1.0;
  int max_iter = 200;
  long lin_window = 0;       // 0: 4096 for discrete systems, 128 for continuous ones
  int grid_per_axis = 0;     // 0: 9 for discrete systems, 5 for continuous ones
  double c = 1e-3;           // bump size for the default perturbation
  double eta = 1e-3;         // forcing size for the builtin continuous system
  std::size_t gronwall_samples = 10000;

  std::string out_dir;
  OutputFormat format = OutputFormat::Both;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  /// Throws Config when a parameter is outside its documented range.
  void validate() const;
  /// Parameters that determine the numeric payload.
  io::Json echo() const;
  /// Unknown keys are rejected; absent keys keep their defaults.
  static RunConfig from_json(const io::Json& doc, RunConfig base);
  static RunConfig from_json(const io::Json& doc);

  /// Defaults depend on the pipeline, not on the command: demo runs both.
  long effective_lin_window(bool continuous) const;
  int effective_grid(bool continuous) const;
};

struct RunReport {
  io::Json config;
  io::Json stages = io::Json::object();
  io::Json timing = io::Json::object();
  std::string version{kToolVersion};
  std::string hash;
  /// resolvent, residuals, norms, pairs
  std::map<std::string, io::Table> series;
  /// Demo fixture mismatches.
  std::vector<std::string> fixture_failures;

  io::Json to_json() const;
};

/// FNV-1a, 64 bit, as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

/// Runs the pipeline of `config.command`. Stage failures are rethrown with the
/// stage name prefixed to the message.
RunReport run(const RunConfig& config);

/// CSV text of one series; NotAvailable if the report lacks it.
std::string plot_data(const RunReport& report, std::string_view what);
void emit_plot_data(const RunReport& report, std::string_view what, const std::filesystem::path& file);

/// Writes report.json and/or every available series as <name>.csv.
std::vector<std::filesystem::path> write_outputs(const RunReport& report, const std::filesystem::path& dir,
                                                 OutputFormat format);

}  // namespace polylin
