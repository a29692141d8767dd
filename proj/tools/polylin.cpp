#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "polylin/run.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageError = 3;
constexpr int kFixtureMismatch = 4;

struct Flags {
  std::string config;
  std::string system, builtin, perturbation, out, format;
  long window = 0, horizon = 0, lin_window = 0;
  double grid_step = 0, tol = 0, R_grid = 0, c = 0, eta = 0;
  int max_iter = 0, grid = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct Bound {
  CLI::Option *system, *builtin, *perturbation, *out, *format, *window, *horizon, *lin_window, *grid_step, *tol,
      *R_grid, *c, *eta, *max_iter, *grid, *seed, *threads;
};

Bound add_flags(CLI::App* app, Flags& f) {
  Bound b{};
  app->add_option("--config", f.config, "JSON run configuration; flags override it");
  b.system = app->add_option("--system", f.system, "system definition (JSON)");
  b.builtin = app->add_option("--builtin", f.builtin, "builtin system name");
  b.system->excludes(b.builtin);
  b.window = app->add_option("--window", f.window, "original-time window N (default 4096)");
  b.grid_step = app->add_option("--grid-step", f.grid_step, "spectrum grid step in exponent units (default 1e-3)");
  b.tol = app->add_option("--tol", f.tol, "conjugacy residual tolerance (default 1e-8)");
  b.horizon = app->add_option("--horizon", f.horizon, "last index of the conjugacy checks (default 64)");
  b.out = app->add_option("--out", f.out, "output directory");
  b.seed = app->add_option("--seed", f.seed, "seed for sampled checks (default 0)");
  b.format = app->add_option("--format", f.format, "json, csv or both (default both)")
                 ->check(CLI::IsMember({"json", "csv", "both"}));
  b.lin_window = app->add_option("--lin-window", f.lin_window, "linearization window (default 4096, continuous 128)");
  b.R_grid = app->add_option("--r-grid", f.R_grid, "solver grid radius (default 1)");
  b.max_iter = app->add_option("--max-iter", f.max_iter, "iteration cap of the inverse maps (default 200)");
  b.grid = app->add_option("--grid", f.grid, "solver grid points per axis (default 9, continuous 5)");
  b.perturbation = app->add_option("--perturbation", f.perturbation, "perturbation definition (JSON, linearize)");
  b.c = app->add_option("--c", f.c, "size of the default bump perturbation (default 1e-3)");
  b.eta = app->add_option("--eta", f.eta, "forcing size of the builtin continuous system (default 1e-3)");
  b.threads = app->add_option("--threads", f.threads, "worker threads, 0 = all cores");
  return b;
}

polylin::RunConfig assemble(polylin::Command command, const Flags& f, const Bound& b) {
  using namespace polylin;
  RunConfig c;
  c.command = command;
  if (!f.config.empty()) {
    c = RunConfig::from_json(io::parse_json(io::read_file(f.config), "config"), c);
    if (c.command != command) throw Error(ErrorKind::Config, "config command differs from the subcommand", f.config);
  }
  if (*b.system) c.system_path = f.system, c.builtin.clear();
  if (*b.builtin) c.builtin = f.builtin, c.system_path.clear();
  if (*b.perturbation) c.perturbation_path = f.perturbation;
  if (*b.out) c.out_dir = f.out;
  if (*b.format) c.format = parse_format(f.format);
  if (*b.window) c.window = f.window;
  if (*b.horizon) c.horizon = f.horizon;
  if (*b.lin_window) c.lin_window = f.lin_window;
  if (*b.grid_step) c.grid_step = f.grid_step;
  if (*b.tol) c.tol = f.tol;
  if (*b.R_grid) c.R_grid = f.R_grid;
  if (*b.c) c.c = f.c;
  if (*b.eta) c.eta = f.eta;
  if (*b.max_iter) c.max_iter = f.max_iter;
  if (*b.grid) c.grid_per_axis = f.grid;
  if (*b.seed) c.seed = f.seed;
  if (*b.threads) c.threads = f.threads;
  return c;
}

int report_error(const polylin::Error& e) {
  std::fprintf(stderr, "error [%s]: %s\n", std::string(polylin::to_string(e.kind())).c_str(), e.message().c_str());
  if (!e.witness().empty()) std::fprintf(stderr, "  witness: %s\n", e.witness().c_str());
  return e.kind() == polylin::ErrorKind::Config ? kConfigError : kStageError;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace polylin;
  CLI::App app{"Polynomial dichotomies, dichotomy spectra and linearization of nonautonomous systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  const std::vector<std::pair<Command, const char*>> commands{
      {Command::Spectrum, "polynomial dichotomy spectrum with gap and band conditions"},
      {Command::Dichotomy, "polynomial and dyadic dichotomy with adapted norms"},
      {Command::Linearize, "conjugacy of a perturbed system to its linear part"},
      {Command::Continuous, "continuous-time pipeline through the integer-time discretization"},
      {Command::Demo, "run the bundled examples and compare with their fixtures"}};
  std::vector<CLI::App*> subs;
  std::vector<Flags> flags(commands.size());
  std::vector<Bound> bound;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    subs.push_back(app.add_subcommand(std::string(to_string(commands[i].first)), commands[i].second));
    bound.push_back(add_flags(subs.back(), flags[i]));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : kConfigError;
  }

  std::size_t which = 0;
  while (which < subs.size() && !subs[which]->parsed()) ++which;

  RunConfig config;
  try {
    config = assemble(commands[which].first, flags[which], bound[which]);
    config.validate();
  } catch (const Error& e) {
    return report_error(e);
  }

  RunReport report;
  try {
    report = run(config);
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kStageError;
  }

  try {
    if (config.out_dir.empty()) {
      std::cout << report.to_json().dump(2) << '\n';
    } else {
      for (const auto& p : write_outputs(report, config.out_dir, config.format)) std::cout << p.string() << '\n';
    }
  } catch (const Error& e) {
    return report_error(e);
  }

  if (!report.fixture_failures.empty()) {
    for (const auto& f : report.fixture_failures) std::fprintf(stderr, "fixture mismatch: %s\n", f.c_str());
    return kFixtureMismatch;
  }
  return kOk;
}
