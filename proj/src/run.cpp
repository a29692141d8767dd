#include "polylin/run.hpp"

#include "polylin/builtins.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <type_traits>

namespace polylin {

using io::Json;

namespace {

constexpr double kCheckRadius = 0.1;
constexpr long kContinuousDiscreteChecks = 16;

// Stage runner: records wall time and prefixes the stage name on failure.
class Stages {
 public:
  Stages(RunReport& report, std::string prefix) : report_(report), prefix_(std::move(prefix)) {}

  std::string key(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

  template <class F>
  auto operator()(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto done = [&] {
      report_.timing[key(name)] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    try {
      if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        f();
        done();
      } else {
        auto out = f();
        done();
        return out;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), key(name) + ": " + e.message(), e.witness());
    }
  }

  Json& operator[](const std::string& name) { return report_.stages[key(name)]; }
  RunReport& report() { return report_; }

 private:
  RunReport& report_;
  std::string prefix_;
};

std::string cell(double x) { return io::format_double(x); }

VerifyOptions verify_options(const RunConfig& c) {
  VerifyOptions v;
  v.window = c.window;
  v.seed = c.seed;
  return v;
}

struct SpectrumOutcome {
  SpectrumResult spectrum;
  std::optional<SpectralGapReport> gap;
};

SpectrumOutcome spectrum_pipeline(const RunConfig& c, Stages& st, const Cocycle& a) {
  const VerifyOptions v = verify_options(c);
  st("growth", [&] {
    const auto g = require_growth_bounds(a, nullptr, Flavor::Polynomial, v);
    st["growth"] = Json{{"a", io::number(g.a)}, {"K", io::number(g.K)}, {"epsilon", io::number(g.epsilon)},
                        {"stabilized", g.stabilized}};
  });

  SpectrumOutcome out;
  out.spectrum = st("spectrum", [&] {
    SpectrumOptions so;
    so.grid_step = c.grid_step;
    so.window = c.window;
    so.threads = c.threads;
    so.verify.seed = c.seed;
    return polynomial_spectrum(a, nullptr, so);
  });
  st["spectrum"] = io::to_json(out.spectrum);

  auto samples = out.spectrum.samples;
  std::stable_sort(samples.begin(), samples.end(), [](const auto& x, const auto& y) { return x.point < y.point; });
  io::Table t{{"tau", "verdict", "lambda_fit", "K_fit"}, {}};
  for (const auto& s : samples) {
    t.rows.push_back({cell(s.point), std::string(to_string(s.verdict)), cell(s.lambda), cell(s.K)});
  }
  st.report().series["resolvent"] = std::move(t);

  st("gap_band", [&] {
    try {
      out.gap = check_gap_band(out.spectrum);
      st["gap_band"] = io::to_json(*out.gap);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoHyperbolicity && e.kind() != ErrorKind::Precondition) throw;
      st["gap_band"] = Json{{"available", false}, {"error", io::to_json(e)}};
    }
  });
  return out;
}

struct DichotomyOutcome {
  EquivalenceReport equivalence;
  Matrix stable_basis;
};

Json equivalence_json(const EquivalenceReport& r) {
  return Json{{"polynomial", io::to_json(r.polynomial)},
              {"exponential", io::to_json(r.exponential)},
              {"agree", r.agree},
              {"lambda_ratio", io::number(r.lambda_ratio)},
              {"lambda_consistent", r.lambda_consistent},
              {"note", r.note}};
}

DichotomyOutcome dichotomy_pipeline(const RunConfig& c, Stages& st, const Cocycle& a, bool with_norms) {
  DichotomyOutcome out;
  VerifyOptions v = verify_options(c);
  v.keep_pairs = with_norms;
  const auto euclid = NormFamily::euclidean();
  out.equivalence = st("dichotomy", [&] { return check_dyadic_equivalence(a, euclid, v); });
  st["dichotomy"] = equivalence_json(out.equivalence);
  const auto& poly = out.equivalence.polynomial;
  if (poly.projections) {
    const Matrix p0 = poly.projections->anchor_projection();
    Eigen::ColPivHouseholderQR<Matrix> qr(p0);
    const int rank = poly.projections->rank();
    out.stable_basis = Matrix(qr.householderQ()).leftCols(rank);
  } else {
    out.stable_basis = Matrix(a.dim(), 0);
  }
  if (!with_norms) return out;

  io::Table pairs{{"m", "n", "ratio_stable", "ratio_unstable", "ratio_growth_fwd", "ratio_growth_bwd"}, {}};
  for (const auto& p : poly.diagnostics.pairs) {
    pairs.rows.push_back({cell(p.m), cell(p.n), cell(p.stable), cell(p.unstable), cell(p.growth_fwd), cell(p.growth_bwd)});
  }
  st.report().series["pairs"] = std::move(pairs);
  if (!poly.accepted() || !poly.projections) return out;

  st("adapted_norms", [&] {
    const auto norms = adapted_polynomial_norms(a, *poly.projections, poly.constants(), c.window);
    VerifyOptions vf = verify_options(c);
    const auto est = verify_polynomial_dichotomy(a, *poly.projections, &norms, vf);
    const auto xs = random_unit_vectors(a.dim(), 64, c.seed);
    std::vector<long> indices;
    for (long n = 1; n <= std::min<long>(64, c.window); ++n) indices.push_back(n);
    for (double x = 64.0; x < static_cast<double>(c.window); x *= std::exp2(0.25)) {
      const long n = std::lround(x);
      if (n > indices.back()) indices.push_back(n);
    }
    if (indices.back() != c.window) indices.push_back(c.window);
    io::Table t{{"n", "C_n"}, {}};
    double worst = 0.0;
    for (long n : indices) {
      double cn = 0.0;
      for (const auto& x : xs) cn = std::max(cn, norms(n, x) / x.norm());
      worst = std::max(worst, cn);
      t.rows.push_back({std::to_string(n), cell(cn)});
    }
    st.report().series["norms"] = std::move(t);
    st["adapted_norms"] = Json{{"sandwich_C", io::number(norms.sandwich_C())},
                               {"sandwich_delta", io::number(norms.sandwich_delta())},
                               {"max_C_n", io::number(worst)},
                               {"reverified", io::to_json(est)}};
  });
  return out;
}

void require_split(const EquivalenceReport& r) {
  if (!r.polynomial.accepted() || !r.exponential.accepted()) {
    throw Error(ErrorKind::Precondition, "linearization needs accepted polynomial and block dichotomies",
                r.polynomial.diagnostics.reason + " " + r.exponential.diagnostics.reason);
  }
}

void residual_series(RunReport& report, const ConjugacyReport& r) {
  io::Table t{{"k", "max_residual", "orbit_residual"}, {}};
  for (std::size_t i = 0; i < r.step_by_index.size(); ++i) {
    t.rows.push_back({std::to_string(i + 1), cell(r.step_by_index[i]),
                      cell(i < r.orbit_by_index.size() ? r.orbit_by_index[i] : 0.0)});
  }
  report.series["residuals"] = std::move(t);
}

bool regularity_allowed(const std::optional<SpectralGapReport>& gap, RegularityMode mode, std::string* why) {
  if (!gap) {
    *why = "no spectral gap report";
    return false;
  }
  const bool ok = gap->sp1_ok && (mode == RegularityMode::C1 ? gap->sp2_ok : gap->sp3_ok);
  if (!ok) *why = mode == RegularityMode::C1 ? "gap and band conditions for C1 fail" : "gap and band conditions for Holder fail";
  return ok;
}

struct LinearizeOutcome {
  ConjugacyReport conjugacy;
};

LinearizeOutcome linearize_pipeline(const RunConfig& c, Stages& st, const Cocycle& a, const PerturbationFamily& g,
                                    std::optional<SpectralGapReport> gap, bool need_spectrum) {
  const long lw = c.effective_lin_window(false);
  const auto dich = dichotomy_pipeline(c, st, a, false);
  require_split(dich.equivalence);
  if (need_spectrum) gap = spectrum_pipeline(c, st, a).gap;

  const auto cert = st("certify", [&] {
    SamplePlan plan;
    plan.last_index = lw;
    plan.seed = c.seed;
    return check_perturbation_bounds(g, plan);
  });
  st["certify"] = io::to_json(cert);

  const auto& poly = dich.equivalence.polynomial;
  const auto& expo = dich.equivalence.exponential;
  LinearizationConstants k;
  k.K = poly.K;
  k.a = poly.a;
  k.C = 1.0;
  k.c = cert.c;
  k.L = cert.L;
  k.epsilon = poly.epsilon;
  k.K_block = expo.K;
  k.lambda_block = expo.lambda;

  PerturbationConstants pc{cert.c, cert.L, poly.epsilon};
  auto perturbed = std::make_shared<const PerturbedCocycle>(a, g.with_constants(pc), lw + 1);

  st("gronwall", [&] {
    GronwallSamplePlan plan;
    plan.samples = c.gronwall_samples;
    plan.window = lw;
    plan.seed = c.seed;
    const auto rep = gronwall_bound_check(*perturbed, {k.K, k.a, k.C, k.c, k.L}, nullptr, plan);
    st["gronwall"] = io::to_json(rep);
  });

  const auto blocks = st("blocks", [&] {
    BlockOptions bo;
    bo.radius = c.R_grid;
    bo.seed = c.seed;
    return build_block_perturbations(perturbed, lw, k, nullptr, bo);
  });
  st["blocks"] = Json{{"eta_formula", io::number(blocks.eta_formula)},
                      {"eta_sampled", io::number(blocks.eta_sampled)},
                      {"lipschitz", io::number(blocks.lipschitz)},
                      {"budget", io::number(blocks.budget)},
                      {"last_block", blocks.last_block()},
                      {"warnings", blocks.warnings}};

  const auto atlas = st("solve", [&] {
    const ProjectionFamily pb(blocks.blocks(), 0, poly.projections->anchor_projection());
    SolverOptions so;
    so.tol = c.tol;
    so.max_iter = c.max_iter;
    so.radius = c.R_grid;
    so.grid_per_axis = c.effective_grid(false);
    so.threads = c.threads;
    return solve_block_conjugacy(blocks, pb, so);
  });
  st["solve"] = io::to_json(atlas.diagnostics());

  LinearizeOutcome out;
  out.conjugacy = st("verify", [&] {
    ConjugacyCheckOptions co;
    co.radius = kCheckRadius;
    co.max_index = std::min(c.horizon, atlas.last_time() - 1);
    co.threads = c.threads;
    return verify_conjugacy(atlas, co);
  });
  st["verify"] = io::to_json(out.conjugacy);
  residual_series(st.report(), out.conjugacy);

  st("regularity", [&] {
    Json j = Json::object();
    for (auto mode : {RegularityMode::C1, RegularityMode::HolderDiff}) {
      const char* name = mode == RegularityMode::C1 ? "C1" : "holder_diff";
      std::string why;
      if (!regularity_allowed(gap, mode, &why)) {
        j[name] = Json{{"skipped", why}};
        continue;
      }
      RegularityOptions ro;
      ro.max_index = std::min(c.horizon, atlas.last_time() - 1);
      ro.seed = c.seed;
      ro.threads = c.threads;
      j[name] = io::to_json(verify_regularity(atlas, mode, *gap, k, ro));
    }
    st["regularity"] = std::move(j);
  });
  return out;
}

struct ContinuousOutcome {
  SolutionMappingReport mapping;
  ConjugacyReport conjugacy;
};

ContinuousOutcome continuous_pipeline(const RunConfig& c, Stages& st, const CoefficientField& field,
                                      const Forcing& forcing, double eta) {
  const long lw = c.effective_lin_window(true);
  const EvolutionFamily e(field);
  st("integrate", [&] {
    // Cocycle identity on a few real-time triples as a smoke check.
    double worst = 0.0;
    for (double t : {1.0, 2.5, 8.0, 33.25}) {
      for (double s : {1.0, 1.75, 16.0}) {
        worst = std::max(worst, relative_difference(e(t, s), e(t, 4.0) * e(4.0, s)));
      }
    }
    st["integrate"] = Json{{"cocycle_residual", io::number(worst)}};
  });
  const Cocycle a = st("discretize", [&] { return Cocycle(discretize(e, c.window + 1)); });
  st["discretize"] = Json{{"last_index", c.window + 1}};

  const auto spec = spectrum_pipeline(c, st, a);
  const auto dich = dichotomy_pipeline(c, st, a, false);
  require_split(dich.equivalence);
  const auto& poly = dich.equivalence.polynomial;
  const auto& expo = dich.equivalence.exponential;
  st("continuous_dichotomy", [&] {
    VerifyOptions v = verify_options(c);
    v.window = std::min<long>(c.window, 1024);
    st["continuous_dichotomy"] = io::to_json(verify_continuous_polynomial_dichotomy(e, dich.stable_basis, v));
  });

  const SemilinearFlow flow(e, forcing);
  const ContinuousConstants ck{poly.K, poly.a, poly.epsilon, eta};
  const auto lin = st("linearize", [&] {
    ContinuousPlan plan;
    plan.max_time = lw;
    plan.K_block = expo.K;
    plan.lambda_block = expo.lambda;
    plan.forcing.last_time = static_cast<double>(lw);
    plan.forcing.seed = c.seed;
    plan.perturbation.last_index = lw;
    plan.perturbation.points_per_radius = 2;
    plan.perturbation.seed = c.seed;
    plan.blocks.samples_per_block = 4;
    plan.blocks.radius = c.R_grid;
    plan.blocks.seed = c.seed;
    plan.solver.tol = c.tol;
    plan.solver.max_iter = c.max_iter;
    plan.solver.radius = c.R_grid;
    plan.solver.grid_per_axis = c.effective_grid(true);
    plan.solver.threads = c.threads;
    return linearize_continuous(flow, ck, dich.stable_basis, plan);
  });
  st["linearize"] = Json{{"forcing", io::to_json(lin.perturbation.forcing)},
                         {"M_hat", io::number(lin.perturbation.M_hat)},
                         {"c", io::number(lin.perturbation.c)},
                         {"perturbation", io::to_json(lin.perturbation.certificate)},
                         {"solver", io::to_json(lin.atlas->diagnostics())}};

  ContinuousOutcome out;
  const long last = std::min(c.horizon, lw);
  // Every psi evaluation in continuous time integrates the flow, so the
  // discrete checks sample fewer points and indices than the solution mapping.
  const long discrete_last = std::min({last, kContinuousDiscreteChecks, lin.atlas->last_time() - 1});
  st("verify", [&] {
    ConjugacyCheckOptions co;
    co.radius = kCheckRadius;
    co.max_index = discrete_last;
    co.per_axis = 3;
    co.threads = c.threads;
    out.conjugacy = verify_conjugacy(*lin.atlas, co);
    SolutionCheckOptions so;
    so.radius = kCheckRadius;
    so.samples = 3;
    so.times_per_octave = 2;
    so.last_time = static_cast<double>(last);
    so.seed = c.seed;
    so.threads = c.threads;
    out.mapping = verify_solution_mapping(*lin.maps, so);
  });
  st["verify"] = Json{{"conjugacy", io::to_json(out.conjugacy)}, {"solution_mapping", io::to_json(out.mapping)}};
  residual_series(st.report(), out.conjugacy);

  st("regularity", [&] {
    Json j = Json::object();
    for (auto mode : {RegularityMode::C1, RegularityMode::HolderDiff}) {
      const char* name = mode == RegularityMode::C1 ? "C1" : "holder_diff";
      std::string why;
      if (!regularity_allowed(spec.gap, mode, &why)) {
        j[name] = Json{{"skipped", why}};
        continue;
      }
      ContinuousRegularityOptions ro;
      ro.last_time = static_cast<double>(last);
      ro.times = 4;
      ro.points_per_time = 1;
      ro.seed = c.seed;
      ro.threads = c.threads;
      ro.discrete.max_index = discrete_last;
      ro.discrete.points_per_index = 1;
      ro.discrete.seed = c.seed;
      ro.discrete.threads = c.threads;
      j[name] = io::to_json(verify_continuous_regularity(*lin.maps, mode, *spec.gap, lin.constants, ck, ro));
    }
    st["regularity"] = std::move(j);
  });

  const auto& io_opts = e.options();
  st["integrator"] = Json{{"method", "rk4"},
                          {"step", io::number(io_opts.step)},
                          {"richardson", io_opts.richardson},
                          {"tol", io::number(io_opts.tol)},
                          {"error_estimate", io::number(e.error_estimate())}};
  return out;
}

void check_fixture(RunReport& r, Json& table, const std::string& name, bool pass, Json observed, Json expected) {
  table[name] = Json{{"pass", pass}, {"observed", std::move(observed)}, {"expected", std::move(expected)}};
  if (!pass) r.fixture_failures.push_back(name);
}

void demo(const RunConfig& c, RunReport& r) {
  Json fx = Json::object();
  {
    Stages st(r, "example_4_3");
    const Cocycle a(builtins::example_4_3());
    const auto spec = spectrum_pipeline(c, st, a);
    const auto expected = builtins::example_4_3_spectrum();
    bool pass = spec.spectrum.intervals.size() == expected.size();
    for (std::size_t i = 0; pass && i < expected.size(); ++i) {
      const auto& iv = spec.spectrum.intervals[i];
      pass = iv.hi - iv.lo <= 2.0 * c.grid_step && std::abs(0.5 * (iv.lo + iv.hi) - expected[i].first) <= c.grid_step;
    }
    Json exp = Json::array();
    for (const auto& [lo, hi] : expected) exp.push_back(Json::array({lo, hi}));
    check_fixture(r, fx, "spectrum", pass, st["spectrum"]["intervals"], exp);
    // The alpha1 fixture is a property of the known spectrum; the scanned
    // intervals have width of order grid_step and shift it by about that much.
    SpectrumResult known;
    known.flavor = Flavor::Polynomial;
    for (const auto& [lo, hi] : expected) known.intervals.push_back({lo, hi});
    const auto fixture_gap = check_gap_band(known);
    const bool gap_ok = spec.gap && spec.gap->sp1_ok && spec.gap->sp2_ok && spec.gap->sp3_ok && fixture_gap.sp1_ok &&
                        fixture_gap.sp2_ok && fixture_gap.sp3_ok && std::abs(fixture_gap.alpha1_bound - 2.0) <= 1e-6;
    check_fixture(r, fx, "gap_band", gap_ok, io::number(fixture_gap.alpha1_bound), 2.0);

    const auto lin = linearize_pipeline(c, st, a, PerturbationFamily::bump(2, c.c), spec.gap, false);
    const double res = std::max(lin.conjugacy.step_residual, lin.conjugacy.orbit_residual);
    check_fixture(r, fx, "conjugacy_residual", res < 1e-6, io::number(res), "< 1e-6");
  }
  {
    Stages st(r, "continuous_5_3");
    const auto out = continuous_pipeline(c, st, builtins::continuous_5_3(), builtins::continuous_5_3_forcing(c.eta), c.eta);
    const double worst = std::max({out.mapping.H_deviation, out.mapping.G_deviation, out.mapping.roundtrip});
    check_fixture(r, fx, "solution_mapping", worst < 1e-6, io::number(worst), "< 1e-6");
  }
  r.stages["fixtures"] = std::move(fx);
}

bool is_one_of(const std::string& s, const std::vector<std::string>& names) {
  return std::find(names.begin(), names.end(), s) != names.end();
}

}  // namespace

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Spectrum: return "spectrum";
    case Command::Dichotomy: return "dichotomy";
    case Command::Linearize: return "linearize";
    case Command::Continuous: return "continuous";
    case Command::Demo: return "demo";
  }
  return "unknown";
}

Command parse_command(std::string_view s) {
  for (auto c : {Command::Spectrum, Command::Dichotomy, Command::Linearize, Command::Continuous, Command::Demo}) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorKind::Config, "unknown command", std::string(s));
}

OutputFormat parse_format(std::string_view s) {
  if (s == "json") return OutputFormat::Json;
  if (s == "csv") return OutputFormat::Csv;
  if (s == "both") return OutputFormat::Both;
  throw Error(ErrorKind::Config, "format must be json, csv or both", std::string(s));
}

long RunConfig::effective_lin_window(bool continuous) const {
  if (lin_window > 0) return lin_window;
  return continuous ? 128 : 4096;
}

int RunConfig::effective_grid(bool continuous) const {
  if (grid_per_axis > 0) return grid_per_axis;
  return continuous ? 5 : 9;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what, const std::string& value) {
    if (!ok) throw Error(ErrorKind::Config, std::string(what) + " out of range", value);
  };
  require(window >= 64 && window <= (1L << 20), "window", std::to_string(window));
  require(grid_step > 0.0 && grid_step <= 0.01, "grid_step", io::format_double(grid_step));
  require(tol > 0.0 && tol <= 1e-2, "tol", io::format_double(tol));
  require(horizon >= 2 && horizon <= (1L << 20), "horizon", std::to_string(horizon));
  require(R_grid > 0.0 && R_grid <= 10.0, "R_grid", io::format_double(R_grid));
  require(max_iter >= 1 && max_iter <= 10000, "max_iter", std::to_string(max_iter));
  require(lin_window == 0 || (lin_window >= 4 && lin_window <= (1L << 16)), "lin_window", std::to_string(lin_window));
  require(grid_per_axis == 0 || (grid_per_axis >= 3 && grid_per_axis <= 65), "grid_per_axis", std::to_string(grid_per_axis));
  require(std::isfinite(c) && c >= 0.0, "c", io::format_double(c));
  require(std::isfinite(eta) && eta >= 0.0, "eta", io::format_double(eta));
  require(gronwall_samples >= 1, "gronwall_samples", std::to_string(gronwall_samples));
  if (!system_path.empty() && !builtin.empty()) {
    throw Error(ErrorKind::Config, "give either a system file or a builtin, not both", system_path + " / " + builtin);
  }
  if (!builtin.empty()) {
    const bool continuous = command == Command::Continuous;
    const auto names = continuous ? builtins::continuous_names() : builtins::discrete_names();
    if (command != Command::Demo && !is_one_of(builtin, names)) {
      throw Error(ErrorKind::Config, "unknown builtin for this command", builtin);
    }
  }
  if (!perturbation_path.empty() && command != Command::Linearize) {
    throw Error(ErrorKind::Config, "a perturbation file only applies to linearize", perturbation_path);
  }
}

Json RunConfig::echo() const {
  return Json{{"command", to_string(command)},
              {"system", system_path},
              {"builtin", builtin},
              {"perturbation", perturbation_path},
              {"window", window},
              {"grid_step", grid_step},
              {"tol", tol},
              {"horizon", horizon},
              {"R_grid", R_grid},
              {"max_iter", max_iter},
              {"lin_window", lin_window},
              {"grid_per_axis", grid_per_axis},
              {"c", c},
              {"eta", eta},
              {"gronwall_samples", gronwall_samples},
              {"seed", seed}};
}

RunConfig RunConfig::from_json(const Json& doc, RunConfig base) {
  io::require_fields(doc,
                     {"command", "system", "builtin", "perturbation", "window", "grid_step", "tol", "horizon", "R_grid",
                      "max_iter", "lin_window", "grid_per_axis", "c", "eta", "gronwall_samples", "out", "format", "seed",
                      "threads"},
                     "config");
  auto typed = [&](const char* key, auto& target) {
    if (!doc.contains(key)) return;
    const Json& v = doc[key];
    using T = std::decay_t<decltype(target)>;
    bool ok = false;
    if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else {
      ok = v.is_number_integer() && (std::is_signed_v<T> || v.get<long long>() >= 0);
    }
    if (!ok) throw Error(ErrorKind::Config, "wrong type for config field", std::string("config.") + key);
    target = v.get<T>();
  };
  RunConfig c = std::move(base);
  std::string command, format;
  typed("command", command);
  if (!command.empty()) c.command = parse_command(command);
  typed("system", c.system_path);
  typed("builtin", c.builtin);
  typed("perturbation", c.perturbation_path);
  typed("window", c.window);
  typed("grid_step", c.grid_step);
  typed("tol", c.tol);
  typed("horizon", c.horizon);
  typed("R_grid", c.R_grid);
  typed("max_iter", c.max_iter);
  typed("lin_window", c.lin_window);
  typed("grid_per_axis", c.grid_per_axis);
  typed("c", c.c);
  typed("eta", c.eta);
  typed("gronwall_samples", c.gronwall_samples);
  typed("out", c.out_dir);
  typed("format", format);
  if (!format.empty()) c.format = parse_format(format);
  typed("seed", c.seed);
  typed("threads", c.threads);
  return c;
}

RunConfig RunConfig::from_json(const Json& doc) { return from_json(doc, RunConfig{}); }

Json RunReport::to_json() const {
  Json series_names = Json::array();
  for (const auto& [name, table] : series) series_names.push_back(name);
  return Json{{"tool", "polylin"},
              {"version", version},
              {"hash", hash},
              {"config", config},
              {"stages", stages},
              {"series", series_names},
              {"fixture_failures", fixture_failures},
              {"timing", timing}};
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunReport run(const RunConfig& config) {
  config.validate();
  RunReport r;
  r.config = config.echo();
  std::string system_text, perturbation_text;
  if (!config.system_path.empty()) system_text = io::read_file(config.system_path);
  if (!config.perturbation_path.empty()) perturbation_text = io::read_file(config.perturbation_path);
  r.hash = fnv1a_hex(r.config.dump() + "\n" + system_text + "\n" + perturbation_text);

  Stages st(r, "");
  switch (config.command) {
    case Command::Spectrum:
    case Command::Dichotomy:
    case Command::Linearize: {
      const auto seq = st("load", [&] {
        if (!system_text.empty()) return io::parse_system(system_text, config.window + 1).sequence;
        return builtins::discrete(config.builtin.empty() ? "example_4_3" : config.builtin, config.window + 1);
      });
      const Cocycle a(seq);
      st["load"] = Json{{"name", seq.name()}, {"d", seq.dim()}, {"origin", seq.origin()}};
      if (config.command == Command::Spectrum) {
        spectrum_pipeline(config, st, a);
      } else if (config.command == Command::Dichotomy) {
        dichotomy_pipeline(config, st, a, true);
      } else {
        const auto g = perturbation_text.empty() ? PerturbationFamily::bump(seq.dim(), config.c)
                                                 : st("load_perturbation", [&] {
                                                     return io::parse_perturbation(perturbation_text, seq.dim());
                                                   });
        linearize_pipeline(config, st, a, g, std::nullopt, true);
      }
      break;
    }
    case Command::Continuous: {
      if (!system_text.empty()) {
        const auto doc = st("load", [&] { return io::parse_continuous_system(system_text); });
        st["load"] = Json{{"name", doc.name}, {"d", doc.dim}, {"eta", io::number(doc.eta)}};
        continuous_pipeline(config, st, doc.field, doc.forcing, doc.eta);
      } else {
        st["load"] = Json{{"name", "continuous_5_3"}, {"d", 2}, {"eta", io::number(config.eta)}};
        continuous_pipeline(config, st, builtins::continuous_5_3(), builtins::continuous_5_3_forcing(config.eta),
                            config.eta);
      }
      break;
    }
    case Command::Demo:
      demo(config, r);
      break;
  }
  return r;
}

std::string plot_data(const RunReport& report, std::string_view what) {
  auto it = report.series.find(std::string(what));
  if (it == report.series.end()) {
    throw Error(ErrorKind::NotAvailable, "report has no such series", std::string(what));
  }
  return it->second.csv();
}

void emit_plot_data(const RunReport& report, std::string_view what, const std::filesystem::path& file) {
  const std::string text = plot_data(report, what);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::Config, "cannot write file", file.string());
  out << text;
}

std::vector<std::filesystem::path> write_outputs(const RunReport& report, const std::filesystem::path& dir,
                                                 OutputFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Config, "cannot create output directory", dir.string());
  std::vector<std::filesystem::path> written;
  if (format != OutputFormat::Csv) {
    const auto file = dir / "report.json";
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(ErrorKind::Config, "cannot write file", file.string());
    out << report.to_json().dump(2) << '\n';
    written.push_back(file);
  }
  if (format != OutputFormat::Json) {
    for (const auto& [name, table] : report.series) {
      const auto file = dir / (name + ".csv");
      emit_plot_data(report, name, file);
      written.push_back(file);
    }
  }
  return written;
}

}  // namespace polylin
