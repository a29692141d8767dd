#include "polylin/io.hpp"

#include "polylin/builtins.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace polylin::io {

namespace {

std::string where(std::string_view what, std::string_view field) {
  return std::string(what) + "." + std::string(field);
}

const Json& field(const Json& doc, std::string_view key, std::string_view what) {
  auto it = doc.find(std::string(key));
  if (it == doc.end()) throw Error(ErrorKind::Config, "missing field", where(what, key));
  return *it;
}

std::string get_string(const Json& doc, std::string_view key, std::string_view what) {
  const Json& v = field(doc, key, what);
  if (!v.is_string()) throw Error(ErrorKind::Config, "expected a string", where(what, key));
  return v.get<std::string>();
}

double get_number(const Json& v, const std::string& context) {
  if (!v.is_number()) throw Error(ErrorKind::Config, "expected a number", context);
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw Error(ErrorKind::Config, "expected a finite number", context);
  return x;
}

int get_dim(const Json& doc, std::string_view what) {
  const Json& v = field(doc, "d", what);
  if (!v.is_number_integer() || v.get<long>() < 1 || v.get<long>() > 64) {
    throw Error(ErrorKind::Config, "dimension must be an integer in [1, 64]", where(what, "d"));
  }
  return v.get<int>();
}

Expression parse_expr(const Json& v, std::vector<std::string> vars, const std::string& context) {
  if (!v.is_string()) throw Error(ErrorKind::Config, "expected an expression string", context);
  try {
    return Expression::parse(v.get<std::string>(), std::move(vars));
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, context + ": " + e.message(), e.witness());
  }
}

std::vector<std::vector<Expression>> parse_matrix(const Json& v, int d, const std::vector<std::string>& vars,
                                                  const std::string& context) {
  if (!v.is_array() || static_cast<int>(v.size()) != d) {
    throw Error(ErrorKind::Config, "expected a d x d array of expressions", context);
  }
  std::vector<std::vector<Expression>> out;
  for (int i = 0; i < d; ++i) {
    const Json& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != d) {
      throw Error(ErrorKind::Config, "expected a row of d expressions", context + "[" + std::to_string(i) + "]");
    }
    std::vector<Expression> r;
    for (int j = 0; j < d; ++j) {
      r.push_back(parse_expr(row[static_cast<std::size_t>(j)], vars,
                             context + "[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Expression> parse_components(const Json& v, int d, std::string_view first_var, const std::string& context) {
  if (!v.is_array() || static_cast<int>(v.size()) != d) {
    throw Error(ErrorKind::Config, "expected d component expressions", context);
  }
  std::vector<std::string> vars{std::string(first_var)};
  for (int i = 1; i <= d; ++i) vars.push_back("x" + std::to_string(i));
  std::vector<Expression> out;
  for (int i = 0; i < d; ++i) {
    out.push_back(parse_expr(v[static_cast<std::size_t>(i)], vars, context + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<Matrix> parse_values(const Json& v, int d, const std::string& context) {
  if (!v.is_array() || v.empty()) throw Error(ErrorKind::Config, "expected a non-empty array of matrices", context);
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::string ck = context + "[" + std::to_string(k) + "]";
    const Json& m = v[k];
    if (!m.is_array() || static_cast<int>(m.size()) != d) throw Error(ErrorKind::Config, "expected d rows", ck);
    Matrix a(d, d);
    for (int i = 0; i < d; ++i) {
      const Json& row = m[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<int>(row.size()) != d) {
        throw Error(ErrorKind::Config, "expected d entries", ck + "[" + std::to_string(i) + "]");
      }
      for (int j = 0; j < d; ++j) {
        a(i, j) = get_number(row[static_cast<std::size_t>(j)], ck + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

Json pair(double m, double n) { return Json::array({number(m), number(n)}); }

Json worst(const WorstCase& w) {
  return Json{{"ratio", number(w.ratio)}, {"pair", pair(w.m, w.n)}};
}

Json intervals(const std::vector<Interval>& ivs) {
  Json out = Json::array();
  for (const auto& iv : ivs) out.push_back(Json::array({number(iv.lo), number(iv.hi)}));
  return out;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, "cannot read file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    // e.byte is 1-based and points one past the offending character.
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorKind::Config,
                "malformed JSON in " + std::string(what) + " at line " + std::to_string(line) + ", column " +
                    std::to_string(column),
                "line=" + std::to_string(line) + " column=" + std::to_string(column));
  }
}

void require_fields(const Json& doc, const std::vector<std::string>& allowed, std::string_view what) {
  if (!doc.is_object()) throw Error(ErrorKind::Config, "expected a JSON object", std::string(what));
  for (const auto& [key, value] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::Config, "unknown field", where(what, key));
    }
  }
}

SystemDocument parse_system(std::string_view text, long window) {
  const Json doc = parse_json(text, "system");
  require_fields(doc, {"name", "d", "origin", "kind", "expr", "values", "builtin"}, "system");
  const std::string kind = get_string(doc, "kind", "system");
  if (kind == "builtin") {
    const std::string name = get_string(doc, "builtin", "system");
    auto seq = builtins::discrete(name, window);
    if (doc.contains("d") && get_dim(doc, "system") != seq.dim()) {
      throw Error(ErrorKind::Config, "dimension does not match the builtin", name);
    }
    return {doc.contains("name") ? get_string(doc, "name", "system") : name, seq.dim(), seq.origin(), kind, seq};
  }
  const std::string name = get_string(doc, "name", "system");
  const int d = get_dim(doc, "system");
  long origin = 1;
  if (doc.contains("origin")) {
    const Json& o = doc["origin"];
    if (!o.is_number_integer() || (o.get<long>() != 0 && o.get<long>() != 1)) {
      throw Error(ErrorKind::Config, "origin must be 0 (block time) or 1 (natural time)", "system.origin");
    }
    origin = o.get<long>();
  }
  const TimeAxis axis = origin == 1 ? TimeAxis::Natural : TimeAxis::Block;
  if (kind == "closed_form") {
    auto seq = OperatorSequence::closed_form(name, axis, parse_matrix(field(doc, "expr", "system"), d, {"n"}, "system.expr"));
    return {name, d, origin, kind, seq};
  }
  if (kind == "table") {
    auto seq = OperatorSequence::table(name, axis, parse_values(field(doc, "values", "system"), d, "system.values"));
    return {name, d, origin, kind, seq};
  }
  throw Error(ErrorKind::Config, "kind must be closed_form, table or builtin", "system.kind=" + kind);
}

ContinuousDocument parse_continuous_system(std::string_view text) {
  const Json doc = parse_json(text, "continuous system");
  require_fields(doc, {"name", "d", "A_expr", "f_expr", "eta"}, "continuous");
  const std::string name = get_string(doc, "name", "continuous");
  const int d = get_dim(doc, "continuous");
  auto field_ = CoefficientField::closed_form(name, parse_matrix(field(doc, "A_expr", "continuous"), d, {"t"}, "continuous.A_expr"));
  double eta = 0.0;
  if (doc.contains("eta")) {
    eta = get_number(doc["eta"], "continuous.eta");
    if (eta < 0.0) throw Error(ErrorKind::Config, "eta must be nonnegative", "continuous.eta");
  }
  Forcing f = doc.contains("f_expr")
                  ? Forcing::closed_form(name, parse_components(doc["f_expr"], d, "t", "continuous.f_expr"))
                  : Forcing::zero(d);
  return {name, d, std::move(field_), std::move(f), eta};
}

PerturbationFamily parse_perturbation(std::string_view text, int dim) {
  const Json doc = parse_json(text, "perturbation");
  require_fields(doc, {"kind", "expr", "c", "builtin"}, "perturbation");
  const std::string kind = get_string(doc, "kind", "perturbation");
  double c = std::numeric_limits<double>::quiet_NaN();
  if (doc.contains("c")) {
    c = get_number(doc["c"], "perturbation.c");
    if (c < 0.0) throw Error(ErrorKind::Config, "c must be nonnegative", "perturbation.c");
  }
  if (kind == "builtin") {
    const std::string name = doc.contains("builtin") ? get_string(doc, "builtin", "perturbation") : "bump";
    if (name == "zero") return PerturbationFamily::zero(dim);
    if (name == "bump") {
      if (!std::isfinite(c)) throw Error(ErrorKind::Config, "the bump perturbation needs c", "perturbation.c");
      return PerturbationFamily::bump(dim, c);
    }
    throw Error(ErrorKind::Config, "unknown builtin perturbation", name);
  }
  if (kind == "closed_form") {
    PerturbationConstants pc;
    pc.c = c;
    return PerturbationFamily::closed_form("closed_form", parse_components(field(doc, "expr", "perturbation"), dim, "n", "perturbation.expr"),
                                           pc);
  }
  throw Error(ErrorKind::Config, "kind must be closed_form or builtin", "perturbation.kind=" + kind);
}

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json to_json(const DichotomyEstimate& e) {
  const auto& dg = e.diagnostics;
  Json j{{"flavor", to_string(e.flavor)},
         {"verdict", to_string(e.verdict)},
         {"K", number(e.K)},
         {"lambda", number(e.lambda)},
         {"a", number(e.a)},
         {"epsilon", number(e.epsilon)},
         {"worst_pair", pair(dg.worst.m, dg.worst.n)},
         {"worst_ratio", number(dg.worst.ratio)},
         {"window", dg.window},
         {"norm_mode", to_string(e.norm_mode)}};
  j["conditions"] = Json{{"stable", worst(dg.stable)},
                         {"unstable", worst(dg.unstable)},
                         {"growth_fwd", worst(dg.growth_fwd)},
                         {"growth_bwd", worst(dg.growth_bwd)}};
  j["stabilized"] = dg.stabilized;
  j["pair_count"] = dg.pair_count;
  if (e.projections) j["rank"] = e.projections->rank();
  if (!dg.reason.empty()) j["reason"] = dg.reason;
  return j;
}

Json to_json(const SpectrumResult& s) {
  Json j{{"flavor", to_string(s.flavor)},
         {"intervals", intervals(s.intervals)},
         {"resolution", number(s.resolution)},
         {"search_bounds", Json::array({number(s.search_bounds.lo), number(s.search_bounds.hi)})},
         {"growth_exponent", number(s.growth_exponent)},
         {"samples", s.samples.size()},
         {"warnings", s.warnings}};
  return j;
}

Json to_json(const SpectralGapReport& g) {
  return Json{{"k", g.k},
              {"r", g.r},
              {"sp1_ok", g.sp1_ok},
              {"sp2_ok", g.sp2_ok},
              {"sp3_ok", g.sp3_ok},
              {"alpha1_bound", number(g.alpha1_bound)},
              {"alpha1_effective", number(g.alpha1_effective)},
              {"rate_intervals", intervals(g.rate_intervals)},
              {"note", g.note}};
}

Json to_json(const PerturbationCertificate& c) {
  return Json{{"c", number(c.c)},
              {"L", number(c.L)},
              {"c_observed", number(c.c_observed)},
              {"L_observed", number(c.L_observed)},
              {"epsilon", number(c.epsilon)},
              {"zero_residual", number(c.zero_residual)},
              {"samples", c.samples}};
}

Json to_json(const GronwallReport& g) {
  return Json{{"max_ratio_derivative", number(g.max_ratio_derivative)},
              {"max_ratio_lipschitz", number(g.max_ratio_lipschitz)},
              {"violations", g.violations},
              {"samples", g.samples},
              {"worst_derivative", g.worst_derivative},
              {"worst_lipschitz", g.worst_lipschitz}};
}

Json to_json(const SolverDiagnostics& d) {
  return Json{{"iterations", d.iterations},
              {"contraction", number(d.contraction)},
              {"residual", number(d.residual)},
              {"inverse_residual", number(d.inverse_residual)},
              {"grid_points", d.grid_points}};
}

Json to_json(const ConjugacyReport& r) {
  return Json{{"step_residual", number(r.step_residual)},
              {"orbit_residual", number(r.orbit_residual)},
              {"inverse_residual", number(r.inverse_residual)},
              {"gluing_residual", number(r.gluing_residual)},
              {"max_index", r.step_by_index.size()},
              {"points", r.points}};
}

Json to_json(const RegularityReport& r) {
  Json j{{"mode", r.mode == RegularityMode::C1 ? "C1" : "holder_diff"}, {"ok", r.ok()}, {"ball_radius", number(r.ball_radius)}};
  if (r.mode == RegularityMode::C1) {
    j["M_block"] = number(r.M_block);
    j["M_tilde"] = number(r.M_tilde);
    j["M_observed"] = number(r.M_observed);
    j["derivative_bounded"] = r.derivative_bounded;
  } else {
    j["diff_slope"] = number(r.diff_slope);
    j["diff_ok"] = r.diff_ok;
    j["alpha1"] = number(r.alpha1);
    j["L_block"] = number(r.L_block);
    j["L_prime"] = number(r.L_prime);
    j["holder_observed"] = number(r.holder_observed);
    j["holder_ok"] = r.holder_ok;
  }
  return j;
}

Json to_json(const ForcingCertificate& c) {
  return Json{{"eta", number(c.eta)},
              {"L", number(c.L)},
              {"eta_observed", number(c.eta_observed)},
              {"L_observed", number(c.L_observed)},
              {"epsilon", number(c.epsilon)},
              {"zero_residual", number(c.zero_residual)},
              {"samples", c.samples}};
}

Json to_json(const SolutionMappingReport& r) {
  return Json{{"H_deviation", number(r.H_deviation)},
              {"G_deviation", number(r.G_deviation)},
              {"roundtrip", number(r.roundtrip)},
              {"samples", r.samples},
              {"times", r.times}};
}

Json to_json(const ContinuousRegularityReport& r) {
  Json j{{"mode", r.mode == RegularityMode::C1 ? "C1" : "holder_diff"},
         {"ok", r.ok()},
         {"discrete", to_json(r.discrete)},
         {"M_hat", number(r.M_hat)},
         {"zeta", number(r.zeta)}};
  if (r.mode == RegularityMode::C1) {
    j["R"] = number(r.R);
    j["derivative_observed"] = number(r.derivative_observed);
    j["derivative_bounded"] = r.derivative_bounded;
  } else {
    j["diff_slope"] = number(r.diff_slope);
    j["diff_ok"] = r.diff_ok;
    j["R_tilde"] = number(r.R_tilde);
    j["holder_observed"] = number(r.holder_observed);
    j["holder_ok"] = r.holder_ok;
  }
  return j;
}

Json to_json(const Error& e) {
  return Json{{"kind", to_string(e.kind())}, {"message", e.message()}, {"witness", e.witness()}};
}

std::string Table::csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += '\n';
  }
  return out;
}

}  // namespace polylin::io
