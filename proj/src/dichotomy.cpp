#include "polylin/dichotomy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>

namespace polylin {

std::string_view to_string(Flavor f) { return f == Flavor::Polynomial ? "polynomial" : "exponential"; }
std::string_view to_string(Verdict v) { return v == Verdict::Accepted ? "accepted" : "rejected"; }
std::string_view to_string(NormMode m) { return m == NormMode::Fixed ? "fixed-norm" : "norm-family"; }

namespace {

constexpr double kTiny = 1e-300;

// Least-squares slope of y against x.
struct SlopeFit {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  void add(double x, double y) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  bool valid() const {
    if (count < 2) return false;
    const double den = count * sxx - sx * sx;
    return den > 1e-14 * std::max(1.0, count * sxx);
  }
  double slope() const { return (count * sxy - sx * sy) / (count * sxx - sx * sx); }
};

double log_or_neg_inf(double v) {
  return v > kTiny ? std::log(v) : -std::numeric_limits<double>::infinity();
}

std::vector<Vector> probe_vectors(int d, int random_count, std::uint64_t seed) {
  std::vector<Vector> out;
  for (int i = 0; i < d; ++i) out.push_back(Vector::Unit(d, i));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      out.push_back((Vector::Unit(d, i) + Vector::Unit(d, j)) / std::sqrt(2.0));
      out.push_back((Vector::Unit(d, i) - Vector::Unit(d, j)) / std::sqrt(2.0));
    }
  auto rnd = random_unit_vectors(d, static_cast<std::size_t>(std::max(0, random_count)), seed);
  out.insert(out.end(), rnd.begin(), rnd.end());
  return out;
}

long last_usable(const Cocycle& a, long window, Flavor flavor) {
  long last = flavor == Flavor::Polynomial ? window : a.origin() + window;
  if (auto li = a.last_index()) last = std::min(last, *li + 1);
  return last;
}

// A(m,n)P(n) for each target m >= n. Re-projecting after every step keeps
// round-off in P from being carried along the expanding directions.
std::map<long, Matrix> stable_blocks(const Cocycle& a, const ProjectionFamily& p, long n,
                                     const std::vector<long>& targets) {
  std::map<long, Matrix> out;
  Matrix w = p(n);
  long j = n;
  for (long m : targets) {
    for (; j < m; ++j) w = p(j + 1) * (a.step(j) * w);
    out.emplace(m, w);
  }
  return out;
}

// A(n,m)Q(m) for each target n <= m, in decreasing order of n.
std::map<long, Matrix> unstable_blocks(const Cocycle& a, const ProjectionFamily& p, long m,
                                       const std::vector<long>& targets) {
  std::map<long, Matrix> out;
  Matrix w = p.complement(m);
  long j = m;
  for (long n : targets) {
    for (; j > n; --j) w = p.complement(j - 1) * (a.step_inverse(j - 1) * w);
    out.emplace(n, w);
  }
  return out;
}

}  // namespace

std::vector<std::pair<long, long>> scan_pairs(Flavor flavor, long origin, long last, const VerifyOptions& opts) {
  std::set<std::pair<long, long>> pairs;  // (m, n)
  if (last < origin) return {};
  if (last - origin + 1 <= opts.exhaustive_below) {
    for (long n = origin; n <= last; ++n)
      for (long m = n; m <= last; ++m) pairs.emplace(m, n);
    return {pairs.begin(), pairs.end()};
  }
  const double q = static_cast<double>(std::max(1, opts.ratio_divisions));
  if (flavor == Flavor::Polynomial) {
    std::set<long> ns;
    for (int j = 0;; ++j) {
      const long n = std::lround(static_cast<double>(origin) * std::exp2(j / q));
      if (n > last) break;
      ns.insert(n);
    }
    for (long n : ns) {
      for (int k = 0;; ++k) {
        const long m = std::lround(static_cast<double>(n) * std::exp2(k / q));
        if (m > last) break;
        pairs.emplace(m, n);
      }
      pairs.emplace(last, n);
    }
  } else {
    std::set<long> gaps, ns;
    for (long g = 0; g <= 8; ++g) gaps.insert(g);
    for (int k = 0;; ++k) {
      const long g = std::lround(std::exp2(k / q));
      if (g > last - origin) break;
      gaps.insert(g);
    }
    for (long n = origin; n <= std::min(last, origin + 16); ++n) ns.insert(n);
    for (long g : gaps) ns.insert(origin + g);
    for (long n : ns)
      for (long g : gaps)
        if (n + g <= last) pairs.emplace(n + g, n);
  }
  if (opts.adjacent_pairs)
    for (long n = origin; n < last; ++n) pairs.emplace(n + 1, n);
  return {pairs.begin(), pairs.end()};
}

void require_equivariant(const Cocycle& a, const ProjectionFamily& p, long last) {
  std::set<long> idx;
  const long origin = a.origin();
  for (long n = origin; n < std::min(last, origin + 8); ++n) idx.insert(n);
  for (long step = 1; origin + step < last; step *= 2) idx.insert(origin + step);
  if (last - 1 >= origin) idx.insert(last - 1);
  for (long n : idx) {
    const double eq = p.equivariance_residual(n);
    const double idem = p.idempotency_residual(n) / std::max(1.0, op_norm(p(n)));
    if (!(eq <= 1e-8) || !(idem <= 1e-8)) {
      throw Error(ErrorKind::Projection, "projection family is not an equivariant projection",
                  "n=" + std::to_string(n) + " equivariance=" + std::to_string(eq) +
                      " idempotency=" + std::to_string(idem));
    }
  }
}

PairTable collect_pairs(const Cocycle& a_in, const ProjectionFamily& p, const NormFamily* norms,
                        Flavor flavor, const VerifyOptions& opts) {
  const Cocycle a = a_in.unshifted();
  const long origin = a.origin();
  const long last = last_usable(a, opts.window, flavor);
  const int d = a.dim();

  PairTable table;
  table.flavor = flavor;
  table.norm_mode = norms ? NormMode::Family : NormMode::Fixed;
  table.has_stable = p.rank() > 0;
  table.has_unstable = p.rank() < d;
  table.window = last - (flavor == Flavor::Polynomial ? 0 : origin);
  table.half_window_end = origin + (last - origin) / 2.0;

  const auto pairs = scan_pairs(flavor, origin, last, opts);
  table.rows.resize(pairs.size());

  std::map<long, std::vector<long>> stable_targets, unstable_targets;
  for (const auto& [m, n] : pairs) {
    stable_targets[n].push_back(m);
    unstable_targets[m].push_back(n);
  }
  std::map<std::pair<long, long>, Matrix> stable_of, unstable_of;
  if (table.has_stable) {
    for (auto& [n, ms] : stable_targets) {
      std::sort(ms.begin(), ms.end());
      for (auto& [m, w] : stable_blocks(a, p, n, ms)) stable_of.emplace(std::make_pair(m, n), std::move(w));
    }
  }
  if (table.has_unstable) {
    for (auto& [m, ns] : unstable_targets) {
      std::sort(ns.begin(), ns.end(), std::greater<>());
      for (auto& [n, w] : unstable_blocks(a, p, m, ns)) unstable_of.emplace(std::make_pair(m, n), std::move(w));
    }
  }

  const bool exact = norms == nullptr || norms->is_euclidean();
  std::vector<Vector> probes;
  struct Target {
    std::size_t row;
    int quantity;
    std::size_t probe;
    long denominator_index;
    double value = 0.0;
  };
  std::map<long, std::vector<Vector>> numer_vectors;
  std::map<long, std::vector<Target>> numer_targets;
  std::set<long> denom_indices;
  if (!exact) probes = probe_vectors(d, opts.sample_vectors, opts.seed);

  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const auto [m, n] = pairs[r];
    PairSample& row = table.rows[r];
    row.m = static_cast<double>(m);
    row.n = static_cast<double>(n);
    if (flavor == Flavor::Polynomial) {
      row.theta = std::log(static_cast<double>(m)) - std::log(static_cast<double>(n));
      row.log_nu_n = std::log(static_cast<double>(n));
      row.log_nu_m = std::log(static_cast<double>(m));
    } else {
      row.theta = static_cast<double>(m - n);
      row.log_nu_n = static_cast<double>(std::labs(n));
      row.log_nu_m = static_cast<double>(std::labs(m));
    }
    const Matrix amn = a(m, n);
    const Matrix anm = m == n ? amn : a(n, m);
    const Matrix amn_p = table.has_stable ? stable_of.at({m, n}) : Matrix();
    const Matrix anm_q = table.has_unstable ? unstable_of.at({m, n}) : Matrix();
    if (exact) {
      row.stable = table.has_stable ? op_norm(amn_p) : 0.0;
      row.unstable = table.has_unstable ? op_norm(anm_q) : 0.0;
      row.growth_fwd = op_norm(amn);
      row.growth_bwd = op_norm(anm);
      continue;
    }
    denom_indices.insert(m);
    denom_indices.insert(n);
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const Vector& x = probes[i];
      if (table.has_stable) {
        numer_vectors[m].push_back(amn_p * x);
        numer_targets[m].push_back({r, 0, i, n});
      }
      if (table.has_unstable) {
        numer_vectors[n].push_back(anm_q * x);
        numer_targets[n].push_back({r, 1, i, m});
      }
      numer_vectors[m].push_back(amn * x);
      numer_targets[m].push_back({r, 2, i, n});
      numer_vectors[n].push_back(anm * x);
      numer_targets[n].push_back({r, 3, i, m});
    }
  }

  if (!exact) {
    // One pass per index keeps each prepared norm slice hot for both the
    // denominators and the numerators that live there.
    std::map<long, std::vector<double>> denominators;
    std::set<long> all = denom_indices;
    for (const auto& kv : numer_vectors) all.insert(kv.first);
    for (long idx : all) {
      if (denom_indices.count(idx)) denominators[idx] = norms->evaluate(idx, probes);
      auto it = numer_vectors.find(idx);
      if (it == numer_vectors.end()) continue;
      const auto vals = norms->evaluate(idx, it->second);
      auto& targets = numer_targets[idx];
      for (std::size_t k = 0; k < targets.size(); ++k) targets[k].value = vals[k];
      it->second.clear();
      it->second.shrink_to_fit();
    }
    for (auto& [idx, targets] : numer_targets) {
      for (const auto& t : targets) {
        const double den = denominators.at(t.denominator_index)[t.probe];
        const double ratio = den > kTiny ? t.value / den : 0.0;
        PairSample& row = table.rows[t.row];
        double* slot = t.quantity == 0   ? &row.stable
                       : t.quantity == 1 ? &row.unstable
                       : t.quantity == 2 ? &row.growth_fwd
                                         : &row.growth_bwd;
        *slot = std::max(*slot, ratio);
      }
    }
  }
  return table;
}

namespace {

struct Exponents {
  double lambda_stable = std::numeric_limits<double>::infinity();
  double lambda_unstable = std::numeric_limits<double>::infinity();
  double growth = 0.0;
  bool ok = true;
};

Exponents fit_exponents(const PairTable& t, double sigma) {
  SlopeFit s, u, gf, gb;
  for (const auto& r : t.rows) {
    if (r.theta <= 0.0) continue;
    if (t.has_stable && r.stable > kTiny) s.add(r.theta, std::log(r.stable));
    if (t.has_unstable && r.unstable > kTiny) u.add(r.theta, std::log(r.unstable));
    if (r.growth_fwd > kTiny) gf.add(r.theta, std::log(r.growth_fwd));
    if (r.growth_bwd > kTiny) gb.add(r.theta, std::log(r.growth_bwd));
  }
  Exponents e;
  if (t.has_stable) {
    if (s.valid()) e.lambda_stable = sigma - s.slope();
    else e.ok = false;
  }
  if (t.has_unstable) {
    if (u.valid()) e.lambda_unstable = -u.slope() - sigma;
    else e.ok = false;
  }
  double g = -std::numeric_limits<double>::infinity();
  if (gf.valid()) g = std::max(g, gf.slope() - sigma);
  if (gb.valid()) g = std::max(g, gb.slope() + sigma);
  if (!std::isfinite(g)) e.ok = false;
  e.growth = g;
  return e;
}

struct Envelope {
  double lambda, a, eps, sigma;
};

// log of observed / envelope for the four conditions.
std::array<double, 4> log_ratios(const PairSample& r, const PairTable& t, const Envelope& e) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  std::array<double, 4> out{ninf, ninf, ninf, ninf};
  if (t.has_stable)
    out[0] = log_or_neg_inf(r.stable) - e.sigma * r.theta + e.lambda * r.theta - e.eps * r.log_nu_n;
  if (t.has_unstable)
    out[1] = log_or_neg_inf(r.unstable) + e.sigma * r.theta + e.lambda * r.theta - e.eps * r.log_nu_m;
  out[2] = log_or_neg_inf(r.growth_fwd) - e.sigma * r.theta - e.a * r.theta - e.eps * r.log_nu_n;
  out[3] = log_or_neg_inf(r.growth_bwd) + e.sigma * r.theta - e.a * r.theta - e.eps * r.log_nu_m;
  return out;
}

struct KScan {
  double log_full = -std::numeric_limits<double>::infinity();
  double log_half = -std::numeric_limits<double>::infinity();
};

KScan scan_K(const PairTable& t, const Envelope& e, bool growth_only) {
  KScan k;
  for (const auto& r : t.rows) {
    auto lr = log_ratios(r, t, e);
    double m = growth_only ? std::max(lr[2], lr[3]) : *std::max_element(lr.begin(), lr.end());
    k.log_full = std::max(k.log_full, m);
    if (r.m <= t.half_window_end) k.log_half = std::max(k.log_half, m);
  }
  return k;
}

bool stabilized(const KScan& k, double tol) {
  if (!std::isfinite(k.log_full)) return false;
  return k.log_full <= k.log_half + std::log1p(tol);
}

std::vector<double> epsilon_grid(const PairTable& t, const VerifyOptions& opts) {
  if (t.norm_mode == NormMode::Family) return {0.0};
  std::vector<double> grid;
  const int steps = static_cast<int>(std::lround(opts.eps_max / opts.eps_step));
  for (int i = 0; i <= steps; ++i) grid.push_back(i * opts.eps_step);
  return grid;
}

}  // namespace

GrowthFit require_growth_bounds(const Cocycle& a, const NormFamily* norms, Flavor flavor, const VerifyOptions& opts) {
  ProjectionFamily identity(a, a.origin(), Matrix::Identity(a.dim(), a.dim()));
  GrowthFit g;
  try {
    g = fit_growth(collect_pairs(a, identity, norms, flavor, opts), opts);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Conditioning) throw;
    throw Error(ErrorKind::Precondition, "growth bounds not verified on the window: " + e.message(), e.witness());
  }
  if (!g.stabilized || !(g.a < opts.a_cap)) {
    throw Error(ErrorKind::Precondition, "growth bounds not verified on the window",
                "a=" + std::to_string(g.a) + " K=" + std::to_string(g.K) + " eps=" + std::to_string(g.epsilon));
  }
  return g;
}

GrowthFit fit_growth(const PairTable& table, const VerifyOptions& opts) {
  GrowthFit g;
  const Exponents e = fit_exponents(table, 0.0);
  g.a = std::min(std::max(e.growth, 0.0), opts.a_cap);
  for (double eps : epsilon_grid(table, opts)) {
    const KScan k = scan_K(table, {0.0, g.a, eps, 0.0}, true);
    g.epsilon = eps;
    g.K = std::max(1.0, std::exp(k.log_full));
    if (stabilized(k, opts.stabilization_tol)) {
      g.stabilized = true;
      break;
    }
  }
  return g;
}

DichotomyEstimate fit_dichotomy(const PairTable& table, double sigma, const VerifyOptions& opts) {
  DichotomyEstimate est;
  est.flavor = table.flavor;
  est.norm_mode = table.norm_mode;
  auto& diag = est.diagnostics;
  diag.window = table.window;
  diag.pair_count = table.rows.size();

  const Exponents ex = fit_exponents(table, sigma);
  const double lambda_raw = std::min(ex.lambda_stable, ex.lambda_unstable);
  diag.lambda_stable = std::isfinite(ex.lambda_stable) ? ex.lambda_stable : 0.0;
  diag.lambda_unstable = std::isfinite(ex.lambda_unstable) ? ex.lambda_unstable : 0.0;
  diag.growth_exponent = ex.growth;

  est.lambda = std::min(lambda_raw, opts.a_cap);
  est.a = std::max(std::min(ex.growth, opts.a_cap), est.lambda);

  const bool decays = ex.ok && est.lambda >= opts.lambda_min;
  const auto grid = epsilon_grid(table, opts);
  KScan chosen;
  est.epsilon = grid.front();
  if (decays) {
    for (double eps : grid) {
      const KScan k = scan_K(table, {est.lambda, est.a, eps, sigma}, false);
      chosen = k;
      est.epsilon = eps;
      if (stabilized(k, opts.stabilization_tol)) {
        diag.stabilized = true;
        break;
      }
    }
  } else {
    chosen = scan_K(table, {std::max(est.lambda, 0.0), est.a, est.epsilon, sigma}, false);
  }

  est.K = std::max(1.0, std::exp(chosen.log_full));
  diag.K_half_window = std::exp(chosen.log_half);
  if (!ex.ok) diag.reason = "insufficient pairs to fit exponents";
  else if (!decays) diag.reason = "fitted decay exponent below lambda_min";
  else if (!diag.stabilized) diag.reason = "constants do not stabilize over the window";
  est.verdict = decays && diag.stabilized ? Verdict::Accepted : Verdict::Rejected;

  const Envelope env{std::max(est.lambda, 0.0), est.a, est.epsilon, sigma};
  WorstCase* slots[4] = {&diag.stable, &diag.unstable, &diag.growth_fwd, &diag.growth_bwd};
  for (const auto& r : table.rows) {
    const auto lr = log_ratios(r, table, env);
    for (int q = 0; q < 4; ++q) {
      const double ratio = std::exp(lr[q]);
      if (ratio > slots[q]->ratio) *slots[q] = {ratio, r.m, r.n};
    }
    if (opts.keep_pairs) {
      diag.pairs.push_back({r.m, r.n, std::exp(lr[0]), std::exp(lr[1]), std::exp(lr[2]), std::exp(lr[3])});
    }
  }
  diag.worst = diag.stable;
  for (int q = 1; q < 4; ++q)
    if (slots[q]->ratio > diag.worst.ratio) diag.worst = *slots[q];
  return est;
}

namespace {

DichotomyEstimate verify(const Cocycle& a, const ProjectionFamily& p, const NormFamily* norms,
                         const VerifyOptions& opts, Flavor flavor) {
  if (flavor == Flavor::Polynomial && a.origin() != 1) {
    throw Error(ErrorKind::Precondition, "polynomial dichotomy needs natural time", a.name());
  }
  if (flavor == Flavor::Exponential && a.poly_tau() != 0.0) {
    throw Error(ErrorKind::Precondition, "exponential verification of a polynomially shifted cocycle", a.name());
  }
  if (flavor == Flavor::Polynomial && a.log_rate() != 0.0) {
    throw Error(ErrorKind::Precondition, "polynomial verification of an exponentially shifted cocycle", a.name());
  }
  const long last = last_usable(a, opts.window, flavor);
  require_equivariant(a, p, last);
  const PairTable table = collect_pairs(a, p, norms, flavor, opts);
  const double sigma = flavor == Flavor::Polynomial ? a.poly_tau() : a.log_rate();
  DichotomyEstimate est = fit_dichotomy(table, sigma, opts);
  est.projections = p;
  return est;
}

}  // namespace

DichotomyEstimate verify_polynomial_dichotomy(const Cocycle& a, const ProjectionFamily& p,
                                              const NormFamily* norms, const VerifyOptions& opts) {
  return verify(a, p, norms, opts, Flavor::Polynomial);
}

DichotomyEstimate verify_exponential_dichotomy(const Cocycle& b, const ProjectionFamily& p,
                                               const NormFamily* norms, const VerifyOptions& opts) {
  return verify(b, p, norms, opts, Flavor::Exponential);
}

DirectionProfile direction_profile(const Cocycle& a_in, const NormFamily& norms, long n, long horizon,
                                   TimeScale scale) {
  const Cocycle a = a_in.unshifted();
  DirectionProfile prof;
  prof.anchor = n;
  prof.horizon = horizon;
  prof.scale = scale;
  const long end = n + horizon;
  const int d = a.dim();

  // Right singular vectors, largest singular value first. The trailing
  // columns span the slow subspace as the complement of the well-resolved
  // leading ones.
  Eigen::JacobiSVD<Matrix> svd(a(end, n), Eigen::ComputeFullV);
  prof.directions = svd.matrixV();

  // Growth rates of the nested flag from the discrete QR recursion
  // A_m Q_m = Q_{m+1} R_m. Forward-iterating individual slow vectors is
  // unstable; the diagonal of R is not.
  std::set<long> times;
  if (scale == TimeScale::Exponential) {
    for (long m = n; m <= end; ++m) times.insert(m);
  } else {
    for (int j = 0;; ++j) {
      const long m = std::lround(static_cast<double>(n) * std::exp2(j / 8.0));
      if (m > end) break;
      times.insert(m);
    }
    times.insert(end);
  }
  std::vector<SlopeFit> fits(static_cast<std::size_t>(d));
  std::vector<double> cumulative(static_cast<std::size_t>(d), 0.0);
  Matrix q = Matrix::Identity(d, d);
  auto record = [&](long m) {
    const double x = scale == TimeScale::Exponential
                         ? static_cast<double>(m - n)
                         : std::log(static_cast<double>(m)) - std::log(static_cast<double>(n));
    for (int i = 0; i < d; ++i) fits[i].add(x, cumulative[i]);
  };
  record(n);
  for (long m = n; m < end; ++m) {
    Eigen::HouseholderQR<Matrix> qr(a.step(m) * q);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    q = qr.householderQ();
    for (int i = 0; i < d; ++i) {
      const double rii = std::abs(r(i, i));
      if (!(rii > kTiny) || !std::isfinite(rii)) {
        throw Error(ErrorKind::Conditioning, "orbit growth left the representable range",
                    "n=" + std::to_string(n) + " m=" + std::to_string(m));
      }
      cumulative[i] += std::log(rii);
    }
    if (times.count(m + 1)) record(m + 1);
  }
  for (const auto& f : fits) prof.raw_slopes.push_back(f.slope());
  // QR rates come out roughly ordered; pair them with singular directions in
  // decreasing order.
  std::sort(prof.raw_slopes.begin(), prof.raw_slopes.end(), std::greater<>());
  (void)norms;
  return prof;
}

SubspaceEstimate classify_directions(const DirectionProfile& profile, double sigma, double margin) {
  SubspaceEstimate est;
  est.anchor = profile.anchor;
  Eigen::Index stable = 0;
  for (std::size_t i = 0; i < profile.raw_slopes.size(); ++i) {
    const double s = profile.raw_slopes[i] - sigma;
    est.slopes.push_back(s);
    if (std::abs(s) < margin) {
      throw Error(ErrorKind::Indeterminate, "rate too close to the spectrum",
                  "direction " + std::to_string(i) + " slope " + std::to_string(s) + " margin " +
                      std::to_string(margin) + " shift " + std::to_string(sigma));
    }
    if (s <= -margin) ++stable;
  }
  // Slopes are descending, so the stable directions are the trailing ones.
  est.basis = profile.directions.rightCols(stable);
  return est;
}

SubspaceEstimate estimate_stable_subspace(const Cocycle& a, const NormFamily& norms, double rate, long n,
                                          long horizon, const SubspaceOptions& opts) {
  if (horizon < opts.min_horizon) {
    throw Error(ErrorKind::Precondition, "horizon shorter than the minimum",
                std::to_string(horizon) + " < " + std::to_string(opts.min_horizon));
  }
  if (!(rate > 0.0)) throw Error(ErrorKind::Domain, "rate must be positive", std::to_string(rate));
  if (a.poly_tau() != 0.0) {
    throw Error(ErrorKind::Precondition, "exponential weighting of a polynomially shifted cocycle", a.name());
  }
  const auto prof = direction_profile(a, norms, n, horizon, TimeScale::Exponential);
  return classify_directions(prof, std::log(rate) + a.log_rate(), opts.margin);
}

SubspaceEstimate estimate_stable_subspace_polynomial(const Cocycle& a, const NormFamily& norms, double tau,
                                                     long n, long horizon, const SubspaceOptions& opts) {
  if (horizon < opts.min_horizon) {
    throw Error(ErrorKind::Precondition, "horizon shorter than the minimum",
                std::to_string(horizon) + " < " + std::to_string(opts.min_horizon));
  }
  if (a.log_rate() != 0.0) {
    throw Error(ErrorKind::Precondition, "polynomial weighting of an exponentially shifted cocycle", a.name());
  }
  const auto prof = direction_profile(a, norms, n, horizon, TimeScale::Polynomial);
  return classify_directions(prof, tau + a.poly_tau(), opts.margin);
}

ProjectionFamily build_estimated_projections(const Cocycle& a_in, long anchor, const Matrix& stable_basis,
                                             long horizon) {
  const int d = a_in.dim();
  const Eigen::Index k = stable_basis.cols();
  if (k == 0 || k == d) return build_equivariant_projections(a_in, anchor, stable_basis);
  const Cocycle a = a_in.unshifted();
  const ProjectionFamily base = build_equivariant_projections(a, anchor, stable_basis);
  const Matrix kernel0 = Eigen::JacobiSVD<Matrix>(base.anchor_projection(), Eigen::ComputeFullV).matrixV().rightCols(d - k);
  const std::optional<long> last = a.last_index();

  struct Memo {
    std::mutex mutex;
    std::map<long, Matrix> values;
  };
  auto memo = std::make_shared<Memo>();
  auto range_at = [a, k, horizon, last](long n) -> Matrix {
    long end = n + horizon;
    long from = n;
    if (last && end > *last + 1) {
      end = *last + 1;
      from = std::max(a.origin(), end - horizon);
    }
    Eigen::JacobiSVD<Matrix> svd(a(end, from), Eigen::ComputeFullV);
    Matrix r = svd.matrixV().rightCols(k);
    // Near the end of a finite sequence the last full estimate is carried
    // forward over the few remaining steps.
    if (from < n) r = Eigen::HouseholderQR<Matrix>(a(n, from) * r).householderQ() * Matrix::Identity(a.dim(), k);
    return r;
  };
  auto rule = [a, anchor, base, kernel0, memo, range_at, d, k](long n) -> Matrix {
    if (n == anchor) return base.anchor_projection();
    if (n < anchor) return base(n);
    {
      std::lock_guard lock(memo->mutex);
      auto it = memo->values.find(n);
      if (it != memo->values.end()) return it->second;
    }
    const Matrix range = range_at(n);
    const Matrix kernel =
        Eigen::HouseholderQR<Matrix>(a(n, anchor) * kernel0).householderQ() * Matrix::Identity(d, d - k);
    Matrix full(d, d);
    full << range, kernel;
    Eigen::FullPivLU<Matrix> lu(full);
    if (!lu.isInvertible()) {
      throw Error(ErrorKind::Rank, "estimated stable and unstable subspaces are dependent",
                  "n=" + std::to_string(n));
    }
    Matrix selector = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < k; ++i) selector(i, i) = 1.0;
    Matrix p = full * selector * lu.inverse();
    std::lock_guard lock(memo->mutex);
    memo->values.emplace(n, p);
    return p;
  };
  return ProjectionFamily::from_rule(a, anchor, rule);
}

EquivalenceReport check_dyadic_equivalence(const Cocycle& a, const NormFamily& norms, const VerifyOptions& opts) {
  if (a.origin() != 1) throw Error(ErrorKind::Precondition, "dyadic equivalence needs natural time", a.name());
  EquivalenceReport rep;
  const long window = opts.window;
  const NormFamily* nptr = norms.is_euclidean() ? nullptr : &norms;

  // Growth bounds are a precondition of the equivalence.
  (void)require_growth_bounds(a, nptr, Flavor::Polynomial, opts);

  Matrix basis(a.dim(), 0);
  try {
    basis = estimate_stable_subspace_polynomial(a, norms, 0.0, 1, window - 1).basis;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Indeterminate) throw;
    rep.note = "no split at rate 1: " + e.witness();
  }
  const ProjectionFamily p = build_equivariant_projections(a, 1, basis);
  rep.polynomial = verify_polynomial_dichotomy(a, p, nptr, opts);

  const Cocycle blocks(dyadic_blocks(a, window));
  const ProjectionFamily pb(blocks, 0, p.anchor_projection());
  VerifyOptions eopts = opts;
  eopts.window = *blocks.last_index() + 1;
  const NormFamily block_norms = NormFamily::dyadic(norms);
  rep.exponential = verify_exponential_dichotomy(blocks, pb, nptr ? &block_norms : nullptr, eopts);

  rep.agree = rep.polynomial.verdict == rep.exponential.verdict;
  if (rep.polynomial.accepted() && rep.exponential.accepted()) {
    rep.lambda_ratio = rep.exponential.lambda / (rep.polynomial.lambda * std::log(2.0));
    rep.lambda_consistent = std::abs(rep.lambda_ratio - 1.0) <= 0.1;
  }
  return rep;
}

}  // namespace polylin
