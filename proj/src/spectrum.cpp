#include "polylin/spectrum.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"

namespace polylin {

namespace {

long horizon_for(const Cocycle& a, Flavor flavor, long window) {
  if (flavor == Flavor::Polynomial) {
    long last = window;
    if (auto li = a.last_index()) last = std::min(last, *li + 1);
    return last - a.origin();
  }
  long last = a.origin() + window;
  if (auto li = a.last_index()) last = std::min(last, *li + 1);
  return last - a.origin();
}

void require_growth(const Cocycle& a, const NormFamily* norms, Flavor flavor, const VerifyOptions& opts,
                    double* exponent) {
  *exponent = require_growth_bounds(a, norms, flavor, opts).a;
}

bool rejected(const ResolventSample& s) { return s.verdict != Verdict::Accepted; }

Interval map_interval(const Interval& in, double (*f)(double)) { return {f(in.lo), f(in.hi)}; }

double log2_of(double rate) { return std::log(rate) / std::log(2.0); }
double exp2_of(double x) { return std::exp2(x); }

}  // namespace

ResolventScanner::ResolventScanner(const Cocycle& a, const NormFamily* norms, Flavor flavor,
                                   const VerifyOptions& opts, double margin)
    : a_(a.unshifted()), norms_(norms), flavor_(flavor), opts_(opts), margin_(margin) {
  if (flavor == Flavor::Polynomial && a_.origin() != 1) {
    throw Error(ErrorKind::Precondition, "polynomial scan needs natural time", a_.name());
  }
  opts_.lambda_min = margin;
  horizon_ = horizon_for(a_, flavor, opts.window);
  const TimeScale scale = flavor == Flavor::Polynomial ? TimeScale::Polynomial : TimeScale::Exponential;
  profile_ = direction_profile(a_, NormFamily::euclidean(), a_.origin(), horizon_, scale);
}

const ResolventScanner::Entry& ResolventScanner::entry(int rank) const {
  std::shared_ptr<Entry> e;
  {
    std::lock_guard lock(mutex_);
    auto& slot = entries_[rank];
    if (!slot) slot = std::make_shared<Entry>();
    e = slot;
  }
  std::call_once(e->once, [&] {
    const Matrix basis = profile_.directions.rightCols(rank);
    ProjectionFamily p = flavor_ == Flavor::Exponential
                             ? build_estimated_projections(a_, a_.origin(), basis, std::min<long>(horizon_, 64))
                             : build_equivariant_projections(a_, a_.origin(), basis);
    require_equivariant(a_, p, a_.origin() + horizon_);
    e->table = collect_pairs(a_, p, norms_, flavor_, opts_);
    e->projections = std::move(p);
  });
  return *e;
}

ResolventSample ResolventScanner::test(double shift) const {
  ResolventSample s;
  s.point = shift;
  SubspaceEstimate sub;
  try {
    sub = classify_directions(profile_, shift, margin_);
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::Indeterminate) throw;
    s.verdict = Verdict::Rejected;
    return s;
  }
  s.stable_dim = static_cast<int>(sub.basis.cols());
  const DichotomyEstimate est = fit_dichotomy(entry(s.stable_dim).table, shift, opts_);
  s.verdict = est.verdict;
  s.lambda = est.lambda;
  s.K = est.K;
  return s;
}

SpectrumResult exponential_spectrum(const Cocycle& b_in, const NormFamily* norms, const SpectrumOptions& opts) {
  const Cocycle b = b_in.unshifted();
  const double step = opts.grid_step;
  if (!(step > 0.0) || step > 0.01) {
    throw Error(ErrorKind::Precondition, "grid step must lie in (0, 0.01] log-rate units", std::to_string(step));
  }
  VerifyOptions vopts = opts.verify;
  vopts.window = opts.window;

  SpectrumResult res;
  res.flavor = Flavor::Exponential;
  res.resolution = step;
  require_growth(b, norms, Flavor::Exponential, vopts, &res.growth_exponent);

  const ResolventScanner scanner(b, norms, Flavor::Exponential, vopts, opts.margin_factor * step);
  const double lo = -res.growth_exponent - 1.0;
  const double hi = res.growth_exponent + 1.0;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step)) + 1;
  std::vector<ResolventSample> grid(count);
  detail::parallel_for(count, opts.threads, [&](std::size_t i) { grid[i] = scanner.test(lo + static_cast<double>(i) * step); });

  // Bisection between an accepted and a rejected shift; returns the rejected end.
  auto refine = [&](double accepted, double rejected_at) {
    while (std::abs(rejected_at - accepted) > step / 8.0) {
      const double mid = 0.5 * (accepted + rejected_at);
      if (rejected(scanner.test(mid))) rejected_at = mid;
      else accepted = mid;
    }
    return rejected_at;
  };

  std::vector<Interval> log_intervals;
  for (std::size_t i = 0; i < count;) {
    if (!rejected(grid[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < count && rejected(grid[j + 1])) ++j;
    const double x0 = lo + static_cast<double>(i) * step;
    const double x1 = lo + static_cast<double>(j) * step;
    Interval iv{x0, x1};
    if (i > 0) iv.lo = refine(x0 - step, x0);
    else res.warnings.push_back("interval touches the lower search bound");
    if (j + 1 < count) iv.hi = refine(x1 + step, x1);
    else res.warnings.push_back("interval touches the upper search bound");
    if (i > 0 && j + 1 < count) {
      const int jump = grid[j + 1].stable_dim - grid[i - 1].stable_dim;
      if (jump > 1) {
        res.warnings.push_back("stable dimension jumps by " + std::to_string(jump) + " across [" +
                               std::to_string(std::exp(iv.lo)) + ", " + std::to_string(std::exp(iv.hi)) +
                               "]; a gap narrower than the grid may be merged");
      }
    }
    log_intervals.push_back(iv);
    i = j + 1;
  }

  res.search_bounds = {std::exp(lo), std::exp(hi)};
  for (auto& s : grid) {
    s.point = std::exp(s.point);
    res.samples.push_back(s);
  }
  for (const auto& iv : log_intervals) res.intervals.push_back({std::exp(iv.lo), std::exp(iv.hi)});
  if (res.intervals.size() > static_cast<std::size_t>(b.dim())) {
    throw Error(ErrorKind::Structure, "more spectral intervals than the dimension",
                std::to_string(res.intervals.size()) + " > " + std::to_string(b.dim()));
  }
  if (res.intervals.empty()) {
    throw Error(ErrorKind::Structure, "no spectral interval found inside the search bounds",
                "[" + std::to_string(res.search_bounds.lo) + ", " + std::to_string(res.search_bounds.hi) + "]");
  }
  return res;
}

SpectrumResult polynomial_spectrum(const Cocycle& a_in, const NormFamily* norms, const SpectrumOptions& opts) {
  const Cocycle a = a_in.unshifted();
  if (a.origin() != 1) throw Error(ErrorKind::Precondition, "polynomial spectrum needs natural time", a.name());
  VerifyOptions vopts = opts.verify;
  vopts.window = opts.window;
  double growth = 0.0;
  require_growth(a, norms, Flavor::Polynomial, vopts, &growth);

  const Cocycle blocks(dyadic_blocks(a, opts.window));
  std::optional<NormFamily> block_norms;
  if (norms && !norms->is_euclidean()) block_norms = NormFamily::dyadic(*norms);
  SpectrumOptions bopts = opts;
  bopts.grid_step = opts.grid_step * std::log(2.0);
  bopts.window = *blocks.last_index() + 1;
  SpectrumResult res = exponential_spectrum(blocks, block_norms ? &*block_norms : nullptr, bopts);

  res.flavor = Flavor::Polynomial;
  res.resolution = opts.grid_step;
  res.growth_exponent = growth;
  res.search_bounds = map_interval(res.search_bounds, log2_of);
  for (auto& iv : res.intervals) iv = map_interval(iv, log2_of);
  for (auto& s : res.samples) s.point = log2_of(s.point);
  return res;
}

Verdict direct_polynomial_resolvent_test(const Cocycle& a, const NormFamily* norms, double tau,
                                         const SpectrumOptions& opts) {
  VerifyOptions vopts = opts.verify;
  vopts.window = opts.window;
  const ResolventScanner scanner(a, norms, Flavor::Polynomial, vopts, opts.margin_factor * opts.grid_step);
  return scanner.test(tau).verdict;
}

Verdict dyadic_resolvent_test(const Cocycle& a, const NormFamily* norms, double tau, const SpectrumOptions& opts) {
  const Cocycle blocks(dyadic_blocks(a.unshifted(), opts.window));
  std::optional<NormFamily> block_norms;
  if (norms && !norms->is_euclidean()) block_norms = NormFamily::dyadic(*norms);
  VerifyOptions vopts = opts.verify;
  vopts.window = *blocks.last_index() + 1;
  const double ln2 = std::log(2.0);
  const ResolventScanner scanner(blocks, block_norms ? &*block_norms : nullptr, Flavor::Exponential, vopts,
                                 opts.margin_factor * opts.grid_step * ln2);
  return scanner.test(tau * ln2).verdict;
}

SpectralGapReport check_gap_band(const SpectrumResult& s, double alpha_margin) {
  if (s.intervals.empty()) throw Error(ErrorKind::Precondition, "empty spectrum", "");
  SpectralGapReport rep;
  for (const auto& iv : s.intervals)
    rep.rate_intervals.push_back(s.flavor == Flavor::Polynomial ? map_interval(iv, exp2_of) : iv);
  const auto& ivs = rep.rate_intervals;
  rep.r = static_cast<int>(ivs.size());
  for (int i = 0; i < rep.r; ++i) {
    if (ivs[i].lo <= 1.0 && 1.0 <= ivs[i].hi) {
      throw Error(ErrorKind::NoHyperbolicity, "reference rate 1 lies in the spectrum",
                  "interval " + std::to_string(i + 1) + " = [" + std::to_string(ivs[i].lo) + ", " +
                      std::to_string(ivs[i].hi) + "]");
    }
    if (ivs[i].hi < 1.0) rep.k = i + 1;
  }
  const int k = rep.k;
  if (k == 0) {
    rep.note = "contractive part empty";
    return rep;
  }
  if (k == rep.r) {
    rep.note = "expansive part empty";
    return rep;
  }
  rep.sp1_ok = true;
  const double bk = ivs[k - 1].hi;
  const double ak1 = ivs[k].lo;
  const double a1 = ivs.front().lo;
  const double br = ivs.back().hi;

  bool band = true;
  for (int i = 0; i < k; ++i) band = band && ivs[i].hi / ivs[i].lo < 1.0 / bk;
  for (int j = k; j < rep.r; ++j) band = band && ivs[j].hi / ivs[j].lo < ak1;
  rep.sp3_ok = band;
  rep.sp2_ok = band && ak1 / bk > std::max(br, 1.0 / a1);

  const double gap = std::log(ak1) - std::log(bk);
  rep.alpha1_bound = std::min(gap / std::log(br), gap / std::log(1.0 / a1));
  rep.alpha1_effective =
      rep.alpha1_bound > alpha_margin ? std::min(rep.alpha1_bound - alpha_margin, 1.0) : 0.5 * rep.alpha1_bound;
  if (rep.alpha1_bound > 1.0) rep.note = "alpha1 bound exceeds 1; clamped";
  return rep;
}

}  // namespace polylin
