#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "polylin/cocycle.hpp"
#include "polylin/dichotomy.hpp"
#include "polylin/norms.hpp"

namespace polylin {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ResolventSample {
  double point = 0.0;  // rate for the exponential flavor, exponent for the polynomial one
  Verdict verdict = Verdict::Rejected;
  int stable_dim = -1;  // -1 when the rate sits inside a growth band
  double lambda = 0.0;
  double K = 0.0;
};

struct SpectrumResult {
  Flavor flavor = Flavor::Exponential;
  std::vector<Interval> intervals;
  double resolution = 0.0;
  std::vector<ResolventSample> samples;
  Interval search_bounds;
  double growth_exponent = 0.0;
  std::vector<std::string> warnings;
};

struct SpectrumOptions {
  double grid_step = 1e-3;  // log-rate units (exponential) or exponent units (polynomial)
  long window = 4096;
  double margin_factor = 0.75;
  unsigned threads = 0;  // 0 = hardware concurrency
  VerifyOptions verify;
};

/// Tests shifted copies of one cocycle. The direction profile and the pair
/// table of each projection rank are computed once and shared by all shifts.
class ResolventScanner {
 public:
  /// `window` follows VerifyOptions semantics for the flavor; `margin` is the
  /// half-width, in shift units, of the band treated as non-hyperbolic.
  ResolventScanner(const Cocycle& a, const NormFamily* norms, Flavor flavor, const VerifyOptions& opts,
                   double margin);

  /// `shift` is a log-rate for the exponential flavor and an exponent for the
  /// polynomial one.
  ResolventSample test(double shift) const;

  Flavor flavor() const { return flavor_; }
  double margin() const { return margin_; }
  const DirectionProfile& profile() const { return profile_; }

 private:
  struct Entry {
    std::once_flag once;
    std::optional<ProjectionFamily> projections;
    PairTable table;
  };
  const Entry& entry(int rank) const;

  Cocycle a_;
  const NormFamily* norms_;
  Flavor flavor_;
  VerifyOptions opts_;
  double margin_;
  long horizon_;
  DirectionProfile profile_;
  mutable std::mutex mutex_;
  mutable std::map<int, std::shared_ptr<Entry>> entries_;
};

/// Dichotomy spectrum of a block-time cocycle as closed intervals of rates.
SpectrumResult exponential_spectrum(const Cocycle& b, const NormFamily* norms, const SpectrumOptions& opts);

/// Polynomial spectrum through the dyadic blocks of `a`, as exponent intervals.
SpectrumResult polynomial_spectrum(const Cocycle& a, const NormFamily* norms, const SpectrumOptions& opts);

/// Verdict for ((n+1)/n)^{-tau} A_n tested directly in natural time.
Verdict direct_polynomial_resolvent_test(const Cocycle& a, const NormFamily* norms, double tau,
                                         const SpectrumOptions& opts);

/// Verdict for the rate 2^tau on the dyadic blocks of `a`.
Verdict dyadic_resolvent_test(const Cocycle& a, const NormFamily* norms, double tau, const SpectrumOptions& opts);

struct SpectralGapReport {
  int k = 0;
  int r = 0;
  bool sp1_ok = false;
  bool sp2_ok = false;
  bool sp3_ok = false;
  double alpha1_bound = 0.0;
  double alpha1_effective = 0.0;
  std::vector<Interval> rate_intervals;  // intervals on the rate scale
  std::string note;
};

/// Gap and band conditions around rate 1 (exponent 0). Polynomial spectra are
/// mapped to rates 2^x first.
SpectralGapReport check_gap_band(const SpectrumResult& s, double alpha_margin = 1e-3);

}  // namespace polylin
