#pragma once

#include "polylin/norms.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace polylin {

enum class Flavor { Polynomial, Exponential };
enum class Verdict { Accepted, Rejected };
enum class NormMode { Fixed, Family };

std::string_view to_string(Flavor f);
std::string_view to_string(Verdict v);
std::string_view to_string(NormMode m);

struct VerifyOptions {
  /// Last original-time index (polynomial) or number of blocks (exponential).
  long window = 4096;
  double lambda_min = 1e-3;
  /// Cap for the fitted growth exponent.
  double a_cap = 10.0;
  double eps_step = 0.05;
  double eps_max = 1.0;
  /// K over the full window may exceed K over the half window by this fraction.
  double stabilization_tol = 0.1;
  /// Geometric pair grid: ratios 2^{k/q}.
  int ratio_divisions = 4;
  bool adjacent_pairs = true;
  /// Windows this short are scanned exhaustively.
  long exhaustive_below = 64;
  /// Sample vectors for operator norms between non-Euclidean families.
  int sample_vectors = 64;
  std::uint64_t seed = 0;
  /// Keep per-pair ratios in the estimate (for CSV export).
  bool keep_pairs = false;
};

struct WorstCase {
  double ratio = 0.0;
  double m = 0.0;
  double n = 0.0;
};

/// Observed quantity divided by its envelope with the fitted exponents.
struct PairRatio {
  double m = 0.0;
  double n = 0.0;
  double stable = 0.0;
  double unstable = 0.0;
  double growth_fwd = 0.0;
  double growth_bwd = 0.0;
};

struct DichotomyDiagnostics {
  WorstCase stable, unstable, growth_fwd, growth_bwd;
  WorstCase worst;
  double lambda_stable = 0.0;    // NaN-free: 0 when the side is absent
  double lambda_unstable = 0.0;
  double growth_exponent = 0.0;  // before enforcing a >= lambda
  bool stabilized = false;
  double K_half_window = 0.0;
  std::string reason;
  long window = 0;
  std::size_t pair_count = 0;
  std::vector<PairRatio> pairs;
};

struct DichotomyEstimate {
  Flavor flavor = Flavor::Polynomial;
  NormMode norm_mode = NormMode::Fixed;
  double K = 1.0;
  double lambda = 0.0;
  double a = 0.0;
  double epsilon = 0.0;
  std::optional<ProjectionFamily> projections;
  Verdict verdict = Verdict::Rejected;
  DichotomyDiagnostics diagnostics;

  bool accepted() const { return verdict == Verdict::Accepted; }
  DichotomyConstants constants() const { return {K, lambda, a, epsilon}; }
};

/// Polynomial dichotomy on natural time. `norms == nullptr` selects the
/// fixed Euclidean norm with a fitted nonuniformity exponent; otherwise the
/// constants are measured in the given family and epsilon is 0.
DichotomyEstimate verify_polynomial_dichotomy(const Cocycle& a, const ProjectionFamily& p,
                                              const NormFamily* norms, const VerifyOptions& opts);

/// Exponential dichotomy on block time.
DichotomyEstimate verify_exponential_dichotomy(const Cocycle& b, const ProjectionFamily& p,
                                               const NormFamily* norms, const VerifyOptions& opts);

// ---------------------------------------------------------------------------
// Building blocks shared with the spectrum scanner.

/// Raw (unshifted) operator norms on a set of index pairs.
struct PairSample {
  double m = 0.0, n = 0.0;
  double theta = 0.0;       // log(m/n) or m - n
  double log_nu_n = 0.0;    // log n or |n|
  double log_nu_m = 0.0;
  double stable = 0.0;      // ||A(m,n) P_n||
  double unstable = 0.0;    // ||A(n,m) Q_m||
  double growth_fwd = 0.0;  // ||A(m,n)||
  double growth_bwd = 0.0;  // ||A(n,m)||
};

struct PairTable {
  Flavor flavor = Flavor::Polynomial;
  NormMode norm_mode = NormMode::Fixed;
  bool has_stable = true;
  bool has_unstable = true;
  double half_window_end = 0.0;
  long window = 0;
  std::vector<PairSample> rows;
};

/// Index pairs (m, n) with n <= m inside [origin, last] used by the scans.
std::vector<std::pair<long, long>> scan_pairs(Flavor flavor, long origin, long last, const VerifyOptions& opts);

/// Collects raw norms for `a` without its scalar shift.
PairTable collect_pairs(const Cocycle& a, const ProjectionFamily& p, const NormFamily* norms,
                        Flavor flavor, const VerifyOptions& opts);

/// Fits constants for the cocycle scaled by exp(-sigma * theta).
DichotomyEstimate fit_dichotomy(const PairTable& table, double sigma, const VerifyOptions& opts);

/// Growth exponent and whether K stabilizes for the growth bounds alone.
struct GrowthFit {
  double a = 0.0;
  double K = 1.0;
  double epsilon = 0.0;
  bool stabilized = false;
};
GrowthFit fit_growth(const PairTable& table, const VerifyOptions& opts);

/// Growth fit with the identity projection. Throws Precondition when the
/// constant does not stabilize, the exponent reaches the cap, or the products
/// overflow on the window.
GrowthFit require_growth_bounds(const Cocycle& a, const NormFamily* norms, Flavor flavor, const VerifyOptions& opts);

/// Checks projection equivariance on a spread of indices; throws on failure.
void require_equivariant(const Cocycle& a, const ProjectionFamily& p, long last);

// ---------------------------------------------------------------------------
// Stable subspaces.

enum class TimeScale { Exponential, Polynomial };

/// Right singular directions of the propagator over [n, n + horizon], leading
/// direction first, with the raw growth slopes in decreasing order.
struct DirectionProfile {
  long anchor = 0;
  long horizon = 0;
  TimeScale scale = TimeScale::Exponential;
  Matrix directions;
  std::vector<double> raw_slopes;
};

DirectionProfile direction_profile(const Cocycle& a, const NormFamily& norms, long n, long horizon,
                                   TimeScale scale);

struct SubspaceEstimate {
  long anchor = 0;
  Matrix basis;  // orthonormal columns, possibly zero of them
  std::vector<double> slopes;
};

/// Stable directions are those whose shifted slope is <= -margin. A direction
/// with |slope| < margin raises an indeterminate error.
SubspaceEstimate classify_directions(const DirectionProfile& profile, double sigma, double margin);

struct SubspaceOptions {
  double margin = 0.05;
  long min_horizon = 64;
};

/// S_r(n) for the weighting r^{-(m-n)} (plus any shift carried by `a`).
SubspaceEstimate estimate_stable_subspace(const Cocycle& a, const NormFamily& norms, double rate, long n,
                                          long horizon, const SubspaceOptions& opts = {});

/// Polynomial analogue with the weighting (m/n)^{-tau}.
SubspaceEstimate estimate_stable_subspace_polynomial(const Cocycle& a, const NormFamily& norms, double tau,
                                                     long n, long horizon, const SubspaceOptions& opts = {});

/// Projections for an exponentially split system whose stable subspace at
/// `anchor` was estimated. The range at each later index is re-estimated from
/// the propagator over the next `horizon` steps and the kernel is carried
/// forward from the anchor; forward transport of an estimated stable
/// subspace would amplify its round-off by the rate gap.
ProjectionFamily build_estimated_projections(const Cocycle& a, long anchor, const Matrix& stable_basis,
                                             long horizon);

// ---------------------------------------------------------------------------

struct EquivalenceReport {
  DichotomyEstimate polynomial;
  DichotomyEstimate exponential;
  bool agree = false;
  /// lambda_exp / (lambda_poly * log 2), 0 unless both accepted.
  double lambda_ratio = 0.0;
  bool lambda_consistent = true;
  std::string note;
};

/// Runs the polynomial verifier on `a` and the exponential verifier on its
/// dyadic blocks with subsampled norms, with projections from the stable
/// subspace at time 1.
EquivalenceReport check_dyadic_equivalence(const Cocycle& a, const NormFamily& norms, const VerifyOptions& opts);

}  // namespace polylin
