#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "polylin/dichotomy.hpp"
#include "polylin/linearize.hpp"
#include "polylin/perturbation.hpp"
#include "polylin/spectrum.hpp"

namespace polylin {

/// t -> A(t) on t >= 1.
class CoefficientField {
 public:
  using Rule = std::function<Matrix(double)>;
  CoefficientField(std::string name, int dim, Rule rule);

  /// Entries as expressions in t.
  static CoefficientField closed_form(std::string name, std::vector<std::vector<Expression>> entries);
  /// diag(e_1/t, ..., e_d/t).
  static CoefficientField diagonal_power_law(std::vector<double> exponents, std::string name = {});
  static CoefficientField zero(int dim);

  /// Throws Domain for t < 1 and Integration for non-finite entries.
  Matrix operator()(double t) const;
  const std::string& name() const { return name_; }
  int dim() const { return dim_; }

 private:
  std::string name_;
  int dim_;
  Rule rule_;
};

struct IntegratorOptions {
  double step = 1.0 / 256.0;
  /// Step-doubling extrapolation with an error estimate.
  bool richardson = true;
  /// Per unit time, relative to the propagator norm.
  double tol = 1e-10;
  int max_halvings = 8;
};

/// Solution operators T(t, s) of x' = A(t)x.
///
/// Unit propagators T(k+1, k) and their backward counterparts are integrated
/// once and cached; copies share the cache, which is safe for concurrent use.
class EvolutionFamily {
 public:
  explicit EvolutionFamily(CoefficientField field, IntegratorOptions opts = {});

  Matrix operator()(double t, double s) const;
  /// Plain fixed-step RK4 from s to t with `steps` steps, no cache.
  Matrix integrate_fixed(double t, double s, long steps) const;

  /// Largest error estimate seen so far.
  double error_estimate() const;
  const CoefficientField& field() const { return field_; }
  const IntegratorOptions& options() const { return opts_; }
  int dim() const { return field_.dim(); }

 private:
  CoefficientField field_;
  IntegratorOptions opts_;
  struct Cache {
    std::mutex mutex;
    std::map<long, Matrix> forward, backward;
    double error = 0.0;
  };
  std::shared_ptr<Cache> cache_;
  Matrix segment(double t, double s) const;
  const Matrix& unit(long k, bool forward) const;
};

/// A_n = T(n+1, n) on natural time for n <= last_index.
OperatorSequence discretize(const EvolutionFamily& e, long last_index);

/// Nonlinear forcing f(t, x) of x' = A(t)x + f(t, x).
class Forcing {
 public:
  using Map = std::function<Vector(double, const Vector&)>;
  using Jacobian = std::function<Matrix(double, const Vector&)>;
  Forcing(std::string name, int dim, Map map, Jacobian jacobian);

  static Forcing zero(int dim);
  /// eta/(t+1) (xi(x_1), ..., xi(x_d)).
  static Forcing bump(int dim, double eta);
  /// Components in t, x1..xd; Jacobian by forward-mode AD.
  static Forcing closed_form(std::string name, std::vector<Expression> components);

  Vector operator()(double t, const Vector& x) const { return map_(t, x); }
  Matrix jacobian(double t, const Vector& x) const { return jacobian_(t, x); }
  const std::string& name() const { return name_; }
  int dim() const { return dim_; }

 private:
  std::string name_;
  int dim_;
  Map map_;
  Jacobian jacobian_;
};

struct ForcingSamplePlan {
  std::vector<double> radii{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  double last_time = 4096.0;
  int points_per_radius = 8;
  std::uint64_t seed = 0;
};

struct ForcingCertificate {
  double eta_observed = 0.0;  // max t^{1+4eps} ||D_x f(t, x)||
  double L_observed = 0.0;    // max t^{1+5eps} ||D_x f(t,x) - D_x f(t,y)|| / ||x-y||
  double zero_residual = 0.0;
  double eta = 0.0;
  double L = 0.0;
  double epsilon = 0.0;
  std::size_t samples = 0;
};

/// Throws Certification when f(t,0) or D_x f(t,0) is nonzero, or a sample
/// exceeds a claimed eta (NaN means unclaimed).
ForcingCertificate certify_forcing(const Forcing& f, double epsilon, double eta_claim, const ForcingSamplePlan& plan);

/// phi(t, t0; x) for x' = A(t)x + f(t, x).
class SemilinearFlow {
 public:
  SemilinearFlow(EvolutionFamily e, Forcing f);

  Vector operator()(double t, double t0, const Vector& x) const;
  /// D_x phi by the variational equation.
  Matrix jacobian(double t, double t0, const Vector& x) const;
  /// phi(n+1, n; x) - T(n+1, n)x integrated as a deviation from the linear flow.
  Vector deviation(long n, const Vector& x) const;
  Matrix deviation_jacobian(long n, const Vector& x) const;
  /// Step-doubling estimate of the deviation error at (n, x).
  double deviation_error(long n, const Vector& x) const;

  const EvolutionFamily& evolution() const { return e_; }
  const Forcing& forcing() const { return f_; }
  int dim() const { return e_.dim(); }

 private:
  EvolutionFamily e_;
  Forcing f_;
  Vector deviation_steps(long n, const Vector& x, long steps) const;
};

struct ContinuousConstants {
  double K = 1.0;
  double a = 0.0;
  double epsilon = 0.0;
  double eta = 0.0;
};

struct DiscretePerturbation {
  PerturbationFamily g;
  double M_hat = 0.0;  // K 2^a e^{K eta 2^a}
  double c = 0.0;      // K M_hat 2^{a+1+2eps} eta
  ForcingCertificate forcing;
  PerturbationCertificate certificate;
};

/// g_n(x) = phi(n+1, n; x) - A_n x with the decay constant carried over from f.
DiscretePerturbation build_discrete_perturbation(const SemilinearFlow& flow, const ContinuousConstants& k,
                                                 const ForcingSamplePlan& forcing_plan, const SamplePlan& plan);

/// H(t, x) = T(t, n) psi_n(phi(n, t; x)), G(t, x) = phi(t, n; psi_n^{-1}(T(n, t) x)), n = floor(t).
class LinearizationMaps {
 public:
  LinearizationMaps(std::shared_ptr<const ConjugacyAtlas> atlas, SemilinearFlow flow);

  Vector H(double t, const Vector& x) const;
  Vector G(double t, const Vector& x) const;
  double last_time() const;
  const ConjugacyAtlas& atlas() const { return *atlas_; }
  const SemilinearFlow& flow() const { return flow_; }

 private:
  std::shared_ptr<const ConjugacyAtlas> atlas_;
  SemilinearFlow flow_;
  void check_time(double t) const;
};

/// Discretize, certify g, build blocks, solve and wrap as H/G. The block
/// constants are K_block = 1 and lambda_block = ln 2 unless given.
struct ContinuousLinearization {
  DiscretePerturbation perturbation;
  LinearizationConstants constants;
  std::shared_ptr<const ConjugacyAtlas> atlas;
  std::shared_ptr<const LinearizationMaps> maps;
};

struct ContinuousPlan {
  long max_time = 128;
  double C = 1.0;
  double K_block = 1.0;
  double lambda_block = 0.6931471805599453;
  ForcingSamplePlan forcing;
  SamplePlan perturbation;
  BlockOptions blocks;
  SolverOptions solver;
};

ContinuousLinearization linearize_continuous(const SemilinearFlow& flow, const ContinuousConstants& k,
                                             const Matrix& stable_basis, const ContinuousPlan& plan);

struct SolutionCheckOptions {
  double radius = 0.1;
  int samples = 6;
  double last_time = 64.0;
  int times_per_octave = 4;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct SolutionMappingReport {
  double H_deviation = 0.0;   // max ||H(t, x(t)) - T(t,1) H(1, x(1))||
  double G_deviation = 0.0;   // max ||G(t, y(t)) - phi(t, 1; G(1, y(1)))||
  double roundtrip = 0.0;     // max of ||H(t, G(t,x)) - x||, ||G(t, H(t,x)) - x||
  std::size_t samples = 0;
  std::size_t times = 0;
};

SolutionMappingReport verify_solution_mapping(const LinearizationMaps& maps, const SolutionCheckOptions& opts);

struct ContinuousRegularityOptions {
  double last_time = 64.0;
  int times = 12;
  int points_per_time = 4;
  double fd_step = 1e-6;
  std::vector<double> radii{1e-3, 1e-4, 1e-5, 1e-6};
  double rho_min = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  RegularityOptions discrete;
};

struct ContinuousRegularityReport {
  RegularityMode mode = RegularityMode::C1;
  RegularityReport discrete;
  double M_hat = 0.0;
  double zeta = 0.0;          // rho~ / M_hat
  double R = 0.0;             // 2^a K M~ M_hat
  double derivative_observed = 0.0;  // max ||D_x H||, ||D_x G|| over t^{4 eps}
  bool derivative_bounded = false;
  double diff_slope = 0.0;
  bool diff_ok = false;
  double R_tilde = 0.0;       // K 2^a L' M_hat^{alpha1}
  double holder_observed = 0.0;
  bool holder_ok = false;
  bool ok() const;
};

ContinuousRegularityReport verify_continuous_regularity(const LinearizationMaps& maps, RegularityMode mode,
                                                        const SpectralGapReport& gap, const LinearizationConstants& k,
                                                        const ContinuousConstants& ck,
                                                        const ContinuousRegularityOptions& opts);

/// Dichotomy of T(t, s) sampled at real times, including non-integer ones.
DichotomyEstimate verify_continuous_polynomial_dichotomy(const EvolutionFamily& e, const Matrix& stable_basis,
                                                         const VerifyOptions& opts);

/// Polynomial spectrum of the discretization.
SpectrumResult continuous_spectrum(const EvolutionFamily& e, const NormFamily* norms, const SpectrumOptions& opts);

}  // namespace polylin
