#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "polylin/cocycle.hpp"
#include "polylin/expr.hpp"
#include "polylin/linalg.hpp"
#include "polylin/norms.hpp"

namespace polylin {

/// Claimed decay constants of a perturbation: ||Dg_n(x)|| <= c/(n+1)^{1+2eps}
/// and the matching Lipschitz bound L for Dg_n. NaN means "not claimed".
struct PerturbationConstants {
  double c = std::numeric_limits<double>::quiet_NaN();
  double L = std::numeric_limits<double>::quiet_NaN();
  double epsilon = 0.0;
};

/// Nonlinear terms g_n: R^d -> R^d of x_{n+1} = A_n x_n + g_n(x_n).
class PerturbationFamily {
 public:
  using Map = std::function<Vector(long, const Vector&)>;
  using Jacobian = std::function<Matrix(long, const Vector&)>;

  /// An empty `jacobian` falls back to central differences.
  PerturbationFamily(std::string name, int dim, Map map, Jacobian jacobian, PerturbationConstants constants);

  static PerturbationFamily zero(int dim);
  /// g_n(x) = c/(n+1) (xi(x_1), ..., xi(x_d)) with xi(s) = s^2 exp(-s^2).
  static PerturbationFamily bump(int dim, double c);
  /// Components as expressions in n, x1..xd; derivatives by forward-mode AD.
  static PerturbationFamily closed_form(std::string name, std::vector<Expression> components,
                                        PerturbationConstants constants);

  Vector operator()(long n, const Vector& x) const;
  Matrix jacobian(long n, const Vector& x) const;
  bool has_closed_jacobian() const { return static_cast<bool>(jacobian_); }

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const PerturbationConstants& constants() const { return constants_; }
  PerturbationFamily with_constants(PerturbationConstants c) const;

 private:
  std::string name_;
  int dim_;
  Map map_;
  Jacobian jacobian_;
  PerturbationConstants constants_;
};

struct SamplePlan {
  std::vector<double> radii{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  long last_index = 4096;
  int points_per_radius = 8;
  std::uint64_t seed = 0;
};

struct PerturbationCertificate {
  double c_observed = 0.0;
  double L_observed = 0.0;
  double c = 0.0;  // claimed value if given, otherwise observed
  double L = 0.0;
  double epsilon = 0.0;
  double zero_residual = 0.0;  // max of |g_n(0)| and ||Dg_n(0)||
  std::size_t samples = 0;
};

/// Samples the decay and Lipschitz bounds; throws a certification error on
/// g_n(0) != 0, Dg_n(0) != 0 or any sample above a claimed constant.
PerturbationCertificate check_perturbation_bounds(const PerturbationFamily& g, const SamplePlan& plan);

/// G(m, n) = G_{m-1} o ... o G_n with G_j = A_j + g_j.
class PerturbedCocycle {
 public:
  /// Steps with index < `table_end` are tabulated once.
  PerturbedCocycle(Cocycle a, PerturbationFamily g, long table_end = 4097);

  Vector step(long n, const Vector& x) const;
  Matrix step_jacobian(long n, const Vector& x) const;

  /// G(m, n)(x) for m >= n.
  Vector evaluate(long m, long n, const Vector& x) const;
  /// DG(m, n)(x) by the variational recursion.
  Matrix jacobian(long m, long n, const Vector& x) const;

  /// Solves G_n(x) = y by x <- A_n^{-1}(y - g_n(x)).
  Vector invert_step(long n, const Vector& y) const;
  /// G(m, n)^{-1}(y) for m >= n, i.e. the state at time n reaching y at time m.
  Vector evaluate_backward(long m, long n, const Vector& y) const;

  const Cocycle& linear() const { return a_; }
  const PerturbationFamily& perturbation() const { return g_; }
  int dim() const { return a_.dim(); }
  long origin() const { return a_.origin(); }

  const Matrix& A(long n) const;
  const Matrix& A_inverse(long n) const;

 private:
  Cocycle a_;
  PerturbationFamily g_;
  long table_begin_;
  std::vector<Matrix> steps_;
  std::vector<Matrix> inverses_;
  std::vector<double> inverse_norms_;
};

/// Constants entering the growth envelopes of the perturbed cocycle.
struct GronwallConstants {
  double K = 1.0;
  double a = 0.0;
  double C = 1.0;
  double c = 0.0;
  double L = 0.0;
};

struct GronwallSamplePlan {
  std::size_t samples = 10000;
  long window = 1024;
  double radius = 1.0;
  std::uint64_t seed = 0;
};

struct GronwallReport {
  double max_ratio_derivative = 0.0;  // ||DG v||_m / (K (m/n)^{a+cCK} ||v||_n)
  double max_ratio_lipschitz = 0.0;   // ||(DG(x)-DG(y)) v||_m / (K~ (m/n)^{a~} ||x-y||_n ||v||_n)
  std::size_t violations = 0;
  std::size_t samples = 0;
  std::string worst_derivative;
  std::string worst_lipschitz;
  bool ok() const { return violations == 0; }
};

/// Samples both envelopes with the given constants. `norms` may be null for
/// the Euclidean norm.
GronwallReport gronwall_bound_check(const PerturbedCocycle& g, const GronwallConstants& k, const NormFamily* norms,
                                    const GronwallSamplePlan& plan);

}  // namespace polylin
