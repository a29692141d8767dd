#pragma once

#include "polylin/projections.hpp"

#include <memory>
#include <vector>

namespace polylin {

/// Constants of a dichotomy claim, used to weight adapted norms.
struct DichotomyConstants {
  double K = 1.0;
  double lambda = 1.0;
  double a = 1.0;
  double epsilon = 0.0;
};

/// Time-indexed norms on R^d.
///
/// Constant: the Euclidean norm at every index. Adapted: weighted orbit
/// suprema split into stable and unstable parts, truncated at a horizon.
/// Dyadic: block index n reads the base family at original time 2^n.
class NormFamily {
 public:
  enum class Kind { Constant, AdaptedPolynomial, AdaptedExponential, Dyadic };

  struct Parts {
    double stable = 0.0;
    double unstable = 0.0;
    double total() const { return stable + unstable; }
  };

  class Impl;

  static NormFamily euclidean();
  static NormFamily dyadic(const NormFamily& base);

  double operator()(long n, const Vector& x) const;
  std::vector<double> evaluate(long n, const std::vector<Vector>& xs) const;
  /// Stable/unstable split; constant families report everything as stable.
  std::vector<Parts> evaluate_parts(long n, const std::vector<Vector>& xs) const;

  Kind kind() const;
  /// True when every index carries the plain Euclidean norm.
  bool is_euclidean() const;
  long horizon() const;
  double sandwich_C() const;
  double sandwich_delta() const;
  /// Upper sandwich factor at index n: C n^delta or C e^{delta |n|}.
  double sandwich_bound(long n) const;

  explicit NormFamily(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<const Impl> impl_;
};

/// Lyapunov norms for a polynomial dichotomy; verifies the dichotomy of
/// (A, P) first and throws a precondition error if it is rejected.
NormFamily adapted_polynomial_norms(const Cocycle& a, const ProjectionFamily& p,
                                    const DichotomyConstants& constants, long horizon = 4096);

/// Exponential analogue on block time.
NormFamily adapted_exponential_norms(const Cocycle& b, const ProjectionFamily& p,
                                     const DichotomyConstants& constants, long horizon = 4096);

}  // namespace polylin
