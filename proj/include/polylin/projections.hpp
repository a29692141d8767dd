#pragma once

#include "polylin/cocycle.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>

namespace polylin {

/// Equivariant projections P_n = A(n, n0) P0 A(n0, n).
///
/// Scalar shifts of the cocycle do not change the family, so it always
/// propagates with the unshifted transition matrices.
class ProjectionFamily {
 public:
  ProjectionFamily(const Cocycle& a, long anchor, Matrix p0);

  /// Family given by an explicit rule instead of propagation. Used to feed
  /// user-specified (possibly non-equivariant) projections to verifiers.
  static ProjectionFamily from_rule(const Cocycle& a, long anchor, std::function<Matrix(long)> rule);

  Matrix operator()(long n) const;
  Matrix complement(long n) const;

  int rank() const noexcept { return rank_; }
  long anchor() const noexcept { return anchor_; }
  const Matrix& anchor_projection() const noexcept { return p0_; }
  const Cocycle& cocycle() const noexcept { return a_; }
  int dim() const noexcept { return static_cast<int>(p0_.rows()); }

  /// ||P_n^2 - P_n||, absolute.
  double idempotency_residual(long n) const;
  /// ||A_n P_n - P_{n+1} A_n|| / (||A_n|| max(1, ||P_n||)).
  double equivariance_residual(long n) const;

 private:
  Cocycle a_;
  std::function<Matrix(long)> rule_;
  long anchor_;
  Matrix p0_;
  int rank_;
  struct Cache {
    std::mutex mutex;
    std::map<long, Matrix> values;
  };
  std::shared_ptr<Cache> cache_;
};

enum class ComplementPolicy { Orthogonal, Given };

/// P0 projects onto span(stable_basis) along the orthogonal complement, or
/// along span(complement_basis) when the policy is Given. A basis with zero
/// columns yields P = 0.
ProjectionFamily build_equivariant_projections(const Cocycle& a, long anchor, const Matrix& stable_basis,
                                               ComplementPolicy policy = ComplementPolicy::Orthogonal,
                                               const Matrix& complement_basis = Matrix());

}  // namespace polylin
