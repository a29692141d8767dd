#pragma once

#include "polylin/operator_sequence.hpp"

#include <memory>

namespace polylin {

/// Transition matrices of an operator sequence.
///
/// A(m, n) = A_{m-1} ... A_n for m > n, identity for m = n and the product of
/// inverses for m < n. Products are assembled from cached blocks aligned to
/// power-of-two strides, so a query costs O(log(m - n)) multiplies once warm.
/// Copies share the cache; the cache is safe for concurrent readers.
///
/// A cocycle may carry a scalar shift: (m/n)^{-tau} (polynomial) or
/// r^{-(m-n)} (exponential). Shifted views share the unshifted cache.
class Cocycle {
 public:
  explicit Cocycle(OperatorSequence sequence);

  Matrix operator()(long m, long n) const;

  /// Shifted generator and its inverse.
  Matrix step(long n) const;
  Matrix step_inverse(long n) const;

  /// The scalar multiplying the unshifted transition matrix.
  double shift_factor(long m, long n) const;

  Cocycle polynomial_shift(double tau) const;
  /// Divides every generator by `rate`.
  Cocycle exponential_shift(double rate) const;
  Cocycle unshifted() const;

  double poly_tau() const noexcept { return tau_; }
  double log_rate() const noexcept { return log_rate_; }
  bool is_shifted() const noexcept { return tau_ != 0.0 || log_rate_ != 0.0; }

  const OperatorSequence& sequence() const;
  int dim() const;
  long origin() const;
  std::optional<long> last_index() const;
  const std::string& name() const;

  /// Number of cached block products, for diagnostics and tests.
  std::size_t cache_size() const;

 private:
  struct Core;
  std::shared_ptr<Core> core_;
  double tau_ = 0.0;
  double log_rate_ = 0.0;
};

/// Block sequence B_n = A(2^{n+1}, 2^n) on block time, for 2^{n+1} <= max_time.
/// Requests past that bound raise a horizon error.
OperatorSequence dyadic_blocks(const Cocycle& a, long max_time);

}  // namespace polylin
