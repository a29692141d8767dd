#pragma once

// Independent reference computations used by the tests. Nothing here goes
// through the library's caches or fitting code.

#include "polylin/linalg.hpp"

#include <cmath>
#include <functional>

namespace oracle {

using polylin::Matrix;
using polylin::Vector;

inline Matrix example_4_3_step(long n) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = static_cast<double>(n) / (n + 1);
  m(1, 1) = static_cast<double>(n + 1) / n;
  return m;
}

/// Closed-form transition matrix of the example: diag(n/m, m/n).
inline Matrix example_4_3_transition(long m, long n) {
  Matrix r = Matrix::Zero(2, 2);
  r(0, 0) = static_cast<double>(n) / m;
  r(1, 1) = static_cast<double>(m) / n;
  return r;
}

/// Step-by-step product, inverses multiplied explicitly for m < n.
inline Matrix direct_product(const std::function<Matrix(long)>& step, long m, long n, int d) {
  Matrix r = Matrix::Identity(d, d);
  if (m >= n) {
    for (long k = n; k < m; ++k) r = step(k) * r;
  } else {
    for (long k = m; k < n; ++k) r = r * step(k).inverse();
  }
  return r;
}

inline double xi(double x) { return x * x * std::exp(-x * x); }
inline double dxi(double x) { return 2.0 * x * (1.0 - x * x) * std::exp(-x * x); }

/// Max abs entry difference.
inline double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace oracle
