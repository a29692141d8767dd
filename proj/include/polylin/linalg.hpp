#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace polylin {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Spectral norm (largest singular value).
double op_norm(const Matrix& m);

/// Smallest singular value.
double min_singular(const Matrix& m);

/// 2-norm condition number; infinity for singular input.
double condition_number(const Matrix& m);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

/// ||a - b|| / max(||b||, floor), spectral norm.
double relative_difference(const Matrix& a, const Matrix& b, double floor = 1e-300);

/// Uniformly distributed unit vectors in R^d.
std::vector<Vector> random_unit_vectors(int d, std::size_t count, std::uint64_t seed);

/// Uniform samples from the closed ball of radius r.
std::vector<Vector> random_ball_points(int d, std::size_t count, double r, std::uint64_t seed);

/// Short textual rendering used in error witnesses and logs.
std::string describe(const Vector& v);
std::string describe(const Matrix& m);

/// Central-difference Jacobian of a map R^d -> R^d.
template <typename F>
Matrix central_difference_jacobian(F&& map, const Vector& x, double step) {
  const auto d = x.size();
  Matrix jac(d, d);
  Vector probe = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    probe(j) = x(j) + step;
    Vector up = map(probe);
    probe(j) = x(j) - step;
    Vector down = map(probe);
    probe(j) = x(j);
    jac.col(j) = (up - down) / (2.0 * step);
  }
  return jac;
}

}  // namespace polylin
