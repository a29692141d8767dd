#include "polylin/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace polylin {

namespace {
Eigen::VectorXd singular_values(const Matrix& m) {
  if (m.size() == 0) return Eigen::VectorXd();
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}
}  // namespace

double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  return singular_values(m)(0);
}

double min_singular(const Matrix& m) {
  auto s = singular_values(m);
  return s.size() ? s(s.size() - 1) : 0.0;
}

double condition_number(const Matrix& m) {
  auto s = singular_values(m);
  if (s.size() == 0) return 1.0;
  const double lo = s(s.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / lo;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

double relative_difference(const Matrix& a, const Matrix& b, double floor) {
  return op_norm(a - b) / std::max(op_norm(b), floor);
}

std::vector<Vector> random_unit_vectors(int d, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(count);
  while (out.size() < count) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = normal(rng);
    const double n = v.norm();
    if (n < 1e-12) continue;
    out.push_back(v / n);
  }
  return out;
}

std::vector<Vector> random_ball_points(int d, std::size_t count, double r, std::uint64_t seed) {
  auto dirs = random_unit_vectors(d, count, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& v : dirs) v *= r * std::pow(uni(rng), 1.0 / d);
  return dirs;
}

std::string describe(const Vector& v) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

std::string describe(const Matrix& m) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << (i ? "; " : "");
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? ", " : "") << m(i, j);
  }
  os << "]";
  return os.str();
}

}  // namespace polylin
