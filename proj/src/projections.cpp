#include "polylin/projections.hpp"

#include <cmath>

namespace polylin {

ProjectionFamily::ProjectionFamily(const Cocycle& a, long anchor, Matrix p0)
    : a_(a.unshifted()), anchor_(anchor), p0_(std::move(p0)), cache_(std::make_shared<Cache>()) {
  if (p0_.rows() != a_.dim() || p0_.cols() != a_.dim()) {
    throw Error(ErrorKind::Config, "projection has the wrong shape", a_.name());
  }
  rank_ = static_cast<int>(std::lround(p0_.trace()));
  const double idem = (p0_ * p0_ - p0_).norm();
  if (idem > 1e-10 * std::max(1.0, p0_.norm())) {
    throw Error(ErrorKind::Projection, "anchor matrix is not a projection",
                "||P0^2 - P0|| = " + std::to_string(idem));
  }
}

ProjectionFamily ProjectionFamily::from_rule(const Cocycle& a, long anchor,
                                             std::function<Matrix(long)> rule) {
  ProjectionFamily f(a, anchor, rule(anchor));
  f.rule_ = std::move(rule);
  return f;
}

Matrix ProjectionFamily::operator()(long n) const {
  if (rule_) return rule_(n);
  if (n == anchor_) return p0_;
  {
    std::lock_guard lock(cache_->mutex);
    auto it = cache_->values.find(n);
    if (it != cache_->values.end()) return it->second;
  }
  Matrix p;
  if (rank_ == 0) p = Matrix::Zero(dim(), dim());
  else if (rank_ == dim()) p = Matrix::Identity(dim(), dim());
  else p = a_(n, anchor_) * p0_ * a_(anchor_, n);
  std::lock_guard lock(cache_->mutex);
  cache_->values.emplace(n, p);
  return p;
}

Matrix ProjectionFamily::complement(long n) const {
  return Matrix::Identity(dim(), dim()) - (*this)(n);
}

double ProjectionFamily::idempotency_residual(long n) const {
  const Matrix p = (*this)(n);
  return op_norm(p * p - p);
}

double ProjectionFamily::equivariance_residual(long n) const {
  const Matrix an = a_.step(n);
  const Matrix pn = (*this)(n);
  const double scale = op_norm(an) * std::max(1.0, op_norm(pn));
  return op_norm(an * pn - (*this)(n + 1) * an) / scale;
}

ProjectionFamily build_equivariant_projections(const Cocycle& a, long anchor, const Matrix& stable_basis,
                                               ComplementPolicy policy, const Matrix& complement_basis) {
  const int d = a.dim();
  if (stable_basis.cols() == 0) return ProjectionFamily(a, anchor, Matrix::Zero(d, d));
  if (stable_basis.rows() != d) throw Error(ErrorKind::Config, "basis has the wrong row count", a.name());
  Eigen::JacobiSVD<Matrix> svd(stable_basis);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) < 1e-10 * std::max(1.0, s(0))) {
    throw Error(ErrorKind::Rank, "stable basis is rank-deficient", describe(Matrix(stable_basis)));
  }
  if (policy == ComplementPolicy::Orthogonal) {
    // Orthogonal projection onto the column span.
    const Matrix q = Eigen::HouseholderQR<Matrix>(stable_basis).householderQ() *
                     Matrix::Identity(d, stable_basis.cols());
    return ProjectionFamily(a, anchor, q * q.transpose());
  }
  if (complement_basis.rows() != d || complement_basis.cols() + stable_basis.cols() != d) {
    throw Error(ErrorKind::Rank, "complement basis does not complete the stable basis", a.name());
  }
  Matrix full(d, d);
  full << stable_basis, complement_basis;
  Eigen::FullPivLU<Matrix> lu(full);
  if (!lu.isInvertible()) {
    throw Error(ErrorKind::Rank, "stable and complement bases are dependent", describe(full));
  }
  Matrix selector = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < stable_basis.cols(); ++i) selector(i, i) = 1.0;
  return ProjectionFamily(a, anchor, full * selector * lu.inverse());
}

}  // namespace polylin
