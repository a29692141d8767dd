#include "polylin/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace polylin {

namespace {

constexpr double kDivergence = 1e12;

double xi(double s) { return s * s * std::exp(-s * s); }
double dxi(double s) { return 2.0 * s * (1.0 - s * s) * std::exp(-s * s); }

std::string point_text(const Vector& x) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  return os.str();
}

double decay_weight(long n, double epsilon) { return std::pow(static_cast<double>(n + 1), 1.0 + 2.0 * epsilon); }

std::vector<long> sample_indices(long origin, long last) {
  std::set<long> out;
  for (long n = origin; n <= std::min(last, origin + 7); ++n) out.insert(n);
  for (long n = std::max<long>(origin, 1); n <= last; n *= 2) {
    out.insert(n);
    if (n + 1 <= last) out.insert(n + 1);
  }
  out.insert(last);
  return {out.begin(), out.end()};
}

}  // namespace

PerturbationFamily::PerturbationFamily(std::string name, int dim, Map map, Jacobian jacobian,
                                       PerturbationConstants constants)
    : name_(std::move(name)), dim_(dim), map_(std::move(map)), jacobian_(std::move(jacobian)), constants_(constants) {
  if (dim_ < 1) throw Error(ErrorKind::Config, "perturbation dimension must be positive", name_);
}

PerturbationFamily PerturbationFamily::zero(int dim) {
  return PerturbationFamily(
      "zero", dim, [dim](long, const Vector&) { return Vector::Zero(dim); },
      [dim](long, const Vector&) { return Matrix::Zero(dim, dim); }, {0.0, 0.0, 0.0});
}

PerturbationFamily PerturbationFamily::bump(int dim, double c) {
  return PerturbationFamily(
      "bump", dim,
      [c](long n, const Vector& x) {
        return Vector(x.unaryExpr([](double s) { return xi(s); }) * (c / static_cast<double>(n + 1)));
      },
      [c](long n, const Vector& x) {
        return Matrix(x.unaryExpr([](double s) { return dxi(s); }).asDiagonal() * (c / static_cast<double>(n + 1)));
      },
      // |xi'| <= 1 and xi' is 2-Lipschitz
      {c, 2.0 * c, 0.0});
}

PerturbationFamily PerturbationFamily::closed_form(std::string name, std::vector<Expression> components,
                                                   PerturbationConstants constants) {
  const int d = static_cast<int>(components.size());
  if (d < 1 || d + 1 > Expression::kMaxVariables) {
    throw Error(ErrorKind::Config, "unsupported perturbation dimension", std::to_string(d));
  }
  for (const auto& e : components) {
    const auto& vars = e.variables();
    bool ok = static_cast<int>(vars.size()) == d + 1 && vars[0] == "n";
    for (int i = 0; ok && i < d; ++i) ok = vars[i + 1] == "x" + std::to_string(i + 1);
    if (!ok) throw Error(ErrorKind::Config, "perturbation expressions must use variables n, x1..xd", e.source());
  }
  auto shared = std::make_shared<const std::vector<Expression>>(std::move(components));
  auto map = [shared, d](long n, const Vector& x) {
    std::array<double, Expression::kMaxVariables> v{};
    v[0] = static_cast<double>(n);
    for (int i = 0; i < d; ++i) v[i + 1] = x(i);
    Vector out(d);
    for (int i = 0; i < d; ++i) out(i) = (*shared)[i].eval({v.data(), static_cast<std::size_t>(d + 1)});
    return out;
  };
  auto jac = [shared, d](long n, const Vector& x) {
    std::array<double, Expression::kMaxVariables> v{}, grad{};
    v[0] = static_cast<double>(n);
    for (int i = 0; i < d; ++i) v[i + 1] = x(i);
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) {
      (*shared)[i].eval_grad({v.data(), static_cast<std::size_t>(d + 1)}, {grad.data(), static_cast<std::size_t>(d + 1)});
      for (int j = 0; j < d; ++j) out(i, j) = grad[j + 1];
    }
    return out;
  };
  return PerturbationFamily(std::move(name), d, map, jac, constants);
}

Vector PerturbationFamily::operator()(long n, const Vector& x) const {
  Vector y = map_(n, x);
  if (y.size() != dim_) throw Error(ErrorKind::Config, "perturbation returned the wrong size", name_);
  return y;
}

Matrix PerturbationFamily::jacobian(long n, const Vector& x) const {
  if (jacobian_) return jacobian_(n, x);
  return central_difference_jacobian([&](const Vector& z) { return map_(n, z); }, x, 1e-6);
}

PerturbationFamily PerturbationFamily::with_constants(PerturbationConstants c) const {
  PerturbationFamily out = *this;
  out.constants_ = c;
  return out;
}

PerturbationCertificate check_perturbation_bounds(const PerturbationFamily& g, const SamplePlan& plan) {
  const int d = g.dim();
  const double eps = g.constants().epsilon;
  PerturbationCertificate cert;
  cert.epsilon = eps;
  std::mt19937_64 rng(plan.seed);
  const auto dirs = random_unit_vectors(d, static_cast<std::size_t>(plan.points_per_radius) * 2 * plan.radii.size(),
                                        plan.seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::string c_witness, L_witness;
  for (long n : sample_indices(1, plan.last_index)) {
    const Vector zero = Vector::Zero(d);
    const double z = std::max(g(n, zero).cwiseAbs().maxCoeff(), op_norm(g.jacobian(n, zero)));
    if (z > cert.zero_residual) cert.zero_residual = z;
    if (!(z <= 1e-12)) {
      throw Error(ErrorKind::Certification, "perturbation does not vanish to first order at 0",
                  "n=" + std::to_string(n) + " |g(0)|+||Dg(0)|| residual " + std::to_string(z));
    }
    const double w = decay_weight(n, eps);
    std::size_t k = 0;
    for (double r : plan.radii) {
      for (int p = 0; p < plan.points_per_radius; ++p) {
        const Vector x = dirs[k++] * r * unit(rng);
        const Vector y = dirs[k++] * r * unit(rng);
        const Matrix jx = g.jacobian(n, x);
        const Matrix jy = g.jacobian(n, y);
        const double cx = op_norm(jx) * w;
        if (cx > cert.c_observed) {
          cert.c_observed = cx;
          c_witness = "n=" + std::to_string(n) + " x=" + point_text(x);
        }
        const double dist = (x - y).norm();
        if (dist > 0.0) {
          const double lx = op_norm(jx - jy) / dist * w;
          if (lx > cert.L_observed) {
            cert.L_observed = lx;
            L_witness = "n=" + std::to_string(n) + " x=" + point_text(x) + " y=" + point_text(y);
          }
        }
        ++cert.samples;
      }
    }
  }
  const auto& claimed = g.constants();
  const double slack = 1e-9;
  if (!std::isnan(claimed.c) && cert.c_observed > claimed.c * (1.0 + slack) + 1e-15) {
    throw Error(ErrorKind::Certification, "derivative bound exceeds the claimed c",
                c_witness + " observed " + std::to_string(cert.c_observed) + " > " + std::to_string(claimed.c));
  }
  if (!std::isnan(claimed.L) && cert.L_observed > claimed.L * (1.0 + slack) + 1e-15) {
    throw Error(ErrorKind::Certification, "Lipschitz bound exceeds the claimed L",
                L_witness + " observed " + std::to_string(cert.L_observed) + " > " + std::to_string(claimed.L));
  }
  cert.c = std::isnan(claimed.c) ? cert.c_observed : claimed.c;
  cert.L = std::isnan(claimed.L) ? cert.L_observed : claimed.L;
  return cert;
}

PerturbedCocycle::PerturbedCocycle(Cocycle a, PerturbationFamily g, long table_end)
    : a_(std::move(a)), g_(std::move(g)), table_begin_(a_.origin()) {
  if (g_.dim() != a_.dim()) {
    throw Error(ErrorKind::Config, "perturbation and cocycle dimensions differ",
                std::to_string(g_.dim()) + " vs " + std::to_string(a_.dim()));
  }
  long end = table_end;
  if (auto li = a_.last_index()) end = std::min(end, *li + 1);
  for (long n = table_begin_; n < end; ++n) {
    steps_.push_back(a_.step(n));
    inverses_.push_back(a_.step_inverse(n));
    inverse_norms_.push_back(op_norm(inverses_.back()));
  }
}

const Matrix& PerturbedCocycle::A(long n) const {
  const long i = n - table_begin_;
  if (i >= 0 && i < static_cast<long>(steps_.size())) return steps_[static_cast<std::size_t>(i)];
  thread_local Matrix scratch;
  scratch = a_.step(n);
  return scratch;
}

const Matrix& PerturbedCocycle::A_inverse(long n) const {
  const long i = n - table_begin_;
  if (i >= 0 && i < static_cast<long>(inverses_.size())) return inverses_[static_cast<std::size_t>(i)];
  thread_local Matrix scratch;
  scratch = a_.step_inverse(n);
  return scratch;
}

Vector PerturbedCocycle::step(long n, const Vector& x) const { return A(n) * x + g_(n, x); }

Matrix PerturbedCocycle::step_jacobian(long n, const Vector& x) const { return A(n) + g_.jacobian(n, x); }

Vector PerturbedCocycle::evaluate(long m, long n, const Vector& x) const {
  if (m < n) throw Error(ErrorKind::Domain, "forward evaluation needs m >= n", std::to_string(m) + " < " + std::to_string(n));
  Vector y = x;
  for (long j = n; j < m; ++j) {
    y = step(j, y);
    if (!(y.cwiseAbs().maxCoeff() <= kDivergence)) {
      throw Error(ErrorKind::Divergence, "perturbed orbit left the divergence guard",
                  "n=" + std::to_string(n) + " j=" + std::to_string(j + 1) + " x=" + point_text(x));
    }
  }
  return y;
}

Matrix PerturbedCocycle::jacobian(long m, long n, const Vector& x) const {
  if (m < n) throw Error(ErrorKind::Domain, "forward evaluation needs m >= n", std::to_string(m) + " < " + std::to_string(n));
  Vector y = x;
  Matrix j = Matrix::Identity(dim(), dim());
  for (long k = n; k < m; ++k) {
    j = step_jacobian(k, y) * j;
    y = step(k, y);
    if (!(j.cwiseAbs().maxCoeff() <= kDivergence) || !(y.cwiseAbs().maxCoeff() <= kDivergence)) {
      throw Error(ErrorKind::Divergence, "variational recursion left the divergence guard",
                  "n=" + std::to_string(n) + " j=" + std::to_string(k + 1));
    }
  }
  return j;
}

Vector PerturbedCocycle::invert_step(long n, const Vector& y) const {
  const Matrix& inv = A_inverse(n);
  Vector x = inv * y;
  const double scale = std::max(y.norm(), x.norm());
  for (int it = 0; it < 100; ++it) {
    const Vector next = inv * (y - g_(n, x));
    const double delta = (next - x).norm();
    x = next;
    if (delta <= 1e-15 * std::max(scale, x.norm()) || delta == 0.0) return x;
  }
  // Report the local contraction that failed.
  const long i = n - table_begin_;
  const double inv_norm = i >= 0 && i < static_cast<long>(inverse_norms_.size())
                              ? inverse_norms_[static_cast<std::size_t>(i)]
                              : op_norm(inv);
  throw Error(ErrorKind::Inversion, "nonlinear step inversion did not converge",
              "n=" + std::to_string(n) + " y=" + point_text(y) + " ||A^-1|| ||Dg|| = " +
                  std::to_string(inv_norm * op_norm(g_.jacobian(n, x))));
}

Vector PerturbedCocycle::evaluate_backward(long m, long n, const Vector& y) const {
  if (m < n) throw Error(ErrorKind::Domain, "backward evaluation needs m >= n", std::to_string(m) + " < " + std::to_string(n));
  Vector x = y;
  for (long j = m - 1; j >= n; --j) {
    x = invert_step(j, x);
    if (!(x.cwiseAbs().maxCoeff() <= kDivergence)) {
      throw Error(ErrorKind::Divergence, "backward orbit left the divergence guard",
                  "m=" + std::to_string(m) + " j=" + std::to_string(j));
    }
  }
  return x;
}

GronwallReport gronwall_bound_check(const PerturbedCocycle& g, const GronwallConstants& k, const NormFamily* norms,
                                    const GronwallSamplePlan& plan) {
  const int d = g.dim();
  const long origin = std::max<long>(g.origin(), 1);
  auto nrm = [&](long n, const Vector& v) { return norms ? (*norms)(n, v) : v.norm(); };
  const double growth = k.a + k.c * k.C * k.K;
  const double k_tilde = k.K * k.K * k.K * k.L * k.C;
  const double a_tilde = 2.0 * k.a + 3.0 * k.c * k.C * k.K + 1.0;

  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto dirs = random_unit_vectors(d, 3 * plan.samples, plan.seed + 7);
  GronwallReport rep;
  const double log_w = std::log(static_cast<double>(plan.window));
  const double log_o = std::log(static_cast<double>(origin));
  for (std::size_t s = 0; s < plan.samples; ++s) {
    const long n = std::clamp(std::lround(std::exp(log_o + unit(rng) * (log_w - log_o))), origin, plan.window);
    const long m = std::clamp(
        std::lround(std::exp(std::log(static_cast<double>(n)) + unit(rng) * (log_w - std::log(static_cast<double>(n))))),
        n, plan.window);
    const Vector x = dirs[3 * s] * plan.radius * unit(rng);
    Vector y = dirs[3 * s + 1] * plan.radius * unit(rng);
    if (s % 4 == 0) y = x;  // diagonal samples: the Lipschitz side must vanish
    const Vector v = dirs[3 * s + 2];
    const Matrix jx = g.jacobian(m, n, x);
    const Matrix jy = (y - x).norm() == 0.0 ? jx : g.jacobian(m, n, y);
    const double q = static_cast<double>(m) / static_cast<double>(n);

    const double r1 = nrm(m, jx * v) / (k.K * std::pow(q, growth) * nrm(n, v));
    if (r1 > rep.max_ratio_derivative) {
      rep.max_ratio_derivative = r1;
      rep.worst_derivative = "m=" + std::to_string(m) + " n=" + std::to_string(n) + " x=" + point_text(x);
    }
    const double lhs = nrm(m, (jx - jy) * v);
    const double dist = nrm(n, x - y);
    const double bound = k_tilde * std::pow(q, a_tilde) * dist * nrm(n, v);
    double r2 = 0.0;
    if (bound > 0.0) r2 = lhs / bound;
    else if (lhs > 0.0) r2 = std::numeric_limits<double>::infinity();
    if (r2 > rep.max_ratio_lipschitz) {
      rep.max_ratio_lipschitz = r2;
      rep.worst_lipschitz = "m=" + std::to_string(m) + " n=" + std::to_string(n) + " x=" + point_text(x) +
                            " y=" + point_text(y);
    }
    if (r1 > 1.0 + 1e-9 || r2 > 1.0 + 1e-9) ++rep.violations;
    ++rep.samples;
  }
  return rep;
}

}  // namespace polylin
