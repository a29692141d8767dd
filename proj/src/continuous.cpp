#include "polylin/continuous.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "parallel.hpp"

namespace polylin {

namespace {

double xi(double s) { return s * s * std::exp(-s * s); }
double dxi(double s) { return 2.0 * s * (1.0 - s * s) * std::exp(-s * s); }

long step_count(double t, double s, double step) {
  return std::max<long>(1, static_cast<long>(std::ceil(std::abs(t - s) / step - 1e-9)));
}

// Classical RK4 for y' = rhs(t, y) from t0 to t1 in `steps` equal steps.
template <typename State, typename Rhs>
State rk4(const Rhs& rhs, double t0, double t1, long steps, State y) {
  const double h = (t1 - t0) / static_cast<double>(steps);
  for (long i = 0; i < steps; ++i) {
    const double t = t0 + h * static_cast<double>(i);
    const State k1 = rhs(t, y);
    const State k2 = rhs(t + 0.5 * h, State(y + 0.5 * h * k1));
    const State k3 = rhs(t + 0.5 * h, State(y + 0.5 * h * k2));
    const State k4 = rhs(t + h, State(y + h * k3));
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

// RK4 asks for the field twice at every half step; keep the last value.
class FieldMemo {
 public:
  explicit FieldMemo(const CoefficientField& a) : a_(a) {}
  const Matrix& operator()(double r) {
    if (r != r_) {
      m_ = a_(r);
      r_ = r;
    }
    return m_;
  }

 private:
  const CoefficientField& a_;
  double r_ = std::numeric_limits<double>::quiet_NaN();
  Matrix m_;
};

std::vector<double> log_times(double last, int per_octave) {
  std::set<double> out{1.0, last};
  for (double t = 1.0; t <= last; t *= 2.0) {
    for (int i = 0; i < per_octave; ++i) {
      const double s = t * std::exp2(static_cast<double>(i) / per_octave);
      if (s <= last) out.insert(s);
    }
  }
  return {out.begin(), out.end()};
}

double log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

// ---------------------------------------------------------------------------

CoefficientField::CoefficientField(std::string name, int dim, Rule rule)
    : name_(std::move(name)), dim_(dim), rule_(std::move(rule)) {
  if (dim_ < 1) throw Error(ErrorKind::Config, "coefficient field dimension must be positive", name_);
}

CoefficientField CoefficientField::closed_form(std::string name, std::vector<std::vector<Expression>> entries) {
  const int d = static_cast<int>(entries.size());
  for (const auto& row : entries) {
    if (static_cast<int>(row.size()) != d) throw Error(ErrorKind::Config, "coefficient matrix must be square", name);
    for (const auto& e : row) {
      const auto& v = e.variables();
      if (v.size() != 1 || v[0] != "t") throw Error(ErrorKind::Config, "coefficient entries must use the variable t", e.source());
    }
  }
  auto shared = std::make_shared<const std::vector<std::vector<Expression>>>(std::move(entries));
  return CoefficientField(std::move(name), d, [shared, d](double t) {
    Matrix m(d, d);
    const double v[1] = {t};
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = (*shared)[i][j].eval(v);
    return m;
  });
}

CoefficientField CoefficientField::diagonal_power_law(std::vector<double> exponents, std::string name) {
  const int d = static_cast<int>(exponents.size());
  if (name.empty()) name = "power-law-field";
  Vector e = Eigen::Map<const Vector>(exponents.data(), d);
  return CoefficientField(std::move(name), d, [e](double t) { return Matrix((e / t).asDiagonal()); });
}

CoefficientField CoefficientField::zero(int dim) {
  return CoefficientField("zero-field", dim, [dim](double) { return Matrix::Zero(dim, dim); });
}

Matrix CoefficientField::operator()(double t) const {
  if (!(t >= 1.0 - 1e-12)) throw Error(ErrorKind::Domain, "coefficient field is defined for t >= 1", std::to_string(t));
  Matrix m = rule_(t);
  if (m.rows() != dim_ || m.cols() != dim_) throw Error(ErrorKind::Config, "coefficient rule returned the wrong size", name_);
  if (!m.allFinite()) throw Error(ErrorKind::Integration, "coefficient field is not finite", "t=" + std::to_string(t));
  return m;
}

// ---------------------------------------------------------------------------

EvolutionFamily::EvolutionFamily(CoefficientField field, IntegratorOptions opts)
    : field_(std::move(field)), opts_(opts), cache_(std::make_shared<Cache>()) {
  if (!(opts_.step > 0.0)) throw Error(ErrorKind::Config, "integrator step must be positive", std::to_string(opts_.step));
}

Matrix EvolutionFamily::integrate_fixed(double t, double s, long steps) const {
  const int d = dim();
  auto rhs = [this](double r, const Matrix& y) { return Matrix(field_(r) * y); };
  return rk4<Matrix>(rhs, s, t, steps, Matrix::Identity(d, d));
}

Matrix EvolutionFamily::segment(double t, double s) const {
  const int d = dim();
  if (t == s) return Matrix::Identity(d, d);
  long n = step_count(t, s, opts_.step);
  if (!opts_.richardson) return integrate_fixed(t, s, n);
  Matrix coarse = integrate_fixed(t, s, n);
  const double allowed = opts_.tol * std::max(std::abs(t - s), opts_.step);
  for (int halving = 0; halving <= opts_.max_halvings; ++halving) {
    n *= 2;
    const Matrix fine = integrate_fixed(t, s, n);
    const Matrix diff = (fine - coarse) / 15.0;
    const double est = op_norm(diff) / std::max(1.0, op_norm(fine));
    if (!std::isfinite(est)) break;
    if (est <= allowed) {
      std::lock_guard<std::mutex> lock(cache_->mutex);
      cache_->error = std::max(cache_->error, est);
      return fine + diff;
    }
    coarse = fine;
  }
  throw Error(ErrorKind::Integration, "integrator error estimate does not meet the tolerance",
              "t=" + std::to_string(t) + " s=" + std::to_string(s) + " steps " + std::to_string(n));
}

const Matrix& EvolutionFamily::unit(long k, bool forward) const {
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto& m = forward ? cache_->forward : cache_->backward;
    if (auto it = m.find(k); it != m.end()) return it->second;
  }
  const double a = static_cast<double>(k), b = static_cast<double>(k + 1);
  Matrix value = forward ? segment(b, a) : segment(a, b);
  std::lock_guard<std::mutex> lock(cache_->mutex);
  auto& m = forward ? cache_->forward : cache_->backward;
  return m.emplace(k, std::move(value)).first->second;
}

Matrix EvolutionFamily::operator()(double t, double s) const {
  field_(std::min(t, s));  // domain check
  if (t == s) return Matrix::Identity(dim(), dim());
  if (t > s) {
    const long lo = static_cast<long>(std::ceil(s)), hi = static_cast<long>(std::floor(t));
    if (lo >= hi) return segment(t, s);
    Matrix m = segment(static_cast<double>(lo), s);
    for (long k = lo; k < hi; ++k) m = unit(k, true) * m;
    return segment(t, static_cast<double>(hi)) * m;
  }
  const long hi = static_cast<long>(std::floor(s)), lo = static_cast<long>(std::ceil(t));
  if (lo >= hi) return segment(t, s);
  Matrix m = segment(static_cast<double>(hi), s);
  for (long k = hi - 1; k >= lo; --k) m = unit(k, false) * m;
  return segment(t, static_cast<double>(lo)) * m;
}

double EvolutionFamily::error_estimate() const {
  std::lock_guard<std::mutex> lock(cache_->mutex);
  return cache_->error;
}

OperatorSequence discretize(const EvolutionFamily& e, long last_index) {
  return OperatorSequence(
      "discretized " + e.field().name(), e.dim(), TimeAxis::Natural,
      [e](long n) { return e(static_cast<double>(n + 1), static_cast<double>(n)); }, last_index, ErrorKind::Horizon);
}

// ---------------------------------------------------------------------------

Forcing::Forcing(std::string name, int dim, Map map, Jacobian jacobian)
    : name_(std::move(name)), dim_(dim), map_(std::move(map)), jacobian_(std::move(jacobian)) {
  if (!jacobian_) {
    jacobian_ = [m = map_](double t, const Vector& x) {
      return central_difference_jacobian([&](const Vector& z) { return m(t, z); }, x, 1e-6);
    };
  }
}

Forcing Forcing::zero(int dim) {
  return Forcing("zero", dim, [dim](double, const Vector&) { return Vector::Zero(dim); },
                 [dim](double, const Vector&) { return Matrix::Zero(dim, dim); });
}

Forcing Forcing::bump(int dim, double eta) {
  return Forcing(
      "bump", dim,
      [eta](double t, const Vector& x) { return Vector(x.unaryExpr([](double s) { return xi(s); }) * (eta / (t + 1.0))); },
      [eta](double t, const Vector& x) {
        return Matrix(x.unaryExpr([](double s) { return dxi(s); }).asDiagonal() * (eta / (t + 1.0)));
      });
}

Forcing Forcing::closed_form(std::string name, std::vector<Expression> components) {
  const int d = static_cast<int>(components.size());
  if (d < 1 || d + 1 > Expression::kMaxVariables) throw Error(ErrorKind::Config, "unsupported forcing dimension", name);
  for (const auto& e : components) {
    const auto& vars = e.variables();
    bool ok = static_cast<int>(vars.size()) == d + 1 && vars[0] == "t";
    for (int i = 0; ok && i < d; ++i) ok = vars[i + 1] == "x" + std::to_string(i + 1);
    if (!ok) throw Error(ErrorKind::Config, "forcing expressions must use variables t, x1..xd", e.source());
  }
  auto shared = std::make_shared<const std::vector<Expression>>(std::move(components));
  auto map = [shared, d](double t, const Vector& x) {
    std::array<double, Expression::kMaxVariables> v{};
    v[0] = t;
    for (int i = 0; i < d; ++i) v[i + 1] = x(i);
    Vector out(d);
    for (int i = 0; i < d; ++i) out(i) = (*shared)[i].eval({v.data(), static_cast<std::size_t>(d + 1)});
    return out;
  };
  auto jac = [shared, d](double t, const Vector& x) {
    std::array<double, Expression::kMaxVariables> v{}, grad{};
    v[0] = t;
    for (int i = 0; i < d; ++i) v[i + 1] = x(i);
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) {
      (*shared)[i].eval_grad({v.data(), static_cast<std::size_t>(d + 1)}, {grad.data(), static_cast<std::size_t>(d + 1)});
      for (int j = 0; j < d; ++j) out(i, j) = grad[j + 1];
    }
    return out;
  };
  return Forcing(std::move(name), d, map, jac);
}

ForcingCertificate certify_forcing(const Forcing& f, double epsilon, double eta_claim, const ForcingSamplePlan& plan) {
  const int d = f.dim();
  ForcingCertificate cert;
  cert.epsilon = epsilon;
  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto dirs = random_unit_vectors(d, static_cast<std::size_t>(plan.points_per_radius) * 2 * plan.radii.size(),
                                        plan.seed + 1);
  std::string witness;
  for (double t : log_times(plan.last_time, 2)) {
    const Vector zero = Vector::Zero(d);
    const double z = std::max(f(t, zero).cwiseAbs().maxCoeff(), op_norm(f.jacobian(t, zero)));
    cert.zero_residual = std::max(cert.zero_residual, z);
    if (!(z <= 1e-12)) {
      throw Error(ErrorKind::Certification, "forcing does not vanish to first order at 0",
                  "t=" + std::to_string(t) + " residual " + std::to_string(z));
    }
    const double w_eta = std::pow(t, 1.0 + 4.0 * epsilon);
    const double w_L = std::pow(t, 1.0 + 5.0 * epsilon);
    std::size_t k = 0;
    for (double r : plan.radii) {
      for (int p = 0; p < plan.points_per_radius; ++p) {
        const Vector x = dirs[k++] * r * unit(rng);
        const Vector y = dirs[k++] * r * unit(rng);
        const Matrix jx = f.jacobian(t, x);
        const double e = op_norm(jx) * w_eta;
        if (e > cert.eta_observed) {
          cert.eta_observed = e;
          witness = "t=" + std::to_string(t) + " x=" + describe(x);
        }
        const double dist = (x - y).norm();
        if (dist > 0.0) cert.L_observed = std::max(cert.L_observed, op_norm(jx - f.jacobian(t, y)) / dist * w_L);
        ++cert.samples;
      }
    }
  }
  if (!std::isnan(eta_claim) && cert.eta_observed > eta_claim * (1.0 + 1e-9) + 1e-15) {
    throw Error(ErrorKind::Certification, "forcing derivative exceeds the claimed eta",
                witness + " observed " + std::to_string(cert.eta_observed) + " > " + std::to_string(eta_claim));
  }
  cert.eta = std::isnan(eta_claim) ? cert.eta_observed : eta_claim;
  cert.L = cert.L_observed;
  return cert;
}

// ---------------------------------------------------------------------------

SemilinearFlow::SemilinearFlow(EvolutionFamily e, Forcing f) : e_(std::move(e)), f_(std::move(f)) {
  if (f_.dim() != e_.dim()) throw Error(ErrorKind::Config, "forcing and coefficient dimensions differ", f_.name());
}

Vector SemilinearFlow::operator()(double t, double t0, const Vector& x) const {
  if (t == t0) return x;
  const auto& a = e_.field();
  FieldMemo field(a);
  auto rhs = [&](double r, const Vector& y) { return Vector(field(r) * y + f_(r, y)); };
  const long n = step_count(t, t0, e_.options().step);
  Vector fine = rk4<Vector>(rhs, t0, t, 2 * n, x);
  if (e_.options().richardson) fine += (fine - rk4<Vector>(rhs, t0, t, n, x)) / 15.0;
  if (!fine.allFinite()) throw Error(ErrorKind::Integration, "flow is not finite", "t=" + std::to_string(t) + " x=" + describe(x));
  return fine;
}

Matrix SemilinearFlow::jacobian(double t, double t0, const Vector& x) const {
  const int d = dim();
  if (t == t0) return Matrix::Identity(d, d);
  const auto& a = e_.field();
  FieldMemo field(a);
  // state: x, then D_x phi column-major
  auto rhs = [&](double r, const Vector& s) {
    const Vector y = s.head(d);
    const Matrix j = Eigen::Map<const Matrix>(s.data() + d, d, d);
    Vector out(d + d * d);
    const Matrix& ar = field(r);
    out.head(d) = ar * y + f_(r, y);
    Eigen::Map<Matrix>(out.data() + d, d, d) = (ar + f_.jacobian(r, y)) * j;
    return out;
  };
  Vector s0(d + d * d);
  s0.head(d) = x;
  Eigen::Map<Matrix>(s0.data() + d, d, d) = Matrix::Identity(d, d);
  const long n = step_count(t, t0, e_.options().step);
  Vector fine = rk4<Vector>(rhs, t0, t, 2 * n, s0);
  if (e_.options().richardson) fine += (fine - rk4<Vector>(rhs, t0, t, n, s0)) / 15.0;
  return Eigen::Map<const Matrix>(fine.data() + d, d, d);
}

Vector SemilinearFlow::deviation_steps(long n, const Vector& x, long steps) const {
  const int d = dim();
  const auto& a = e_.field();
  // z = T(t, n)x, u = phi(t, n; x) - z
  FieldMemo field(a);
  auto rhs = [&](double r, const Vector& s) {
    const Matrix& ar = field(r);
    Vector out(2 * d);
    out.head(d) = ar * s.head(d);
    out.tail(d) = ar * s.tail(d) + f_(r, Vector(s.head(d) + s.tail(d)));
    return out;
  };
  Vector s0 = Vector::Zero(2 * d);
  s0.head(d) = x;
  const double t0 = static_cast<double>(n);
  return rk4<Vector>(rhs, t0, t0 + 1.0, steps, s0).tail(d);
}

Vector SemilinearFlow::deviation(long n, const Vector& x) const {
  return deviation_steps(n, x, step_count(1.0, 0.0, e_.options().step));
}

double SemilinearFlow::deviation_error(long n, const Vector& x) const {
  const long steps = step_count(1.0, 0.0, e_.options().step);
  return (deviation_steps(n, x, 2 * steps) - deviation_steps(n, x, steps)).norm() / 15.0;
}

Matrix SemilinearFlow::deviation_jacobian(long n, const Vector& x) const {
  const int d = dim();
  const auto& a = e_.field();
  const Eigen::Index dd = d * d;
  // state: z, u, Z, U with Z = T(t, n), U = D_x phi - Z
  FieldMemo field(a);
  auto rhs = [&](double r, const Vector& s) {
    const Matrix& ar = field(r);
    const Vector y = s.head(d) + s.segment(d, d);
    const Matrix z = Eigen::Map<const Matrix>(s.data() + 2 * d, d, d);
    const Matrix u = Eigen::Map<const Matrix>(s.data() + 2 * d + dd, d, d);
    Vector out(2 * d + 2 * dd);
    out.head(d) = ar * s.head(d);
    out.segment(d, d) = ar * s.segment(d, d) + f_(r, y);
    Eigen::Map<Matrix>(out.data() + 2 * d, d, d) = ar * z;
    Eigen::Map<Matrix>(out.data() + 2 * d + dd, d, d) = ar * u + f_.jacobian(r, y) * (z + u);
    return out;
  };
  Vector s0 = Vector::Zero(2 * d + 2 * dd);
  s0.head(d) = x;
  Eigen::Map<Matrix>(s0.data() + 2 * d, d, d) = Matrix::Identity(d, d);
  const double t0 = static_cast<double>(n);
  const Vector s = rk4<Vector>(rhs, t0, t0 + 1.0, step_count(1.0, 0.0, e_.options().step), s0);
  return Eigen::Map<const Matrix>(s.data() + 2 * d + dd, d, d);
}

DiscretePerturbation build_discrete_perturbation(const SemilinearFlow& flow, const ContinuousConstants& k,
                                                 const ForcingSamplePlan& forcing_plan, const SamplePlan& plan) {
  DiscretePerturbation out{PerturbationFamily::zero(flow.dim()), 0.0, 0.0, {}, {}};
  out.forcing = certify_forcing(flow.forcing(), k.epsilon, k.eta, forcing_plan);
  out.M_hat = k.K * std::exp2(k.a) * std::exp(k.K * k.eta * std::exp2(k.a));
  out.c = k.K * out.M_hat * std::exp2(k.a + 1.0 + 2.0 * k.epsilon) * k.eta;
  PerturbationConstants pc;
  pc.c = out.c;
  pc.epsilon = k.epsilon;
  auto shared = std::make_shared<const SemilinearFlow>(flow);
  out.g = PerturbationFamily(
      "flow " + flow.forcing().name(), flow.dim(), [shared](long n, const Vector& x) { return shared->deviation(n, x); },
      [shared](long n, const Vector& x) { return shared->deviation_jacobian(n, x); }, pc);
  out.certificate = check_perturbation_bounds(out.g, plan);
  pc.L = out.certificate.L;
  out.g = out.g.with_constants(pc);
  return out;
}

// ---------------------------------------------------------------------------

LinearizationMaps::LinearizationMaps(std::shared_ptr<const ConjugacyAtlas> atlas, SemilinearFlow flow)
    : atlas_(std::move(atlas)), flow_(std::move(flow)) {
  if (atlas_->blocks().dim() != flow_.dim()) throw Error(ErrorKind::Config, "atlas and flow dimensions differ", "");
}

double LinearizationMaps::last_time() const { return static_cast<double>(atlas_->last_time()); }

void LinearizationMaps::check_time(double t) const {
  if (!(t >= 1.0) || std::floor(t) > last_time()) {
    throw Error(ErrorKind::Domain, "time outside the linearization window", "t=" + std::to_string(t));
  }
}

Vector LinearizationMaps::H(double t, const Vector& x) const {
  check_time(t);
  const double n = std::floor(t);
  const long k = static_cast<long>(n);
  if (t == n) return atlas_->psi(k, x);
  return flow_.evolution()(t, n) * atlas_->psi(k, flow_(n, t, x));
}

Vector LinearizationMaps::G(double t, const Vector& x) const {
  check_time(t);
  const double n = std::floor(t);
  const long k = static_cast<long>(n);
  if (t == n) return atlas_->psi_inverse(k, x);
  return flow_(t, n, atlas_->psi_inverse(k, flow_.evolution()(n, t) * x));
}

ContinuousLinearization linearize_continuous(const SemilinearFlow& flow, const ContinuousConstants& k,
                                             const Matrix& stable_basis, const ContinuousPlan& plan) {
  ContinuousLinearization out{build_discrete_perturbation(flow, k, plan.forcing, plan.perturbation), {}, nullptr, nullptr};
  auto& lc = out.constants;
  lc.K = k.K;
  lc.a = k.a;
  lc.C = plan.C;
  lc.c = out.perturbation.c;
  lc.L = out.perturbation.certificate.L;
  lc.epsilon = k.epsilon;
  lc.K_block = plan.K_block;
  lc.lambda_block = plan.lambda_block;
  auto g = std::make_shared<const PerturbedCocycle>(Cocycle(discretize(flow.evolution(), plan.max_time)),
                                                    out.perturbation.g, plan.max_time + 1);
  const auto f = build_block_perturbations(g, plan.max_time, lc, nullptr, plan.blocks);
  const auto p = build_equivariant_projections(f.blocks(), 0, stable_basis);
  out.atlas = std::make_shared<const ConjugacyAtlas>(solve_block_conjugacy(f, p, plan.solver));
  out.maps = std::make_shared<const LinearizationMaps>(out.atlas, flow);
  return out;
}

SolutionMappingReport verify_solution_mapping(const LinearizationMaps& maps, const SolutionCheckOptions& opts) {
  const int d = maps.flow().dim();
  const auto times = log_times(std::min(opts.last_time, maps.last_time()), opts.times_per_octave);
  const auto pts = random_ball_points(d, static_cast<std::size_t>(opts.samples), opts.radius, opts.seed);
  const auto& flow = maps.flow();
  const auto& e = flow.evolution();
  struct Slot {
    double h = 0.0, g = 0.0, round = 0.0;
  };
  std::vector<Slot> slots(pts.size());
  detail::parallel_for(pts.size(), opts.threads, [&](std::size_t i) {
    const Vector& x0 = pts[i];
    Slot& s = slots[i];
    const Vector h1 = maps.H(1.0, x0);
    const Vector g1 = maps.G(1.0, x0);
    Vector x = x0, z = g1;
    double prev = 1.0;
    for (double t : times) {
      if (t != prev) {
        x = flow(t, prev, x);
        z = flow(t, prev, z);
        prev = t;
      }
      const Matrix tt = e(t, 1.0);
      s.h = std::max(s.h, (maps.H(t, x) - tt * h1).norm());
      s.g = std::max(s.g, (maps.G(t, tt * x0) - z).norm());
      s.round = std::max(s.round, (maps.H(t, maps.G(t, x0)) - x0).norm());
      s.round = std::max(s.round, (maps.G(t, maps.H(t, x0)) - x0).norm());
    }
  });
  SolutionMappingReport rep;
  rep.samples = pts.size();
  rep.times = times.size();
  for (const auto& s : slots) {
    rep.H_deviation = std::max(rep.H_deviation, s.h);
    rep.G_deviation = std::max(rep.G_deviation, s.g);
    rep.roundtrip = std::max(rep.roundtrip, s.round);
  }
  return rep;
}

bool ContinuousRegularityReport::ok() const {
  return mode == RegularityMode::C1 ? derivative_bounded : diff_ok && holder_ok;
}

ContinuousRegularityReport verify_continuous_regularity(const LinearizationMaps& maps, RegularityMode mode,
                                                        const SpectralGapReport& gap, const LinearizationConstants& k,
                                                        const ContinuousConstants& ck,
                                                        const ContinuousRegularityOptions& opts) {
  ContinuousRegularityReport rep;
  rep.mode = mode;
  rep.discrete = verify_regularity(maps.atlas(), mode, gap, k, opts.discrete);
  const double alpha = rep.discrete.alpha1;
  const double eps = ck.epsilon;
  rep.M_hat = ck.K * std::exp2(ck.a) * std::exp(ck.K * ck.eta * std::exp2(ck.a));
  rep.zeta = rep.discrete.ball_radius / rep.M_hat;
  rep.R = std::exp2(ck.a) * ck.K * rep.discrete.M_tilde * rep.M_hat;
  rep.R_tilde = ck.K * std::exp2(ck.a) * rep.discrete.L_prime * std::pow(rep.M_hat, alpha);

  const int d = maps.flow().dim();
  const double last = std::min(opts.last_time, maps.last_time());
  std::vector<double> ts;
  for (int i = 0; i < opts.times; ++i) {
    // log-spaced, nudged off the integers
    ts.push_back(std::min(last, std::exp(std::log(last) * i / std::max(1, opts.times - 1)) + (i % 2 ? 0.37 : 0.0)));
  }
  const std::size_t per = static_cast<std::size_t>(opts.points_per_time);
  struct Slot {
    double M = 0.0, H = 0.0, slope = std::numeric_limits<double>::infinity();
  };
  std::vector<Slot> slots(ts.size() * per);
  const auto pts = random_ball_points(d, 2 * slots.size(), 1.0, opts.seed + 1);
  const auto dirs = random_unit_vectors(d, slots.size(), opts.seed + 2);
  detail::parallel_for(slots.size(), opts.threads, [&](std::size_t i) {
    const double t = ts[i / per];
    const double r = rep.zeta / std::pow(t, 3.0 * eps);
    const Vector x = pts[2 * i] * r, y = pts[2 * i + 1] * r;
    auto h = [&](const Vector& z) { return maps.H(t, z); };
    auto g = [&](const Vector& z) { return maps.G(t, z); };
    Slot& s = slots[i];
    s.M = std::max(op_norm(central_difference_jacobian(h, x, opts.fd_step)),
                   op_norm(central_difference_jacobian(g, x, opts.fd_step))) /
          std::pow(t, 4.0 * eps);
    const double dist = std::pow((x - y).norm(), alpha);
    if (dist > 0.0) {
      s.H = std::max((h(x) - h(y)).norm(), (g(x) - g(y)).norm()) / (dist * std::pow(t, eps * (1.0 + 3.0 * alpha)));
    }
    for (int side = 0; side < 2; ++side) {
      std::vector<double> lx, ly;
      for (double rad : opts.radii) {
        const Vector z = dirs[i] * rad;
        const double err = ((side == 0 ? h(z) : g(z)) - z).norm();
        if (err > 0.0) {
          lx.push_back(std::log(rad));
          ly.push_back(std::log(err));
        }
      }
      if (lx.size() >= 2) s.slope = std::min(s.slope, log_log_slope(lx, ly));
    }
  });
  rep.diff_slope = std::numeric_limits<double>::infinity();
  for (const auto& s : slots) {
    rep.derivative_observed = std::max(rep.derivative_observed, s.M);
    rep.holder_observed = std::max(rep.holder_observed, s.H);
    rep.diff_slope = std::min(rep.diff_slope, s.slope);
  }
  rep.derivative_bounded = rep.derivative_observed <= rep.R * (1.0 + 1e-9);
  rep.holder_ok = rep.holder_observed <= rep.R_tilde * (1.0 + 1e-9);
  rep.diff_ok = rep.diff_slope >= 1.0 + opts.rho_min;
  return rep;
}

// ---------------------------------------------------------------------------

DichotomyEstimate verify_continuous_polynomial_dichotomy(const EvolutionFamily& e, const Matrix& stable_basis,
                                                         const VerifyOptions& opts) {
  const int d = e.dim();
  if (stable_basis.rows() != d) throw Error(ErrorKind::Config, "stable basis has the wrong dimension", "");
  Matrix p0 = Matrix::Zero(d, d);
  if (stable_basis.cols() > 0) {
    p0 = stable_basis * (stable_basis.transpose() * stable_basis).inverse() * stable_basis.transpose();
  }
  const Matrix q0 = Matrix::Identity(d, d) - p0;
  const long last = opts.window;

  // T(k, 1) and T(1, k) at the integers, accumulated once.
  std::vector<Matrix> fwd(static_cast<std::size_t>(last + 2)), bwd(static_cast<std::size_t>(last + 2));
  fwd[1] = bwd[1] = Matrix::Identity(d, d);
  for (long k = 1; k <= last; ++k) {
    fwd[k + 1] = e(k + 1.0, static_cast<double>(k)) * fwd[k];
    bwd[k + 1] = bwd[k] * e(static_cast<double>(k), k + 1.0);
  }
  auto to_one = [&](double s) {  // T(1, s)
    const long k = static_cast<long>(std::floor(s));
    return Matrix(bwd[k] * e(static_cast<double>(k), s));
  };
  auto from_one = [&](double t) {  // T(t, 1)
    const long k = static_cast<long>(std::floor(t));
    return Matrix(e(t, static_cast<double>(k)) * fwd[k]);
  };

  PairTable table;
  table.flavor = Flavor::Polynomial;
  table.norm_mode = NormMode::Fixed;
  table.has_stable = stable_basis.cols() > 0;
  table.has_unstable = stable_basis.cols() < d;
  table.window = last;
  table.half_window_end = 1.0 + (last - 1) / 2.0;
  for (const auto& [m, n] : scan_pairs(Flavor::Polynomial, 1, last, opts)) {
    for (const auto& [dt, ds] : {std::pair{0.0, 0.0}, std::pair{0.5, 0.25}}) {
      const double t = std::min(static_cast<double>(m) + dt, static_cast<double>(last));
      const double s = static_cast<double>(n) + ds;
      if (s > t) continue;
      PairSample row;
      row.m = t;
      row.n = s;
      row.theta = std::log(t) - std::log(s);
      row.log_nu_n = std::log(s);
      row.log_nu_m = std::log(t);
      const Matrix t1 = from_one(t), s1 = from_one(s), one_s = to_one(s), one_t = to_one(t);
      row.stable = table.has_stable ? op_norm(t1 * p0 * one_s) : 0.0;
      row.unstable = table.has_unstable ? op_norm(s1 * q0 * one_t) : 0.0;
      row.growth_fwd = op_norm(t1 * one_s);
      row.growth_bwd = op_norm(s1 * one_t);
      table.rows.push_back(row);
    }
  }
  auto est = fit_dichotomy(table, 0.0, opts);
  est.flavor = Flavor::Polynomial;
  return est;
}

SpectrumResult continuous_spectrum(const EvolutionFamily& e, const NormFamily* norms, const SpectrumOptions& opts) {
  return polynomial_spectrum(Cocycle(discretize(e, opts.window)), norms, opts);
}

}  // namespace polylin
