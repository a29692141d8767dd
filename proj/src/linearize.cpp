#include "polylin/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "parallel.hpp"

namespace polylin {

namespace {

long pow2(long n) { return 1L << n; }

long floor_log2(long k) {
  long n = 0;
  while ((2L << n) <= k) ++n;
  return n;
}

// Grid of per_axis^d points in the cube [-r, r]^d, kept inside the ball.
std::vector<Vector> ball_grid(int d, double r, int per_axis) {
  std::vector<Vector> out;
  if (per_axis < 2) {
    out.push_back(Vector::Zero(d));
    return out;
  }
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x(i) = -r + 2.0 * r * idx[i] / (per_axis - 1);
    if (x.norm() <= r * (1.0 + 1e-12)) out.push_back(x);
    int i = 0;
    while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
    if (i == d) break;
  }
  return out;
}

std::vector<Vector> ball_sample(int d, double r, std::size_t count, std::uint64_t seed) {
  return random_ball_points(d, count, r, seed);
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

std::vector<long> regularity_indices(long max_index) {
  std::set<long> out;
  for (long k = 1; k <= std::min<long>(max_index, 8); ++k) out.insert(k);
  for (long p = 8; p <= max_index; p *= 2) {
    out.insert(p);
    if (p - 1 >= 1) out.insert(p - 1);
    if (p + p / 2 <= max_index) out.insert(p + p / 2);
  }
  out.insert(max_index);
  return {out.begin(), out.end()};
}

}  // namespace

double green_bound(double K, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::Precondition, "block rate must be positive", std::to_string(lambda));
  const double q = std::exp(-lambda);
  return K * (1.0 + q) / (1.0 - q);
}

BlockPerturbation::BlockPerturbation(std::shared_ptr<const PerturbedCocycle> g, long max_time)
    : g_(std::move(g)), blocks_(dyadic_blocks(g_->linear(), max_time)), last_block_(*blocks_.last_index()) {
  if (g_->origin() != 1) throw Error(ErrorKind::Precondition, "block perturbations need natural time", "");
  for (long n = 0; n <= last_block_; ++n) {
    b_.push_back(blocks_.step(n));
    b_inv_.push_back(blocks_.step_inverse(n));
  }
}

const Matrix& BlockPerturbation::B(long n) const { return b_.at(static_cast<std::size_t>(n)); }
const Matrix& BlockPerturbation::B_inverse(long n) const { return b_inv_.at(static_cast<std::size_t>(n)); }

Vector BlockPerturbation::map(long n, const Vector& x) const { return g_->evaluate(pow2(n + 1), pow2(n), x); }

std::pair<Vector, Vector> BlockPerturbation::map_and_forcing(long n, const Vector& x) const {
  Vector y = x;
  Vector acc = Vector::Zero(x.size());
  const auto& pert = g_->perturbation();
  for (long j = pow2(n); j < pow2(n + 1); ++j) {
    const Vector gj = pert(j, y);
    const Matrix& aj = g_->A(j);
    acc = aj * acc + gj;
    y = aj * y + gj;
  }
  if (!y.allFinite()) throw Error(ErrorKind::Divergence, "block orbit is not finite", "block " + std::to_string(n));
  return {y, acc};
}

Vector BlockPerturbation::invert(long n, const Vector& y) const {
  return g_->evaluate_backward(pow2(n + 1), pow2(n), y);
}

Vector BlockPerturbation::operator()(long n, const Vector& x) const { return map_and_forcing(n, x).second; }

Matrix BlockPerturbation::jacobian(long n, const Vector& x) const {
  // Df_n accumulated from the Dg terms, same reason as map_and_forcing.
  const int d = dim();
  Vector y = x;
  Matrix total = Matrix::Identity(d, d);
  Matrix acc = Matrix::Zero(d, d);
  const auto& pert = g_->perturbation();
  for (long j = pow2(n); j < pow2(n + 1); ++j) {
    const Matrix dg = pert.jacobian(j, y);
    const Matrix& aj = g_->A(j);
    acc = aj * acc + dg * total;
    total = aj * total + dg * total;
    y = aj * y + pert(j, y);
  }
  return acc;
}

BlockPerturbation build_block_perturbations(std::shared_ptr<const PerturbedCocycle> g, long max_time,
                                            const LinearizationConstants& k, const NormFamily* norms,
                                            const BlockOptions& opts) {
  BlockPerturbation f(std::move(g), max_time);
  const int d = f.dim();
  const double ckc = k.c * k.C * k.K;
  f.eta_formula = k.K * k.K * k.C * std::exp2(2.0 * k.a + ckc + 1.0) * k.c;
  f.lipschitz = k.K * k.K * k.K * k.L * k.C * std::exp2(2.0 * k.a + 3.0 * ckc + 1.0);
  f.budget = opts.contraction_budget / green_bound(k.K_block, k.lambda_block);

  auto nrm = [&](long n, const Vector& v) { return norms ? (*norms)(n, v) : v.norm(); };
  const auto pts = ball_sample(d, opts.radius, static_cast<std::size_t>(opts.samples_per_block), opts.seed);
  const auto dirs = random_unit_vectors(d, static_cast<std::size_t>(opts.samples_per_block), opts.seed + 3);
  for (long n = 0; n <= f.last_block(); ++n) {
    const Vector zero = Vector::Zero(d);
    const double z = std::max(f(n, zero).norm(), op_norm(f.jacobian(n, zero)));
    if (!(z <= 1e-12)) {
      throw Error(ErrorKind::Certification, "block perturbation does not vanish to first order at 0",
                  "block " + std::to_string(n) + " residual " + std::to_string(z));
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Matrix df = f.jacobian(n, pts[i]);
      const double r = nrm(pow2(n + 1), df * dirs[i]) / nrm(pow2(n), dirs[i]);
      f.eta_sampled = std::max(f.eta_sampled, r);
    }
  }
  if (f.eta_sampled > f.eta_formula * (1.0 + 1e-9) + 1e-15) {
    throw Error(ErrorKind::Certification, "sampled block derivative exceeds the smallness formula",
                "sampled " + std::to_string(f.eta_sampled) + " > eta " + std::to_string(f.eta_formula));
  }
  if (f.eta_formula > f.budget) {
    throw Error(ErrorKind::Smallness, "eta exceeds the contraction budget",
                "eta " + std::to_string(f.eta_formula) + " > budget " + std::to_string(f.budget));
  }
  if (f.eta_formula > 0.5 * f.budget) f.warnings.push_back("eta uses more than half of the contraction budget");
  return f;
}

ConjugacyAtlas::ConjugacyAtlas(BlockPerturbation f, ProjectionFamily p) : f_(std::move(f)), p_(std::move(p)) {
  if (p_.dim() != f_.dim()) throw Error(ErrorKind::Config, "projection dimension mismatch", "");
  for (long j = 0; j <= last_block(); ++j) proj_.push_back(p_(j));
  for (long j = 0; j < last_block(); ++j) {
    const double r = op_norm(f_.B(j) * proj_[j] - proj_[j + 1] * f_.B(j)) / std::max(1.0, op_norm(f_.B(j)));
    if (!(r <= 1e-8)) {
      throw Error(ErrorKind::Projection, "block projections are not equivariant",
                  "block " + std::to_string(j) + " residual " + std::to_string(r));
    }
  }
}

std::vector<Vector> ConjugacyAtlas::green(const std::vector<Vector>& forcing) const {
  const long top = last_block();  // forcing has entries 0..top-1
  const int d = f_.dim();
  const Matrix id = Matrix::Identity(d, d);
  std::vector<Vector> p(static_cast<std::size_t>(top + 1)), q(static_cast<std::size_t>(top + 1));
  p[0] = Vector::Zero(d);
  for (long j = 0; j < top; ++j) p[j + 1] = proj_[j + 1] * (f_.B(j) * p[j] + forcing[j]);
  q[top] = Vector::Zero(d);
  for (long j = top - 1; j >= 0; --j) q[j] = (id - proj_[j]) * (f_.B_inverse(j) * (q[j + 1] + forcing[j]));
  std::vector<Vector> s(static_cast<std::size_t>(top + 1));
  for (long j = 0; j <= top; ++j) s[j] = p[j] - q[j];
  return s;
}

Vector ConjugacyAtlas::h(long n, const Vector& x) const {
  const long top = last_block();
  if (n < 0 || n > top) throw Error(ErrorKind::Horizon, "block index outside the atlas", std::to_string(n));
  std::vector<Vector> xs(static_cast<std::size_t>(top + 1));
  std::vector<Vector> forcing(static_cast<std::size_t>(top));
  xs[n] = x;
  for (long j = n - 1; j >= 0; --j) xs[j] = f_.invert(j, xs[j + 1]);
  for (long j = 0; j < top; ++j) {
    auto [next, fj] = f_.map_and_forcing(j, xs[j]);
    forcing[j] = std::move(fj);
    if (j >= n) xs[j + 1] = std::move(next);
  }
  // Along the orbit w_{j+1} = B_j w_j - f_j, so w = -s.
  return x - green(forcing)[n];
}

Vector ConjugacyAtlas::h_inverse(long n, const Vector& y, int* iterations, double* contraction, double tol,
                                 int max_iter) const {
  const long top = last_block();
  if (n < 0 || n > top) throw Error(ErrorKind::Horizon, "block index outside the atlas", std::to_string(n));
  const int d = f_.dim();
  std::vector<Vector> ys(static_cast<std::size_t>(top + 1));
  ys[n] = y;
  for (long j = n; j < top; ++j) ys[j + 1] = f_.B(j) * ys[j];
  for (long j = n - 1; j >= 0; --j) ys[j] = f_.B_inverse(j) * ys[j + 1];

  std::vector<Vector> s(static_cast<std::size_t>(top + 1), Vector::Zero(d));
  std::vector<Vector> forcing(static_cast<std::size_t>(top));
  double prev = 0.0, worst = 0.0;
  int count = 0;
  const double scale = std::max(y.norm(), std::numeric_limits<double>::min());
  for (int it = 0; it < max_iter; ++it) {
    for (long j = 0; j < top; ++j) forcing[j] = f_.map_and_forcing(j, ys[j] + s[j]).second;
    auto next = green(forcing);
    double delta = 0.0;
    for (long j = 0; j <= top; ++j) delta = std::max(delta, (next[j] - s[j]).norm());
    s = std::move(next);
    if (delta == 0.0) break;
    ++count;
    // Ratios at the round-off floor carry no information.
    if (prev > 0.0 && prev > 1e3 * 2.2e-16 * scale) worst = std::max(worst, delta / prev);
    if (delta <= tol * scale) break;
    if (count >= 4 && delta >= prev && prev > 1e3 * 2.2e-16 * scale) {
      throw Error(ErrorKind::Divergence, "inverse conjugacy iteration does not contract",
                  "block " + std::to_string(n) + " step " + std::to_string(count) + " ratio " +
                      std::to_string(delta / prev));
    }
    prev = delta;
    if (it + 1 == max_iter) {
      throw Error(ErrorKind::Accuracy, "inverse conjugacy iteration hit the iteration cap",
                  "block " + std::to_string(n) + " last update " + std::to_string(delta));
    }
  }
  if (iterations) *iterations = count;
  if (contraction) *contraction = worst;
  return y + s[n];
}

Vector ConjugacyAtlas::psi(long k, const Vector& x) const {
  if (k < 1 || k > last_time()) throw Error(ErrorKind::Horizon, "time outside the atlas", std::to_string(k));
  const long n = floor_log2(k);
  const auto& g = f_.original();
  const Vector z = g.evaluate_backward(k, pow2(n), x);
  return g.linear()(k, pow2(n)) * h(n, z);
}

Vector ConjugacyAtlas::psi_inverse(long k, const Vector& y) const {
  if (k < 1 || k > last_time()) throw Error(ErrorKind::Horizon, "time outside the atlas", std::to_string(k));
  const long n = floor_log2(k);
  const auto& g = f_.original();
  const Vector w = h_inverse(n, g.linear()(pow2(n), k) * y);
  return g.evaluate(k, pow2(n), w);
}

ConjugacyAtlas solve_block_conjugacy(const BlockPerturbation& f, const ProjectionFamily& block_projections,
                                     const SolverOptions& opts, const NormFamily* norms) {
  ConjugacyAtlas atlas(f, block_projections);
  const int d = f.dim();
  const long top = atlas.last_block();
  auto nrm = [&](long n, const Vector& v) { return norms ? (*norms)(n, v) : v.norm(); };

  const Vector zero = Vector::Zero(d);
  for (long n = 0; n <= top; ++n) {
    const double h0 = atlas.h(n, zero).norm();
    if (!(h0 <= 1e-14)) {
      throw Error(ErrorKind::Accuracy, "conjugacy does not fix the origin",
                  "block " + std::to_string(n) + " |h(0)| " + std::to_string(h0));
    }
  }

  std::vector<Vector> pts = d <= 3 ? ball_grid(d, opts.radius, opts.grid_per_axis)
                                   : ball_sample(d, opts.radius, static_cast<std::size_t>(2 * opts.grid_per_axis * opts.grid_per_axis), 11);
  struct Slot {
    double residual = 0.0, inverse = 0.0, contraction = 0.0;
    int iterations = 0;
  };
  const std::size_t per_block = pts.size();
  std::vector<Slot> slots(per_block * static_cast<std::size_t>(top));
  detail::parallel_for(slots.size(), opts.threads, [&](std::size_t idx) {
    const long n = static_cast<long>(idx / per_block);
    const Vector& x = pts[idx % per_block];
    Slot& s = slots[idx];
    const Vector hx = atlas.h(n, x);
    const Vector lhs = atlas.h(n + 1, f.map(n, x));
    s.residual = nrm(pow2(n + 1), lhs - f.B(n) * hx);
    const Vector back = atlas.h_inverse(n, hx, &s.iterations, &s.contraction, 1e-3 * opts.tol / std::max(1.0, hx.norm()),
                                        opts.max_iter);
    s.inverse = nrm(pow2(n), back - x);
  });

  auto& diag = atlas.diagnostics();
  diag.grid_points = slots.size();
  std::size_t worst = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (s.residual > diag.residual) {
      diag.residual = s.residual;
      worst = i;
    }
    diag.inverse_residual = std::max(diag.inverse_residual, s.inverse);
    diag.contraction = std::max(diag.contraction, s.contraction);
    diag.iterations = std::max(diag.iterations, s.iterations);
  }
  if (diag.contraction >= 1.0) {
    throw Error(ErrorKind::Divergence, "conjugacy iteration does not contract",
                "factor " + std::to_string(diag.contraction));
  }
  if (diag.contraction > opts.max_contraction) {
    throw Error(ErrorKind::Smallness, "contraction factor above the budget",
                std::to_string(diag.contraction) + " > " + std::to_string(opts.max_contraction));
  }
  if (!(diag.residual <= opts.tol)) {
    const long n = static_cast<long>(worst / per_block);
    throw Error(ErrorKind::Accuracy, "conjugacy residual above tolerance",
                "block " + std::to_string(n) + " residual " + std::to_string(diag.residual) + " x=" +
                    describe(pts[worst % per_block]));
  }
  if (!(diag.inverse_residual <= 10.0 * opts.tol)) {
    throw Error(ErrorKind::Accuracy, "inverse conjugacy does not invert",
                "residual " + std::to_string(diag.inverse_residual));
  }
  return atlas;
}

Vector GridSamples::interpolate(const Vector& x) const {
  if (x.size() != dim) throw Error(ErrorKind::Config, "interpolation point has the wrong size", "");
  if (dim > 3) {
    // Collocation: affine fit on the nearest 2d+1 samples.
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t i = 0; i < nodes.size(); ++i) near.emplace_back((nodes[i] - x).norm(), i);
    const std::size_t k = std::min(nodes.size(), static_cast<std::size_t>(2 * dim + 1));
    std::partial_sort(near.begin(), near.begin() + static_cast<long>(k), near.end());
    Matrix design(static_cast<Eigen::Index>(k), dim + 1);
    Matrix rhs(static_cast<Eigen::Index>(k), dim);
    for (std::size_t r = 0; r < k; ++r) {
      design(static_cast<Eigen::Index>(r), 0) = 1.0;
      design.row(static_cast<Eigen::Index>(r)).tail(dim) = (nodes[near[r].second] - x).transpose();
      rhs.row(static_cast<Eigen::Index>(r)) = values[near[r].second].transpose();
    }
    const Matrix coef = design.colPivHouseholderQr().solve(rhs);
    return coef.row(0).transpose();
  }
  const double h = 2.0 * radius / (per_axis - 1);
  std::vector<int> base(static_cast<std::size_t>(dim));
  std::vector<double> t(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const double u = std::clamp((x(i) + radius) / h, 0.0, static_cast<double>(per_axis - 1));
    base[i] = std::min(static_cast<int>(std::floor(u)), per_axis - 2);
    t[i] = u - base[i];
  }
  Vector out = Vector::Zero(dim);
  for (int corner = 0; corner < (1 << dim); ++corner) {
    double w = 1.0;
    std::size_t flat = 0, stride = 1;
    for (int i = 0; i < dim; ++i) {
      const int bit = (corner >> i) & 1;
      w *= bit ? t[i] : 1.0 - t[i];
      flat += static_cast<std::size_t>(base[i] + bit) * stride;
      stride *= static_cast<std::size_t>(per_axis);
    }
    if (w != 0.0) out += w * values[flat];
  }
  return out;
}

GridSamples sample_block_grid(const ConjugacyAtlas& atlas, long n, double radius, int per_axis, unsigned threads) {
  GridSamples g;
  g.block = n;
  g.radius = radius;
  g.per_axis = per_axis;
  g.dim = atlas.blocks().dim();
  const int d = g.dim;
  if (d <= 3) {
    // Full cube so that multilinear cells are complete.
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      Vector x(d);
      for (int i = 0; i < d; ++i) x(i) = -radius + 2.0 * radius * idx[i] / (per_axis - 1);
      g.nodes.push_back(x);
      int i = 0;
      while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
      if (i == d) break;
    }
  } else {
    g.nodes = random_ball_points(d, static_cast<std::size_t>(per_axis) * per_axis * per_axis, radius, 5);
  }
  g.values.resize(g.nodes.size());
  detail::parallel_for(g.nodes.size(), threads, [&](std::size_t i) { g.values[i] = atlas.h(n, g.nodes[i]); });
  return g;
}

ConjugacyReport verify_conjugacy(const ConjugacyAtlas& atlas, const ConjugacyCheckOptions& opts) {
  const auto& g = atlas.blocks().original();
  const int d = g.dim();
  const long kmax = std::min(opts.max_index, atlas.last_time() - 1);
  const auto pts = ball_grid(d, opts.radius, opts.per_axis);
  ConjugacyReport rep;
  rep.points = pts.size();
  struct Slot {
    std::vector<double> step, orbit;
    double inverse = 0.0, gluing = 0.0;
  };
  std::vector<Slot> slots(pts.size());
  detail::parallel_for(pts.size(), opts.threads, [&](std::size_t i) {
    const Vector& x = pts[i];
    Slot& s = slots[i];
    const Vector psi1 = atlas.psi(1, x);
    Vector orbit = x;
    for (long n = 1; n <= kmax; ++n) {
      const Vector pn = atlas.psi(n, x);
      const Vector lhs = atlas.psi(n + 1, g.step(n, x));
      s.step.push_back((lhs - g.A(n) * pn).norm());
      const Vector on = atlas.psi(n, orbit);
      s.orbit.push_back((on - g.linear()(n, 1) * psi1).norm());
      s.inverse = std::max(s.inverse, (atlas.psi_inverse(n, pn) - x).norm());
      if ((n & (n - 1)) == 0) s.gluing = std::max(s.gluing, (pn - atlas.h(floor_log2(n), x)).norm());
      orbit = g.step(n, orbit);
    }
  });
  rep.step_by_index.assign(static_cast<std::size_t>(kmax), 0.0);
  rep.orbit_by_index.assign(static_cast<std::size_t>(kmax), 0.0);
  for (const auto& s : slots) {
    for (std::size_t j = 0; j < s.step.size(); ++j) {
      rep.step_by_index[j] = std::max(rep.step_by_index[j], s.step[j]);
      rep.orbit_by_index[j] = std::max(rep.orbit_by_index[j], s.orbit[j]);
    }
    rep.inverse_residual = std::max(rep.inverse_residual, s.inverse);
    rep.gluing_residual = std::max(rep.gluing_residual, s.gluing);
  }
  for (double v : rep.step_by_index) rep.step_residual = std::max(rep.step_residual, v);
  for (double v : rep.orbit_by_index) rep.orbit_residual = std::max(rep.orbit_residual, v);
  return rep;
}

bool RegularityReport::ok() const {
  return mode == RegularityMode::C1 ? derivative_bounded : diff_ok && holder_ok;
}

RegularityReport verify_regularity(const ConjugacyAtlas& atlas, RegularityMode mode, const SpectralGapReport& gap,
                                   const LinearizationConstants& k, const RegularityOptions& opts) {
  if (mode == RegularityMode::C1 && !(gap.sp1_ok && gap.sp2_ok)) {
    throw Error(ErrorKind::Precondition, "C1 regularity needs the gap and band conditions", gap.note);
  }
  if (mode == RegularityMode::HolderDiff && !(gap.sp1_ok && gap.sp3_ok)) {
    throw Error(ErrorKind::Precondition, "Hoelder regularity needs the band conditions", gap.note);
  }
  const int d = atlas.blocks().dim();
  const double ckc = k.c * k.C * k.K;
  RegularityReport rep;
  rep.mode = mode;
  rep.alpha1 = gap.alpha1_effective;
  rep.ball_radius = opts.block_radius / (k.C * k.K * std::exp2(k.a));
  const double alpha = rep.alpha1;

  auto fd = [&](auto&& map, const Vector& x) { return central_difference_jacobian(map, x, opts.fd_step); };

  // Block level: sampled sup of the derivative and the Hoelder quotient.
  const long top = atlas.last_block();
  const std::size_t per = static_cast<std::size_t>(opts.points_per_index);
  struct BlockSlot {
    double M = 0.0, L = 0.0;
  };
  std::vector<BlockSlot> bslots(static_cast<std::size_t>(top + 1) * per);
  const auto bpts = random_ball_points(d, 2 * bslots.size(), opts.block_radius, opts.seed);
  detail::parallel_for(bslots.size(), opts.threads, [&](std::size_t i) {
    const long n = static_cast<long>(i / per);
    const Vector& x = bpts[2 * i];
    const Vector& y = bpts[2 * i + 1];
    auto hn = [&](const Vector& z) { return atlas.h(n, z); };
    auto hi = [&](const Vector& z) { return atlas.h_inverse(n, z); };
    BlockSlot& s = bslots[i];
    s.M = std::max(op_norm(fd(hn, x)), op_norm(fd(hi, x)));
    const double dist = std::pow((x - y).norm(), alpha);
    if (dist > 0.0) s.L = std::max((hn(x) - hn(y)).norm(), (hi(x) - hi(y)).norm()) / dist;
  });
  for (const auto& s : bslots) {
    rep.M_block = std::max(rep.M_block, s.M);
    rep.L_block = std::max(rep.L_block, s.L);
  }
  rep.M_tilde = k.C * k.K * k.K * rep.M_block * std::exp2(2.0 * k.a + ckc);
  rep.L_prime = std::pow(k.C, alpha) * std::pow(k.K, 1.0 + alpha) * rep.L_block *
                std::exp2(k.a * (1.0 + alpha) + ckc * alpha);

  // Original time.
  const auto ks = regularity_indices(std::min(opts.max_index, atlas.last_time()));
  struct Slot {
    double M = 0.0, H = 0.0, slope = std::numeric_limits<double>::infinity();
  };
  std::vector<Slot> slots(ks.size() * per);
  const auto pts = random_ball_points(d, 2 * slots.size(), 1.0, opts.seed + 1);
  const auto dirs = random_unit_vectors(d, slots.size(), opts.seed + 2);
  detail::parallel_for(slots.size(), opts.threads, [&](std::size_t i) {
    const long kk = ks[i / per];
    const double shrink = std::pow(static_cast<double>(kk), 2.0 * k.epsilon);
    const double r = rep.ball_radius / shrink;
    const Vector x = pts[2 * i] * r;
    const Vector y = pts[2 * i + 1] * r;
    auto ps = [&](const Vector& z) { return atlas.psi(kk, z); };
    auto pi = [&](const Vector& z) { return atlas.psi_inverse(kk, z); };
    Slot& s = slots[i];
    s.M = std::max(op_norm(fd(ps, x)), op_norm(fd(pi, x))) / shrink;
    const double dist = std::pow((x - y).norm(), alpha);
    if (dist > 0.0) s.H = std::max((ps(x) - ps(y)).norm(), (pi(x) - pi(y)).norm()) / (dist * std::pow(shrink, alpha));
    for (int side = 0; side < 2; ++side) {
      std::vector<double> lx, ly;
      for (double rad : opts.radii) {
        const Vector z = dirs[i] * rad;
        const double e = ((side == 0 ? ps(z) : pi(z)) - z).norm();
        if (e > 0.0) {
          lx.push_back(std::log(rad));
          ly.push_back(std::log(e));
        }
      }
      if (lx.size() >= 2) s.slope = std::min(s.slope, log_log_slope(lx, ly));
    }
  });
  rep.diff_slope = std::numeric_limits<double>::infinity();
  for (const auto& s : slots) {
    rep.M_observed = std::max(rep.M_observed, s.M);
    rep.holder_observed = std::max(rep.holder_observed, s.H);
    rep.diff_slope = std::min(rep.diff_slope, s.slope);
  }
  rep.derivative_bounded = rep.M_observed <= rep.M_tilde * (1.0 + 1e-9);
  rep.diff_ok = rep.diff_slope >= 1.0 + opts.rho_min;
  rep.holder_ok = rep.holder_observed <= rep.L_prime * (1.0 + 1e-9);
  return rep;
}

}  // namespace polylin
