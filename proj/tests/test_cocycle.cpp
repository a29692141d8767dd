#include <doctest.h>

#include "oracles.hpp"
#include "polylin/builtins.hpp"
#include "polylin/cocycle.hpp"
#include "polylin/dichotomy.hpp"
#include "polylin/norms.hpp"
#include "polylin/projections.hpp"

#include <cmath>
#include <random>
#include <thread>

using namespace polylin;

namespace {

Cocycle example() { return Cocycle(builtins::example_4_3()); }

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// A non-normal, non-diagonal power-law system: S diag(...) S^{-1}.
Cocycle sheared_power_law() {
  Matrix s(2, 2);
  s << 1.0, 0.6, 0.2, 1.0;
  const Matrix si = s.inverse();
  return Cocycle(OperatorSequence("sheared", 2, TimeAxis::Natural, [s, si](long n) {
    const double r = static_cast<double>(n + 1) / n;
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = std::pow(r, -0.8);
    d(1, 1) = std::pow(r, 1.3);
    return Matrix(s * d * si);
  }));
}

}  // namespace

TEST_CASE("example transition matrices") {
  auto a = example();
  CHECK(oracle::max_abs(a(4, 2), diag2(0.5, 2.0)) < 1e-15);
  CHECK(a(7, 7) == Matrix::Identity(2, 2));
  const Matrix inv = oracle::direct_product(oracle::example_4_3_step, 2, 4, 2);
  CHECK(oracle::max_abs(a(2, 4), inv) < 1e-14);
  CHECK(oracle::max_abs(a(2, 4), diag2(2.0, 0.5)) < 1e-14);
}

TEST_CASE("closed-form entries agree with the hand-written generator") {
  std::vector<std::vector<Expression>> e(2);
  e[0] = {Expression::parse("n/(n+1)", {"n"}), Expression::constant(0)};
  e[1] = {Expression::constant(0), Expression::parse("(n+1)/n", {"n"})};
  Cocycle c(OperatorSequence::closed_form("expr", TimeAxis::Natural, e));
  for (long m : {1L, 5L, 64L, 1000L})
    for (long n : {1L, 3L, 17L, 999L}) CHECK(oracle::max_abs(c(m, n), oracle::example_4_3_transition(m, n)) < 1e-12 * std::max<double>(m, n));
}

TEST_CASE("long products match the closed form") {
  auto a = example();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<long> idx(1, 4096);
  for (int i = 0; i < 200; ++i) {
    const long m = idx(rng), n = idx(rng);
    CHECK(relative_difference(a(m, n), oracle::example_4_3_transition(m, n)) < 1e-12);
  }
}

TEST_CASE("cocycle and inverse properties on a non-diagonal system") {
  auto a = sheared_power_law();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<long> idx(1, 2000);
  for (int i = 0; i < 300; ++i) {
    const long m = idx(rng), k = idx(rng), n = idx(rng);
    const Matrix amn = a(m, n);
    CHECK(op_norm(a(m, k) * a(k, n) - amn) <= 1e-10 * op_norm(amn));
    CHECK(op_norm(a(n, m) * amn - Matrix::Identity(2, 2)) <= 1e-10 * condition_number(amn));
  }
  // cached result against the direct step product
  auto step = [&](long n) { return a.sequence()(n); };
  CHECK(relative_difference(a(300, 5), oracle::direct_product(step, 300, 5, 2)) < 1e-12);
  CHECK(relative_difference(a(5, 300), oracle::direct_product(step, 5, 300, 2)) < 1e-12);
}

TEST_CASE("evaluation is bit-reproducible and concurrent readers agree") {
  auto a = sheared_power_law();
  const Matrix first = a(1000, 3);
  CHECK((a(1000, 3).array() == first.array()).all());
  Cocycle fresh = sheared_power_law();
  std::vector<Matrix> results(4);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t)
    workers.emplace_back([&, t] { results[t] = fresh(1000, 3); });
  for (auto& w : workers) w.join();
  for (const auto& r : results) CHECK((r.array() == first.array()).all());
}

TEST_CASE("warm queries reuse aligned blocks") {
  auto a = example();
  (void)a(4097, 1);
  const auto size = a.cache_size();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<long> idx(1, 4097);
  for (int i = 0; i < 100; ++i) {
    const long m = idx(rng), n = idx(rng);
    (void)a(std::max(m, n), std::min(m, n));
  }
  CHECK(a.cache_size() == size);
}

TEST_CASE("domain and conditioning errors") {
  auto a = example();
  CHECK_THROWS_AS(a(3, 0), Error);
  try {
    (void)a(0, 3);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
  Cocycle table(OperatorSequence::table("t", TimeAxis::Natural, {Matrix::Identity(1, 1), 2 * Matrix::Identity(1, 1)}));
  CHECK(table(3, 1)(0, 0) == 2.0);
  try {
    (void)table(4, 1);
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
  Cocycle singular(OperatorSequence::constant("s", TimeAxis::Natural, diag2(1.0, 0.0)));
  try {
    (void)singular(2, 1);
    FAIL("expected conditioning error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Conditioning);
  }
  Cocycle ill(OperatorSequence::constant("ill", TimeAxis::Natural, diag2(1.0, 1e-13)));
  CHECK_THROWS_AS(ill(2, 1), Error);
}

TEST_CASE("dyadic blocks") {
  auto a = example();
  Cocycle blocks(dyadic_blocks(a, 4096));
  CHECK(*blocks.last_index() == 11);
  for (long n = 0; n <= 10; ++n) {
    const Matrix direct = oracle::direct_product(oracle::example_4_3_step, 2L << n, 1L << n, 2);
    CHECK(oracle::max_abs(blocks.step(n), direct) < 1e-12);
    CHECK(oracle::max_abs(blocks.step(n), diag2(0.5, 2.0)) < 1e-12);
  }
  try {
    (void)blocks.step(12);
    FAIL("expected horizon error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Horizon);
  }
  Cocycle id(OperatorSequence::constant("id", TimeAxis::Natural, Matrix::Identity(3, 3)));
  CHECK(Cocycle(dyadic_blocks(id, 256)).step(5) == Matrix::Identity(3, 3));

  const double tau = 0.7;
  Cocycle scalar(OperatorSequence::diagonal_power_law({tau}));
  Cocycle sb(dyadic_blocks(scalar, 1024));
  for (long n = 0; n <= 8; ++n) {
    auto step = [&](long k) { return scalar.sequence()(k); };
    const double direct = oracle::direct_product(step, 2L << n, 1L << n, 1)(0, 0);
    CHECK(sb.step(n)(0, 0) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(sb.step(n)(0, 0) == doctest::Approx(std::exp2(tau)).epsilon(1e-12));
  }
}

TEST_CASE("scalar shifts") {
  auto a = example();
  auto s = a.polynomial_shift(1.0);
  // second component of the shifted cocycle is constant 1
  CHECK(s(100, 3)(1, 1) == doctest::Approx(1.0));
  CHECK(s(100, 3)(0, 0) == doctest::Approx(std::pow(3.0 / 100.0, 2)));
  Cocycle b(dyadic_blocks(a, 1024));
  auto e = b.exponential_shift(0.5);
  CHECK(e(5, 2)(0, 0) == doctest::Approx(1.0));
  CHECK(e(5, 2)(1, 1) == doctest::Approx(64.0));
  CHECK(e.step_inverse(3)(1, 1) == doctest::Approx(0.25));
  CHECK(e.unshifted()(5, 2)(1, 1) == doctest::Approx(8.0));
}

TEST_CASE("equivariant projections") {
  auto a = example();
  Matrix e1 = Matrix::Zero(2, 1);
  e1(0, 0) = 1.0;
  auto p = build_equivariant_projections(a, 1, e1);
  CHECK(oracle::max_abs(p.anchor_projection(), diag2(1, 0)) < 1e-15);
  for (long n : {1L, 2L, 17L, 4000L}) CHECK(oracle::max_abs(p(n), diag2(1, 0)) < 1e-12);
  auto zero = build_equivariant_projections(a, 1, Matrix(2, 0));
  CHECK(zero.rank() == 0);
  CHECK(zero(50).norm() == 0.0);

  auto sh = sheared_power_law();
  Matrix v(2, 1);
  v << 0.3, 0.8;
  auto q = build_equivariant_projections(sh, 1, v);
  for (long n = 1; n < 300; n += 7) {
    CHECK(q.equivariance_residual(n) <= 1e-10);
    CHECK(q.idempotency_residual(n) <= 1e-10 * std::max(1.0, op_norm(q(n))));
    CHECK(std::lround(q(n).trace()) == 1);
  }

  Matrix w(2, 1);
  w << 1.0, 1.0;
  auto given = build_equivariant_projections(a, 1, e1, ComplementPolicy::Given, w);
  CHECK((given.anchor_projection() * w).norm() < 1e-14);
  CHECK((given.anchor_projection() * e1 - e1).norm() < 1e-14);

  Matrix dep(2, 2);
  dep << 1, 2, 2, 4;
  try {
    (void)build_equivariant_projections(a, 1, dep);
    FAIL("expected rank error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Rank);
  }
}

TEST_CASE("adapted polynomial norms on the example") {
  auto a = example();
  Matrix e1 = Matrix::Zero(2, 1);
  e1(0, 0) = 1.0;
  auto p = build_equivariant_projections(a, 1, e1);
  auto norms = adapted_polynomial_norms(a, p, {1, 1, 1, 0}, 512);
  Vector x = Vector::Unit(2, 0);
  for (long n : {2L, 3L, 100L, 600L}) {
    INFO("n=" << n << " deviation=" << (norms(n, x) - 2.0));
    CHECK(norms(n, x) == doctest::Approx(2.0).epsilon(1e-10));
  }
  CHECK(norms(1, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norms(9, Vector::Zero(2)) == 0.0);
  // closed form: 2|x1| + 2|x2| for n >= 2
  Vector y(2);
  y << -0.3, 0.4;
  CHECK(norms(40, y) == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(norms(1, y) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(norms.sandwich_C() == 4.0);
  CHECK(norms.sandwich_delta() == 0.0);

  // norm axioms on random vectors
  auto xs = random_unit_vectors(2, 50, 9);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const long n = 3 + static_cast<long>(i);
    const double nx = norms(n, xs[i]);
    CHECK(nx > 0.0);
    CHECK(norms(n, -2.5 * xs[i]) == doctest::Approx(2.5 * nx));
    CHECK(norms(n, xs[i] + xs[i + 1]) <= nx + norms(n, xs[i + 1]) + 1e-12);
    CHECK(nx >= 1.0 - 1e-12);
    CHECK(nx <= norms.sandwich_bound(n) + 1e-12);
  }
}

TEST_CASE("adapted norms detect a horizon that cannot certify the sup") {
  auto a = example();
  Matrix e1 = Matrix::Zero(2, 1);
  e1(0, 0) = 1.0;
  auto p = build_equivariant_projections(a, 1, e1);
  // lambda larger than the true rate: the weighted stable orbit keeps growing
  auto norms = adapted_polynomial_norms(a, p, {1, 1.5, 1.5, 0}, 256);
  try {
    (void)norms(300, Vector::Unit(2, 0));
    FAIL("expected horizon error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Horizon);
  }
}

TEST_CASE("adapted exponential norms") {
  Cocycle b(OperatorSequence::constant("b", TimeAxis::Block, diag2(0.5, 2.0)));
  Matrix e1 = Matrix::Zero(2, 1);
  e1(0, 0) = 1.0;
  auto p = build_equivariant_projections(b, 0, e1);
  const double l2 = std::log(2.0);
  auto norms = adapted_exponential_norms(b, p, {1, l2, l2, 0}, 64);
  const double ref = norms(1, Vector::Unit(2, 0));
  for (long n : {2L, 5L, 30L, 100L}) CHECK(norms(n, Vector::Unit(2, 0)) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(ref == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(norms(0, Vector::Unit(2, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norms(4, Vector::Zero(2)) == 0.0);

  Cocycle e(OperatorSequence::constant("e", TimeAxis::Block, std::exp(1.0) * Matrix::Identity(2, 2)));
  ProjectionFamily full(e, 0, Matrix::Identity(2, 2));
  try {
    (void)adapted_exponential_norms(e, full, {1, 1, 1, 0}, 64);
    FAIL("expected precondition error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::Precondition);
  }
}

TEST_CASE("dyadic subsampled norms read the base family at 2^n") {
  auto a = example();
  Matrix e1 = Matrix::Zero(2, 1);
  e1(0, 0) = 1.0;
  auto p = build_equivariant_projections(a, 1, e1);
  auto norms = adapted_polynomial_norms(a, p, {1, 1, 1, 0}, 256);
  auto sub = NormFamily::dyadic(norms);
  Vector y(2);
  y << 0.2, -0.9;
  CHECK(sub(0, y) == norms(1, y));
  CHECK(sub(5, y) == norms(32, y));
  CHECK(NormFamily::dyadic(NormFamily::euclidean()).is_euclidean());
}
