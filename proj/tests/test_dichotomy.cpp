#include <doctest.h>

#include "oracles.hpp"
#include "polylin/builtins.hpp"
#include "polylin/dichotomy.hpp"

#include <cmath>
#include <random>

using namespace polylin;

namespace {

const double kLn2 = std::log(2.0);

Matrix diag(std::initializer_list<double> v) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(i, i) = x, ++i;
  return m;
}

Matrix axis_basis(int d, std::initializer_list<int> axes) {
  Matrix b = Matrix::Zero(d, static_cast<Eigen::Index>(axes.size()));
  Eigen::Index c = 0;
  for (int a : axes) b(a, c++) = 1.0;
  return b;
}

// Angle-free containment test: every column of `inner` lies in span(outer).
double containment_residual(const Matrix& inner, const Matrix& outer) {
  if (inner.cols() == 0) return 0.0;
  if (outer.cols() == 0) return inner.norm();
  const Matrix proj = outer * outer.transpose();
  return (inner - proj * inner).norm();
}

VerifyOptions opts_with(long window) {
  VerifyOptions o;
  o.window = window;
  return o;
}

}  // namespace

TEST_CASE("example polynomial dichotomy reproduces the stated constants") {
  Cocycle a(builtins::example_4_3());
  auto p = build_equivariant_projections(a, 1, axis_basis(2, {0}));
  auto est = verify_polynomial_dichotomy(a, p, nullptr, opts_with(4096));
  CHECK(est.accepted());
  CHECK(est.K == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(est.lambda == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(est.a == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(est.epsilon == 0.0);
  CHECK(est.flavor == Flavor::Polynomial);
  CHECK(est.diagnostics.worst.ratio <= 1.0 + 1e-9);
}

TEST_CASE("accepted constants dominate every scanned pair") {
  Cocycle a(OperatorSequence::diagonal_power_law({-0.7, 1.6, 0.9}));
  auto p = build_equivariant_projections(a, 1, axis_basis(3, {0}));
  auto o = opts_with(2048);
  o.keep_pairs = true;
  auto est = verify_polynomial_dichotomy(a, p, nullptr, o);
  REQUIRE(est.accepted());
  CHECK(est.lambda == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(est.a == doctest::Approx(1.6).epsilon(1e-9));
  for (const auto& r : est.diagnostics.pairs) {
    CHECK(r.stable <= est.K * (1 + 1e-12));
    CHECK(r.unstable <= est.K * (1 + 1e-12));
    CHECK(r.growth_fwd <= est.K * (1 + 1e-12));
    CHECK(r.growth_bwd <= est.K * (1 + 1e-12));
  }
  // oracle: closed-form stable norm (m/n)^{-0.7} against the envelope
  for (long n : {1L, 7L, 100L})
    for (long m : {n, 2 * n, 10 * n}) {
      const double stable = std::pow(static_cast<double>(m) / n, -0.7);
      CHECK(stable <= est.K * std::pow(static_cast<double>(m) / n, -est.lambda) * std::pow(n, est.epsilon) * (1 + 1e-9));
    }
}

TEST_CASE("doubling map is rejected for every projection") {
  Cocycle a(OperatorSequence::constant("2id", TimeAxis::Natural, 2.0 * Matrix::Identity(2, 2)));
  for (int rank : {0, 2}) {
    ProjectionFamily p(a, 1, rank == 0 ? Matrix(Matrix::Zero(2, 2)) : Matrix(Matrix::Identity(2, 2)));
    auto est = verify_polynomial_dichotomy(a, p, nullptr, opts_with(256));
    CHECK_FALSE(est.accepted());
    CHECK(est.diagnostics.growth_fwd.ratio > 1e10);
  }
}

TEST_CASE("identity is rejected: no decay") {
  Cocycle a(OperatorSequence::constant("id", TimeAxis::Natural, Matrix::Identity(2, 2)));
  ProjectionFamily p(a, 1, Matrix::Identity(2, 2));
  auto est = verify_polynomial_dichotomy(a, p, nullptr, opts_with(512));
  CHECK_FALSE(est.accepted());
  CHECK(std::abs(est.lambda) < 1e-9);
}

TEST_CASE("exponential dichotomy of constant blocks") {
  Cocycle b(OperatorSequence::constant("b", TimeAxis::Block, diag({0.5, 2.0})));
  auto p = build_equivariant_projections(b, 0, axis_basis(2, {0}));
  auto est = verify_exponential_dichotomy(b, p, nullptr, opts_with(64));
  CHECK(est.accepted());
  CHECK(est.K == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(est.lambda == doctest::Approx(kLn2).epsilon(1e-9));
  CHECK(est.a == doctest::Approx(kLn2).epsilon(1e-9));

  Cocycle c(OperatorSequence::constant("c", TimeAxis::Block, diag({1.0, 2.0})));
  auto pc = build_equivariant_projections(c, 0, axis_basis(2, {0}));
  CHECK_FALSE(verify_exponential_dichotomy(c, pc, nullptr, opts_with(64)).accepted());

  Cocycle a(builtins::example_4_3());
  Cocycle blocks(dyadic_blocks(a, 4096));
  auto pb = build_equivariant_projections(blocks, 0, axis_basis(2, {0}));
  auto eb = verify_exponential_dichotomy(blocks, pb, nullptr, opts_with(12));
  CHECK(eb.accepted());
  CHECK(eb.lambda == doctest::Approx(kLn2).epsilon(1e-9));
}

TEST_CASE("non-equivariant projections are refused") {
  Cocycle a(OperatorSequence::diagonal_power_law({-1.0, 1.0}));
  Matrix oblique(2, 2);
  oblique << 0.5, 0.5, 0.5, 0.5;
  auto p = ProjectionFamily::from_rule(a, 1, [oblique](long) { return oblique; });
  try {
    (void)verify_polynomial_dichotomy(a, p, nullptr, opts_with(128));
    FAIL("expected projection error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Projection);
  }
}

TEST_CASE("stable subspace estimation") {
  Cocycle b(OperatorSequence::constant("b", TimeAxis::Block, diag({0.5, 2.0})));
  const auto euclid = NormFamily::euclidean();
  auto s = estimate_stable_subspace(b, euclid, 1.0, 0, 64);
  REQUIRE(s.basis.cols() == 1);
  CHECK(std::abs(s.basis(0, 0)) == doctest::Approx(1.0));
  CHECK(s.slopes.size() == 2);
  CHECK(estimate_stable_subspace(b, euclid, 2.0 * std::exp(0.2), 0, 64).basis.cols() == 2);
  CHECK(estimate_stable_subspace(b, euclid, 0.5 * std::exp(-0.2), 0, 64).basis.cols() == 0);
  try {
    (void)estimate_stable_subspace(b, euclid, 2.0 * std::exp(0.01), 0, 64);
    FAIL("expected indeterminate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Indeterminate);
  }
  CHECK_THROWS_AS(estimate_stable_subspace(b, euclid, 1.0, 0, 16), Error);

  // dyadic blocks of the example: a short window needs the relaxed minimum
  Cocycle a(builtins::example_4_3());
  Cocycle blocks(dyadic_blocks(a, 4096));
  SubspaceOptions relaxed;
  relaxed.min_horizon = 8;
  auto sb = estimate_stable_subspace(blocks, euclid, 1.0, 0, 11, relaxed);
  REQUIRE(sb.basis.cols() == 1);
  CHECK(std::abs(sb.basis(0, 0)) == doctest::Approx(1.0));
  CHECK(sb.slopes[0] == doctest::Approx(kLn2).epsilon(1e-9));
  CHECK(sb.slopes[1] == doctest::Approx(-kLn2).epsilon(1e-9));
}

TEST_CASE("S_r is monotone in r") {
  Matrix s(3, 3);
  s << 1, 0.3, 0, 0.1, 1, 0.2, 0, 0.4, 1;
  const Matrix d = diag({0.3, 1.5, 4.0});
  Cocycle b(OperatorSequence::constant("mixed", TimeAxis::Block, s * d * s.inverse()));
  const auto euclid = NormFamily::euclidean();
  const std::vector<double> rates{0.2, 0.8, 2.5, 6.0};
  Matrix prev(3, 0);
  for (double r : rates) {
    auto est = estimate_stable_subspace(b, euclid, r, 0, 80);
    CHECK(containment_residual(prev, est.basis) < 1e-6);
    CHECK(est.basis.cols() >= prev.cols());
    prev = est.basis;
  }
  CHECK(prev.cols() == 3);
}

TEST_CASE("image of P has bounded forward orbits; Q components grow") {
  Matrix s(2, 2);
  s << 1, 0.5, -0.3, 1;
  Cocycle b(OperatorSequence::constant("ns", TimeAxis::Block, s * diag({0.6, 1.8}) * s.inverse()));
  auto sub = estimate_stable_subspace(b, NormFamily::euclidean(), 1.0, 0, 64);
  auto p = build_estimated_projections(b, 0, sub.basis, 64);
  auto est = verify_exponential_dichotomy(b, p, nullptr, opts_with(64));
  INFO(est.diagnostics.reason << " K=" << est.K << " lambda=" << est.lambda << " a=" << est.a);
  REQUIRE(est.accepted());
  const Vector v = p(0) * Vector::Unit(2, 1);
  const Vector w = Vector::Unit(2, 0) + Vector::Unit(2, 1);
  double sup = 0;
  for (long m = 0; m <= 60; ++m) sup = std::max(sup, (b(m, 0) * v).norm());
  CHECK(sup <= est.K * v.norm() * (1 + 1e-9));
  // growth slope of a vector with a Q component
  const double g = std::log((b(60, 0) * w).norm() / (b(30, 0) * w).norm()) / 30.0;
  CHECK(g >= est.lambda - 0.05);
}

TEST_CASE("verdict only depends on the image of P0") {
  Cocycle a(OperatorSequence::diagonal_power_law({-1.2, 0.8}));
  auto p1 = build_equivariant_projections(a, 1, axis_basis(2, {0}));
  Matrix w(2, 1);
  w << 0.7, 1.0;
  auto p2 = build_equivariant_projections(a, 1, axis_basis(2, {0}), ComplementPolicy::Given, w);
  auto e1 = verify_polynomial_dichotomy(a, p1, nullptr, opts_with(1024));
  auto e2 = verify_polynomial_dichotomy(a, p2, nullptr, opts_with(1024));
  CHECK(e1.verdict == e2.verdict);
  CHECK(e1.accepted());
  CHECK(e2.K >= e1.K);

  Matrix wrong(2, 1);
  wrong << 0.0, 1.0;  // unstable axis as stable image
  auto p3 = build_equivariant_projections(a, 1, wrong);
  CHECK_FALSE(verify_polynomial_dichotomy(a, p3, nullptr, opts_with(1024)).accepted());
}

TEST_CASE("dyadic equivalence") {
  const auto euclid = NormFamily::euclidean();
  auto o = opts_with(4096);
  Cocycle a(builtins::example_4_3());
  auto r = check_dyadic_equivalence(a, euclid, o);
  CHECK(r.agree);
  CHECK(r.polynomial.accepted());
  CHECK(r.exponential.accepted());
  CHECK(r.polynomial.lambda == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.exponential.lambda == doctest::Approx(kLn2).epsilon(1e-9));
  CHECK(r.lambda_consistent);

  Cocycle id(OperatorSequence::constant("id", TimeAxis::Natural, Matrix::Identity(2, 2)));
  auto ri = check_dyadic_equivalence(id, euclid, o);
  CHECK(ri.agree);
  CHECK_FALSE(ri.polynomial.accepted());
  CHECK_FALSE(ri.exponential.accepted());

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int i = 0; i < 5; ++i) {
    const double c1 = u(rng), c2 = u(rng);
    Cocycle pl(OperatorSequence::diagonal_power_law({-c1, c2}));
    auto rp = check_dyadic_equivalence(pl, euclid, o);
    CHECK(rp.agree);
    CHECK(rp.polynomial.accepted());
    CHECK(rp.polynomial.lambda == doctest::Approx(std::min(c1, c2)).epsilon(1e-6));
    CHECK(rp.lambda_consistent);
  }
}

TEST_CASE("adapted norms sharpen the constants") {
  Cocycle a(builtins::example_4_3());
  auto p = build_equivariant_projections(a, 1, axis_basis(2, {0}));
  auto norms = adapted_polynomial_norms(a, p, {1, 1, 1, 0}, 1024);
  auto o = opts_with(256);
  o.keep_pairs = true;
  auto est = verify_polynomial_dichotomy(a, p, &norms, o);
  CHECK(est.accepted());
  CHECK(est.norm_mode == NormMode::Family);
  CHECK(est.epsilon == 0.0);
  CHECK(est.K <= 4.0 + 1e-9);
  CHECK(est.diagnostics.stable.ratio <= 2.0 + 1e-9);
  CHECK(est.diagnostics.unstable.ratio <= 2.0 + 1e-9);
  CHECK(est.diagnostics.growth_fwd.ratio <= 4.0 + 1e-9);
  CHECK(est.diagnostics.growth_bwd.ratio <= 4.0 + 1e-9);
}
