#include <doctest.h>

#include "oracles.hpp"
#include "polylin/builtins.hpp"
#include "polylin/spectrum.hpp"

#include <cmath>
#include <random>

using namespace polylin;

namespace {

Matrix diag(std::initializer_list<double> v) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(i, i) = x, ++i;
  return m;
}

Cocycle constant_blocks(const Matrix& m) { return Cocycle(OperatorSequence::constant("blocks", TimeAxis::Block, m)); }

SpectrumOptions exp_opts(double step = 1e-3, long window = 48) {
  SpectrumOptions o;
  o.grid_step = step;
  o.window = window;
  return o;
}

// Scalar oracle: c^n shifted by rate t has a dichotomy iff |ln c - ln t| is
// resolved by the margin.
bool scalar_rejects(double c, double log_t, double margin) { return std::abs(std::log(c) - log_t) < margin; }

}  // namespace

TEST_CASE("constant diagonal blocks: spectrum is the set of moduli") {
  const auto res = exponential_spectrum(constant_blocks(diag({0.5, 2.0})), nullptr, exp_opts());
  REQUIRE(res.intervals.size() == 2);
  const double step = res.resolution;
  CHECK(std::abs(std::log(res.intervals[0].lo) - std::log(0.5)) <= step);
  CHECK(std::abs(std::log(res.intervals[0].hi) - std::log(0.5)) <= step);
  CHECK(std::abs(std::log(res.intervals[1].lo) - std::log(2.0)) <= step);
  CHECK(std::abs(std::log(res.intervals[1].hi) - std::log(2.0)) <= step);
  // Every grid sample agrees with the per-component scalar oracle.
  const double margin = 0.75 * step;
  for (const auto& s : res.samples) {
    const double lt = std::log(s.point);
    const bool oracle = scalar_rejects(0.5, lt, margin) || scalar_rejects(2.0, lt, margin);
    CHECK((s.verdict == Verdict::Rejected) == oracle);
  }
}

TEST_CASE("identity blocks in one dimension: spectrum {1}") {
  const auto res = exponential_spectrum(constant_blocks(Matrix::Identity(1, 1)), nullptr, exp_opts());
  REQUIRE(res.intervals.size() == 1);
  CHECK(std::abs(std::log(res.intervals[0].lo)) <= res.resolution);
  CHECK(std::abs(std::log(res.intervals[0].hi)) <= res.resolution);
}

TEST_CASE("dyadic blocks of the example") {
  const Cocycle a(builtins::example_4_3());
  const Cocycle blocks(dyadic_blocks(a, 4096));
  auto o = exp_opts(1e-3, *blocks.last_index() + 1);
  const auto res = exponential_spectrum(blocks, nullptr, o);
  REQUIRE(res.intervals.size() == 2);
  CHECK(std::abs(std::log2(res.intervals[0].lo) + 1.0) < 2e-3);
  CHECK(std::abs(std::log2(res.intervals[1].hi) - 1.0) < 2e-3);
}

TEST_CASE("polynomial spectrum of the example") {
  const Cocycle a(builtins::example_4_3());
  SpectrumOptions o;
  o.grid_step = 1e-3;
  o.window = 4096;
  const auto res = polynomial_spectrum(a, nullptr, o);
  REQUIRE(res.intervals.size() == 2);
  const auto expected = builtins::example_4_3_spectrum();
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& iv = res.intervals[i];
    CHECK(iv.hi - iv.lo <= 2 * o.grid_step);
    CHECK(std::abs(0.5 * (iv.lo + iv.hi) - expected[i].first) <= o.grid_step);
  }
  CHECK(res.flavor == Flavor::Polynomial);
  CHECK(res.warnings.empty());
}

TEST_CASE("identity in natural time: polynomial spectrum {0}") {
  const Cocycle a(OperatorSequence::constant("id", TimeAxis::Natural, Matrix::Identity(1, 1)));
  SpectrumOptions o;
  o.grid_step = 1e-3;
  const auto res = polynomial_spectrum(a, nullptr, o);
  REQUIRE(res.intervals.size() == 1);
  CHECK(std::abs(res.intervals[0].lo) <= o.grid_step);
  CHECK(std::abs(res.intervals[0].hi) <= o.grid_step);
}

TEST_CASE("power-law system: spectrum at the exponents, direct definition per grid point") {
  const double c1 = 0.8, c2 = 1.3;
  const Cocycle a(OperatorSequence::diagonal_power_law({-c1, c2}));
  SpectrumOptions o;
  o.grid_step = 1e-2;
  const auto res = polynomial_spectrum(a, nullptr, o);
  REQUIRE(res.intervals.size() == 2);
  CHECK(std::abs(0.5 * (res.intervals[0].lo + res.intervals[0].hi) + c1) <= o.grid_step);
  CHECK(std::abs(0.5 * (res.intervals[1].lo + res.intervals[1].hi) - c2) <= o.grid_step);
  // Oracle: (m/n)^{e - tau} is a scalar dichotomy iff e != tau at the scan's
  // resolution.
  const double margin = o.margin_factor * o.grid_step;
  for (const auto& s : res.samples) {
    const double d1 = std::abs(-c1 - s.point), d2 = std::abs(c2 - s.point);
    if (std::abs(d1 - margin) < 1e-9 || std::abs(d2 - margin) < 1e-9) continue;
    CHECK((s.verdict == Verdict::Rejected) == (d1 < margin || d2 < margin));
  }
}

TEST_CASE("direct resolvent test on the example") {
  const Cocycle a(builtins::example_4_3());
  SpectrumOptions o;
  CHECK(direct_polynomial_resolvent_test(a, nullptr, 0.0, o) == Verdict::Accepted);
  CHECK(direct_polynomial_resolvent_test(a, nullptr, 1.0, o) == Verdict::Rejected);
  CHECK(direct_polynomial_resolvent_test(a, nullptr, -1.0, o) == Verdict::Rejected);
  CHECK(direct_polynomial_resolvent_test(a, nullptr, 0.5, o) == Verdict::Accepted);
}

TEST_CASE("direct and dyadic routes agree on a grid") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  SpectrumOptions o;
  o.grid_step = 1e-2;
  for (int trial = 0; trial < 3; ++trial) {
    const Cocycle a(OperatorSequence::diagonal_power_law({-mag(rng), mag(rng), mag(rng)}));
    VerifyOptions v = o.verify;
    v.window = o.window;
    const ResolventScanner direct(a, nullptr, Flavor::Polynomial, v, o.margin_factor * o.grid_step);
    const Cocycle blocks(dyadic_blocks(a, o.window));
    VerifyOptions vb = o.verify;
    vb.window = *blocks.last_index() + 1;
    const ResolventScanner dyadic(blocks, nullptr, Flavor::Exponential, vb,
                                  o.margin_factor * o.grid_step * std::log(2.0));
    int disagreements = 0;
    for (double tau = -3.0; tau <= 3.0; tau += o.grid_step) {
      if (direct.test(tau).verdict != dyadic.test(tau * std::log(2.0)).verdict) ++disagreements;
    }
    CHECK(disagreements == 0);
  }
}

TEST_CASE("stable dimension increases across resolvent gaps") {
  const auto res = exponential_spectrum(constant_blocks(diag({0.3, 1.0, 3.0})), nullptr, exp_opts(5e-3));
  REQUIRE(res.intervals.size() == 3);
  // One test rate per gap, including the two unbounded ends.
  std::vector<double> rates{0.5 * res.intervals[0].lo, std::sqrt(res.intervals[0].hi * res.intervals[1].lo),
                            std::sqrt(res.intervals[1].hi * res.intervals[2].lo), 2.0 * res.intervals[2].hi};
  int prev = -1;
  for (double r : rates) {
    const auto est = estimate_stable_subspace(constant_blocks(diag({0.3, 1.0, 3.0})), NormFamily::euclidean(), r, 0, 64);
    CHECK(static_cast<int>(est.basis.cols()) > prev);
    prev = static_cast<int>(est.basis.cols());
  }
}

TEST_CASE("endpoint refinement is deterministic across thread counts") {
  auto o = exp_opts(2e-3);
  o.threads = 1;
  const auto one = exponential_spectrum(constant_blocks(diag({0.4, 1.7})), nullptr, o);
  o.threads = 4;
  const auto four = exponential_spectrum(constant_blocks(diag({0.4, 1.7})), nullptr, o);
  REQUIRE(one.intervals.size() == four.intervals.size());
  for (std::size_t i = 0; i < one.intervals.size(); ++i) {
    CHECK(one.intervals[i].lo == four.intervals[i].lo);
    CHECK(one.intervals[i].hi == four.intervals[i].hi);
  }
}

TEST_CASE("polynomial spectrum refuses systems without polynomial growth bounds") {
  const Cocycle a(OperatorSequence::constant("double", TimeAxis::Natural, 2.0 * Matrix::Identity(2, 2)));
  SpectrumOptions o;
  o.window = 512;
  try {
    polynomial_spectrum(a, nullptr, o);
    FAIL("expected a precondition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
  }
}

TEST_CASE("gap and band conditions on the example spectrum") {
  SpectrumResult s;
  s.flavor = Flavor::Polynomial;
  s.intervals = {{-1.0, -1.0}, {1.0, 1.0}};
  const auto rep = check_gap_band(s);
  CHECK(rep.k == 1);
  CHECK(rep.sp1_ok);
  CHECK(rep.sp2_ok);
  CHECK(rep.sp3_ok);
  // oracle: gap = ln 2 - ln 0.5 = 2 ln 2, both denominators ln 2
  CHECK(rep.alpha1_bound == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rep.alpha1_effective == 1.0);
}

TEST_CASE("gap and band boundary cases") {
  SpectrumResult s;
  s.flavor = Flavor::Exponential;
  s.intervals = {{2.0, 2.0}};
  auto rep = check_gap_band(s);
  CHECK(rep.k == 0);
  CHECK_FALSE(rep.sp1_ok);
  CHECK_FALSE(rep.sp2_ok);
  CHECK_FALSE(rep.sp3_ok);

  s.intervals = {{0.5, 1.5}};
  try {
    check_gap_band(s);
    FAIL("expected no-hyperbolicity");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoHyperbolicity);
  }
}

TEST_CASE("sp2 implies sp3; alpha1 positive under sp1 with a gap") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 4.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> pts;
    const int r = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < 2 * r; ++i) pts.push_back(u(rng));
    std::sort(pts.begin(), pts.end());
    SpectrumResult s;
    for (int i = 0; i < r; ++i) s.intervals.push_back({pts[2 * i], pts[2 * i + 1]});
    SpectralGapReport rep;
    try {
      rep = check_gap_band(s);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoHyperbolicity);
      continue;
    }
    if (rep.sp2_ok) CHECK(rep.sp3_ok);
    if (rep.sp1_ok) {
      CHECK(rep.alpha1_bound > 0.0);
      CHECK(rep.alpha1_effective > 0.0);
      CHECK(rep.alpha1_effective <= 1.0);
    }
  }
}
