#include <doctest.h>

#include "polylin/error.hpp"
#include "polylin/expr.hpp"

#include <cmath>
#include <vector>

using polylin::Error;
using polylin::ErrorKind;
using polylin::Expression;

TEST_CASE("arithmetic precedence and associativity") {
  auto e = Expression::parse("1 + 2*3^2 - 8/4/2", {});
  CHECK(e.eval({}) == doctest::Approx(1 + 18 - 1));
  CHECK(Expression::parse("2^3^2", {}).eval({}) == doctest::Approx(512.0));
  CHECK(Expression::parse("-2^2", {}).eval({}) == doctest::Approx(-4.0));
  CHECK(Expression::parse("2^-1", {}).eval({}) == doctest::Approx(0.5));
  CHECK(Expression::parse("(1e-3)*2E2", {}).eval({}) == doctest::Approx(0.2));
}

TEST_CASE("variables and functions") {
  auto e = Expression::parse("n/(n+1)", {"n"});
  const double n = 3.0;
  CHECK(e.eval({&n, 1}) == doctest::Approx(0.75));
  auto f = Expression::parse("exp(log(n)*2)", {"n"});
  CHECK(f.eval({&n, 1}) == doctest::Approx(9.0));
  // U+2212 minus sign is accepted
  auto g = Expression::parse("n \xE2\x88\x92 1", {"n"});
  CHECK(g.eval({&n, 1}) == doctest::Approx(2.0));
  CHECK(e.depends_on("n"));
  CHECK_FALSE(Expression::parse("2", {"n"}).depends_on("n"));
}

TEST_CASE("gradient matches central differences") {
  auto e = Expression::parse("c/(t+1)*x1^2*exp(-x1^2) + x2*log(t)", {"t", "x1", "x2", "c"});
  std::vector<double> v{2.5, 0.3, -0.7, 1e-3};
  std::vector<double> g(4);
  const double val = e.eval_grad(v, g);
  CHECK(val == doctest::Approx(e.eval(v)));
  for (int i = 0; i < 4; ++i) {
    auto up = v, dn = v;
    const double h = 1e-6;
    up[i] += h;
    dn[i] -= h;
    const double fd = (e.eval(up) - e.eval(dn)) / (2 * h);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("negative base with integer exponent differentiates") {
  auto e = Expression::parse("x1^2", {"x1"});
  const double x = -1.5;
  double g = 0;
  e.eval_grad({&x, 1}, {&g, 1});
  CHECK(g == doctest::Approx(-3.0));
}

TEST_CASE("parse errors report the column") {
  try {
    Expression::parse("n + * 2", {"n"});
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::Config);
    CHECK(err.witness().find("column 5") != std::string::npos);
  }
  CHECK_THROWS_AS(Expression::parse("foo(n)", {"n"}), Error);
  CHECK_THROWS_AS(Expression::parse("(n", {"n"}), Error);
  CHECK_THROWS_AS(Expression::parse("n $ 2", {"n"}), Error);
}
