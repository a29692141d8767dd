#include <doctest.h>

#include "oracles.hpp"
#include "polylin/builtins.hpp"
#include "polylin/io.hpp"

#include <cmath>
#include <cstdlib>
#include <random>

using namespace polylin;

namespace {

const std::string kData = POLYLIN_TEST_DATA;

std::string data(const std::string& name) { return io::read_file(kData + "/" + name); }

ErrorKind kind_of(const std::function<void()>& f, std::string* witness = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (witness) *witness = e.witness();
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Domain;
}

}  // namespace

TEST_CASE("closed-form system document reproduces the example") {
  const auto doc = io::parse_system(data("example_closed_form.json"), 4096);
  CHECK(doc.name == "example_closed_form");
  CHECK(doc.dim == 2);
  CHECK(doc.origin == 1);
  CHECK(doc.sequence.axis() == TimeAxis::Natural);
  for (long n = 1; n <= 200; n += 7) CHECK(oracle::max_abs(doc.sequence(n), oracle::example_4_3_step(n)) < 1e-15);
}

TEST_CASE("table and builtin system documents") {
  const auto t = io::parse_system(R"({"name":"t","d":1,"origin":0,"kind":"table","values":[[[2]],[[3]],[[0.5]]]})", 10);
  CHECK(t.sequence.axis() == TimeAxis::Block);
  CHECK(t.sequence(0)(0, 0) == 2.0);
  CHECK(t.sequence(2)(0, 0) == 0.5);
  CHECK_THROWS_AS(t.sequence(3), Error);

  const auto b = io::parse_system(R"({"kind":"builtin","builtin":"example_4_3"})", 10);
  CHECK(b.name == "example_4_3");
  CHECK(oracle::max_abs(b.sequence(5), oracle::example_4_3_step(5)) == 0.0);

  const auto c = io::parse_system(R"({"kind":"builtin","builtin":"continuous_5_3_discretized"})", 64);
  CHECK(oracle::max_abs(c.sequence(5), oracle::example_4_3_step(5)) < 1e-10);
  CHECK(kind_of([&] { (void)c.sequence(65); }) == ErrorKind::Horizon);
}

TEST_CASE("malformed JSON reports line and column") {
  std::string witness;
  CHECK(kind_of([&] { io::parse_system(data("malformed.json"), 64); }, &witness) == ErrorKind::Config);
  // the second comma on line 3
  CHECK(witness == "line=3 column=10");
  CHECK(kind_of([&] { io::parse_json("[1, 2", "x"); }, &witness) == ErrorKind::Config);
  CHECK(witness == "line=1 column=6");
}

TEST_CASE("unknown fields and bad values are config errors") {
  std::string witness;
  CHECK(kind_of([&] { io::parse_system(data("unknown_field.json"), 64); }, &witness) == ErrorKind::Config);
  CHECK(witness == "system.colour");
  CHECK(kind_of([] { io::parse_system(R"({"name":"x","d":0,"kind":"closed_form","expr":[]})", 64); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { io::parse_system(R"({"name":"x","d":1,"kind":"closed_form","expr":[["n+"]]})", 64); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { io::parse_system(R"({"name":"x","d":1,"kind":"closed_form","expr":[["m"]]})", 64); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { io::parse_system(R"({"name":"x","d":1,"kind":"table","values":[[["a"]]]})", 64); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { io::parse_system(R"({"name":"x","d":1,"kind":"spline"})", 64); }) == ErrorKind::Config);
  CHECK(kind_of([] { io::parse_system(R"({"name":"x","d":1,"origin":5,"kind":"table","values":[[[1]]]})", 64); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { io::parse_system(R"({"kind":"builtin","builtin":"nope"})", 64); }) == ErrorKind::Config);
}

TEST_CASE("continuous document matches the builtin field and forcing") {
  const auto doc = io::parse_continuous_system(data("continuous_example.json"));
  CHECK(doc.dim == 2);
  CHECK(doc.eta == 0.001);
  const auto field = builtins::continuous_5_3();
  const auto forcing = builtins::continuous_5_3_forcing(1e-3);
  for (double t : {1.0, 1.5, 7.25, 100.0}) {
    CHECK(oracle::max_abs(doc.field(t), field(t)) < 1e-15);
    for (const auto& x : random_ball_points(2, 5, 2.0, 3)) {
      CHECK((doc.forcing(t, x) - forcing(t, x)).norm() < 1e-17);
      CHECK(oracle::max_abs(doc.forcing.jacobian(t, x), forcing.jacobian(t, x)) < 1e-16);
    }
  }
  const auto unforced = io::parse_continuous_system(R"({"name":"u","d":1,"A_expr":[["0"]]})");
  CHECK(unforced.forcing(2.0, Vector::Ones(1)).norm() == 0.0);
  CHECK(kind_of([] { io::parse_continuous_system(R"({"name":"u","d":1,"A_expr":[["n"]]})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { io::parse_continuous_system(R"({"name":"u","d":1,"A_expr":[["t"]],"eta":-1})"); }) ==
        ErrorKind::Config);
}

TEST_CASE("perturbation documents") {
  const auto g = io::parse_perturbation(data("bump_perturbation.json"), 2);
  const auto ref = PerturbationFamily::bump(2, 1e-3);
  CHECK(g.constants().c == 0.001);
  for (const auto& x : random_ball_points(2, 5, 1.0, 4)) {
    for (long n : {1L, 5L, 77L}) {
      CHECK((g(n, x) - ref(n, x)).norm() < 1e-17);
      CHECK(oracle::max_abs(g.jacobian(n, x), ref.jacobian(n, x)) < 1e-16);
    }
  }
  const auto z = io::parse_perturbation(data("zero_perturbation.json"), 3);
  CHECK(z(4, Vector::Ones(3)).norm() == 0.0);
  CHECK(kind_of([] { io::parse_perturbation(R"({"kind":"builtin","builtin":"bump"})", 2); }) == ErrorKind::Config);
  CHECK(kind_of([] { io::parse_perturbation(R"({"kind":"closed_form","expr":["x1"]})", 2); }) == ErrorKind::Config);
  CHECK(kind_of([] { io::parse_perturbation(R"({"kind":"closed_form","expr":["x1","x2"],"L":1})", 2); }) ==
        ErrorKind::Config);
}

TEST_CASE("non-finite numbers serialize as null") {
  io::Json j{{"a", io::number(std::nan(""))}, {"b", io::number(INFINITY)}, {"c", io::number(0.25)}};
  CHECK(j.dump() == R"({"a":null,"b":null,"c":0.25})");
}

TEST_CASE("17 significant digits round-trip every double") {
  CHECK(io::format_double(0.1) == "0.10000000000000001");
  CHECK(io::format_double(-2.0) == "-2");
  CHECK(io::format_double(std::nan("")) == "nan");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::ldexp(u(rng), static_cast<int>(u(rng)));
    CHECK(std::strtod(io::format_double(x).c_str(), nullptr) == x);
  }
}

TEST_CASE("CSV tables") {
  io::Table t{{"k", "v"}, {{"1", "0.5"}, {"2", "nan"}}};
  CHECK(t.csv() == "k,v\n1,0.5\n2,nan\n");
}

TEST_CASE("report serialization of a dichotomy estimate") {
  DichotomyEstimate e;
  e.K = 1.5;
  e.lambda = 0.5;
  e.a = 1.0;
  e.verdict = Verdict::Accepted;
  e.diagnostics.worst = {1.2, 30.0, 2.0};
  e.diagnostics.window = 512;
  const auto j = io::to_json(e);
  CHECK(j["flavor"] == "polynomial");
  CHECK(j["verdict"] == "accepted");
  CHECK(j["worst_pair"] == io::Json::array({30.0, 2.0}));
  CHECK(j["worst_ratio"] == 1.2);
  CHECK(j["window"] == 512);
}
