#include <doctest.h>

#include "polylin/run.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

using namespace polylin;

namespace {

const std::string kData = POLYLIN_TEST_DATA;

RunConfig spectrum_config() {
  RunConfig c;
  c.command = Command::Spectrum;
  c.builtin = "example_4_3";
  return c;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("FNV-1a reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("config documents: defaults, overrides, unknown keys, ranges") {
  const auto c = RunConfig::from_json(io::parse_json(io::read_file(kData + "/run_spectrum.json"), "config"));
  CHECK(c.command == Command::Spectrum);
  CHECK(c.builtin == "example_4_3");
  CHECK(c.window == 1024);
  CHECK(c.grid_step == 0.005);
  CHECK(c.tol == 1e-8);
  CHECK(c.seed == 0);
  CHECK(c.effective_lin_window(false) == 4096);
  CHECK(c.effective_lin_window(true) == 128);
  CHECK_NOTHROW(c.validate());

  CHECK_THROWS_AS(RunConfig::from_json(io::Json{{"windw", 5}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(io::Json{{"window", "big"}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(io::Json{{"seed", -1}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(io::Json{{"command", "plot"}}), Error);

  auto bad = spectrum_config();
  bad.grid_step = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spectrum_config();
  bad.window = 10;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spectrum_config();
  bad.system_path = "x.json";
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spectrum_config();
  bad.builtin = "continuous_5_3";
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spectrum_config();
  bad.perturbation_path = "g.json";
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("spectrum run on the example") {
  const auto r = run(spectrum_config());
  const auto& iv = r.stages["spectrum"]["intervals"];
  REQUIRE(iv.size() == 2);
  CHECK(std::abs(0.5 * (iv[0][0].get<double>() + iv[0][1].get<double>()) + 1.0) <= 1e-3);
  CHECK(std::abs(0.5 * (iv[1][0].get<double>() + iv[1][1].get<double>()) - 1.0) <= 1e-3);
  CHECK(r.stages["gap_band"]["sp1_ok"] == true);
  CHECK(r.hash.size() == 16);
  CHECK(r.version == kToolVersion);

  // rejected rows sit within one resolution of -1 and 1
  const auto rows = parse_csv(plot_data(r, "resolvent"));
  REQUIRE(rows.size() > 100);
  CHECK(rows[0] == std::vector<std::string>{"tau", "verdict", "lambda_fit", "K_fit"});
  int rejected = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][1] != "rejected") continue;
    ++rejected;
    const double tau = std::strtod(rows[i][0].c_str(), nullptr);
    CHECK(std::min(std::abs(tau + 1.0), std::abs(tau - 1.0)) <= 1e-3);
  }
  CHECK(rejected >= 2);

  CHECK_THROWS_AS(plot_data(r, "norms"), Error);
  try {
    plot_data(r, "residuals");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotAvailable);
  }
}

TEST_CASE("runs are deterministic") {
  auto c = spectrum_config();
  c.window = 1024;
  c.grid_step = 5e-3;
  c.seed = 3;
  const auto a = run(c);
  const auto b = run(c);
  CHECK(a.hash == b.hash);
  CHECK(a.stages == b.stages);
  CHECK(plot_data(a, "resolvent") == plot_data(b, "resolvent"));
  c.seed = 4;
  CHECK(run(c).hash != a.hash);
}

TEST_CASE("system file and builtin give the same spectrum") {
  auto c = spectrum_config();
  c.window = 1024;
  c.grid_step = 5e-3;
  const auto from_builtin = run(c);
  c.builtin.clear();
  c.system_path = kData + "/example_closed_form.json";
  const auto from_file = run(c);
  CHECK(from_file.stages["spectrum"]["intervals"] == from_builtin.stages["spectrum"]["intervals"]);
  CHECK(from_file.hash != from_builtin.hash);
}

TEST_CASE("stage failures carry the stage name and witness") {
  auto c = spectrum_config();
  c.builtin.clear();
  c.system_path = kData + "/doubling.json";
  try {
    run(c);
    FAIL("expected a growth failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
    CHECK(e.message().rfind("growth: ", 0) == 0);
    CHECK(!e.witness().empty());
  }
  c.system_path = kData + "/malformed.json";
  try {
    run(c);
    FAIL("expected a parse failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(e.message().rfind("load: ", 0) == 0);
  }
}

TEST_CASE("dichotomy run exports pairs and adapted norm factors") {
  RunConfig c;
  c.command = Command::Dichotomy;
  c.window = 256;
  const auto r = run(c);
  CHECK(r.stages["dichotomy"]["polynomial"]["verdict"] == "accepted");
  CHECK(r.stages["dichotomy"]["agree"] == true);
  const auto norms = parse_csv(plot_data(r, "norms"));
  CHECK(norms[0] == std::vector<std::string>{"n", "C_n"});
  // sandwich 1 <= ||x||_n / ||x|| <= 2(K + K^2) with K = 1
  for (std::size_t i = 1; i < norms.size(); ++i) {
    const double cn = std::strtod(norms[i][1].c_str(), nullptr);
    CHECK(cn >= 1.0 - 1e-12);
    CHECK(cn <= 4.0 + 1e-9);
  }
  const auto pairs = parse_csv(plot_data(r, "pairs"));
  CHECK(pairs[0].size() == 6);
  CHECK(pairs.size() > 10);
}

TEST_CASE("linearize with a zero perturbation gives zero residuals") {
  RunConfig c;
  c.command = Command::Linearize;
  c.window = 256;
  c.lin_window = 256;
  c.horizon = 16;
  c.grid_per_axis = 5;
  c.gronwall_samples = 200;
  c.perturbation_path = kData + "/zero_perturbation.json";
  const auto r = run(c);
  const auto rows = parse_csv(plot_data(r, "residuals"));
  REQUIRE(rows.size() == 17);
  CHECK(rows[0] == std::vector<std::string>{"k", "max_residual", "orbit_residual"});
  // zero up to the round-off of the transition products
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::strtod(rows[i][1].c_str(), nullptr) <= 1e-15);
    CHECK(std::strtod(rows[i][2].c_str(), nullptr) <= 1e-15);
  }
  CHECK(r.stages["solve"]["iterations"] == 0);
  CHECK(r.stages["certify"]["c"] == 0.0);
  CHECK(r.stages["regularity"]["C1"]["ok"] == true);
}

TEST_CASE("linearize with a closed-form perturbation") {
  RunConfig c;
  c.command = Command::Linearize;
  c.window = 512;
  c.lin_window = 512;
  c.horizon = 16;
  c.grid_per_axis = 5;
  c.gronwall_samples = 500;
  c.perturbation_path = kData + "/bump_perturbation.json";
  const auto r = run(c);
  CHECK(r.stages["solve"]["contraction"].get<double>() <= 0.9);
  CHECK(r.stages["verify"]["step_residual"].get<double>() < 1e-8);
  CHECK(r.stages["verify"]["orbit_residual"].get<double>() < 1e-6);
  CHECK(r.stages["gronwall"]["violations"] == 0);
}
