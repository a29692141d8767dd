#include "polylin/builtins.hpp"

namespace polylin::builtins {

OperatorSequence example_4_3() {
  return OperatorSequence("example_4_3", 2, TimeAxis::Natural, [](long n) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = static_cast<double>(n) / static_cast<double>(n + 1);
    m(1, 1) = static_cast<double>(n + 1) / static_cast<double>(n);
    return m;
  });
}

CoefficientField continuous_5_3() { return CoefficientField::diagonal_power_law({-1.0, 1.0}, "continuous_5_3"); }

Forcing continuous_5_3_forcing(double eta) { return Forcing::bump(2, eta); }

OperatorSequence discrete(const std::string& name, long window) {
  if (name == "example_4_3") return example_4_3();
  if (name == "continuous_5_3_discretized") return polylin::discretize(EvolutionFamily(continuous_5_3()), window);
  throw Error(ErrorKind::Config, "unknown builtin system", name);
}

std::vector<std::string> discrete_names() { return {"example_4_3", "continuous_5_3_discretized"}; }

std::vector<std::string> continuous_names() { return {"continuous_5_3"}; }

}  // namespace polylin::builtins
