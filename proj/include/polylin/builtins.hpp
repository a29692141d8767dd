#pragma once

#include "polylin/continuous.hpp"
#include "polylin/operator_sequence.hpp"

#include <string>
#include <vector>

namespace polylin::builtins {

/// A_n = diag(n/(n+1), (n+1)/n) on natural time.
OperatorSequence example_4_3();

/// Known spectrum of the example above, in exponent units.
inline std::vector<std::pair<double, double>> example_4_3_spectrum() { return {{-1.0, -1.0}, {1.0, 1.0}}; }

/// A(t) = diag(-1/t, 1/t).
CoefficientField continuous_5_3();
/// eta/(t+1) (xi(x1), xi(x2)).
Forcing continuous_5_3_forcing(double eta);

/// Dichotomy constants K = a = lambda = 1, eps = 0 with P = diag(1, 0).
struct ExampleConstants {
  double K = 1.0;
  double a = 1.0;
  double lambda = 1.0;
  double epsilon = 0.0;
};

/// Discrete builtin by name; `window` bounds tabulated sequences.
OperatorSequence discrete(const std::string& name, long window);

std::vector<std::string> discrete_names();
std::vector<std::string> continuous_names();

}  // namespace polylin::builtins
