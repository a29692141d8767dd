#pragma once

#include "polylin/error.hpp"
#include "polylin/expr.hpp"
#include "polylin/linalg.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace polylin {

/// Index domain of a sequence: natural time starts at 1, block time at 0.
enum class TimeAxis { Natural, Block };

inline long origin_of(TimeAxis axis) { return axis == TimeAxis::Natural ? 1 : 0; }

struct ConditioningLimits {
  double det_floor = 1e-300;
  double cond_ceiling = 1e12;
};

/// Rule n -> invertible d x d matrix. Copies share the generator.
class OperatorSequence {
 public:
  using Generator = std::function<Matrix(long)>;

  OperatorSequence(std::string name, int dim, TimeAxis axis, Generator generator,
                   std::optional<long> last_index = std::nullopt,
                   ErrorKind beyond_last = ErrorKind::Domain, ConditioningLimits limits = {});

  /// Closed-form entries in the variable n.
  static OperatorSequence closed_form(std::string name, TimeAxis axis,
                                      std::vector<std::vector<Expression>> entries);
  /// Tabulated values; values[0] is the matrix at the origin.
  static OperatorSequence table(std::string name, TimeAxis axis, std::vector<Matrix> values);
  /// diag(((n+1)/n)^{e_1}, ..., ((n+1)/n)^{e_d}) on natural time.
  static OperatorSequence diagonal_power_law(std::vector<double> exponents, std::string name = {});
  /// Constant matrix in the given axis.
  static OperatorSequence constant(std::string name, TimeAxis axis, Matrix value);

  /// Validated matrix at index n (domain and conditioning checked).
  Matrix operator()(long n) const;

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return dim_; }
  TimeAxis axis() const noexcept { return axis_; }
  long origin() const noexcept { return origin_of(axis_); }
  std::optional<long> last_index() const noexcept { return last_; }
  const ConditioningLimits& limits() const noexcept { return limits_; }

 private:
  std::string name_;
  int dim_;
  TimeAxis axis_;
  Generator generator_;
  std::optional<long> last_;
  ErrorKind beyond_last_;
  ConditioningLimits limits_;
};

}  // namespace polylin
