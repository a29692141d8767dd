#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polylin {

/// Arithmetic expression over named real variables.
///
/// Grammar: + - * / ^, unary minus, parentheses, numeric literals and the
/// functions exp and log. Evaluation is exact-derivative capable: eval_grad
/// propagates forward-mode dual numbers through the compiled program.
class Expression {
 public:
  static constexpr int kMaxVariables = 12;

  /// Throws Error(Config) with the column of the offending token.
  static Expression parse(std::string_view text, std::vector<std::string> variables);

  /// Constant expression, handy for builders.
  static Expression constant(double value);

  double eval(std::span<const double> vars) const;

  /// Value plus gradient with respect to every variable.
  double eval_grad(std::span<const double> vars, std::span<double> grad) const;

  const std::string& source() const noexcept { return source_; }
  const std::vector<std::string>& variables() const noexcept { return variables_; }

  /// True if the named variable appears in the program.
  bool depends_on(std::string_view name) const;

  struct Op {
    enum Code : unsigned char { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Log } code;
    double value = 0.0;
    int index = 0;
  };

 private:
  std::string source_;
  std::vector<std::string> variables_;
  std::vector<Op> program_;
  int max_stack_ = 0;
};

}  // namespace polylin
