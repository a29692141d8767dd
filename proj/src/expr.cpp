#include "polylin/expr.hpp"

#include "polylin/error.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace polylin {

namespace {

struct Token {
  enum Kind { Number, Ident, Op, LParen, RParen, End } kind;
  std::string text;
  double number = 0.0;
  std::size_t column = 0;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char ch = static_cast<unsigned char>(s[i]);
    if (std::isspace(ch)) {
      ++i;
      continue;
    }
    const std::size_t col = i + 1;
    // U+2212 MINUS SIGN is accepted as '-'.
    if (ch == 0xE2 && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x88 &&
        static_cast<unsigned char>(s[i + 2]) == 0x92) {
      out.push_back({Token::Op, "-", 0.0, col});
      i += 3;
      continue;
    }
    if (std::isdigit(ch) || ch == '.') {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
          j = k;
        }
      }
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + j, value);
      if (ec != std::errc() || ptr != s.data() + j) {
        throw Error(ErrorKind::Config, "malformed number in expression",
                    "column " + std::to_string(col) + " in '" + std::string(s) + "'");
      }
      out.push_back({Token::Number, std::string(s.substr(i, j - i)), value, col});
      i = j;
      continue;
    }
    if (std::isalpha(ch) || ch == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Token::Ident, std::string(s.substr(i, j - i)), 0.0, col});
      i = j;
      continue;
    }
    switch (ch) {
      case '+': case '-': case '*': case '/': case '^':
        out.push_back({Token::Op, std::string(1, static_cast<char>(ch)), 0.0, col});
        break;
      case '(':
        out.push_back({Token::LParen, "(", 0.0, col});
        break;
      case ')':
        out.push_back({Token::RParen, ")", 0.0, col});
        break;
      default:
        throw Error(ErrorKind::Config, "unexpected character in expression",
                    "column " + std::to_string(col) + " in '" + std::string(s) + "'");
    }
    ++i;
  }
  out.push_back({Token::End, "", 0.0, s.size() + 1});
  return out;
}

class Parser {
 public:
  Parser(std::string_view source, const std::vector<std::string>& vars)
      : source_(source), vars_(vars), tokens_(tokenize(source)) {}

  std::vector<Expression::Op> run() {
    parse_sum();
    if (peek().kind != Token::End) fail("unexpected trailing input", peek());
    return std::move(program_);
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& take() { return tokens_[pos_++]; }
  bool peek_op(char c) const { return peek().kind == Token::Op && peek().text[0] == c; }

  [[noreturn]] void fail(const std::string& what, const Token& at) const {
    throw Error(ErrorKind::Config, what,
                "column " + std::to_string(at.column) + " in '" + std::string(source_) + "'");
  }

  void emit(Expression::Op::Code code, double value = 0.0, int index = 0) {
    program_.push_back({code, value, index});
  }

  void parse_sum() {
    parse_product();
    while (peek_op('+') || peek_op('-')) {
      const char op = take().text[0];
      parse_product();
      emit(op == '+' ? Expression::Op::Add : Expression::Op::Sub);
    }
  }

  void parse_product() {
    parse_unary();
    while (peek_op('*') || peek_op('/')) {
      const char op = take().text[0];
      parse_unary();
      emit(op == '*' ? Expression::Op::Mul : Expression::Op::Div);
    }
  }

  void parse_unary() {
    if (peek_op('-')) {
      take();
      parse_unary();
      emit(Expression::Op::Neg);
      return;
    }
    if (peek_op('+')) {
      take();
      parse_unary();
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (peek_op('^')) {
      take();
      parse_unary();  // right associative, allows 2^-x
      emit(Expression::Op::Pow);
    }
  }

  void parse_primary() {
    const Token& t = take();
    switch (t.kind) {
      case Token::Number:
        emit(Expression::Op::Num, t.number);
        return;
      case Token::LParen:
        parse_sum();
        if (peek().kind != Token::RParen) fail("expected ')'", peek());
        take();
        return;
      case Token::Ident: {
        if (t.text == "exp" || t.text == "log") {
          if (peek().kind != Token::LParen) fail("expected '(' after " + t.text, peek());
          take();
          parse_sum();
          if (peek().kind != Token::RParen) fail("expected ')'", peek());
          take();
          emit(t.text == "exp" ? Expression::Op::Exp : Expression::Op::Log);
          return;
        }
        for (std::size_t i = 0; i < vars_.size(); ++i) {
          if (vars_[i] == t.text) {
            emit(Expression::Op::Var, 0.0, static_cast<int>(i));
            return;
          }
        }
        fail("unknown identifier '" + t.text + "'", t);
      }
      default:
        fail("expected a number, variable or '('", t);
    }
  }

  std::string_view source_;
  const std::vector<std::string>& vars_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::vector<Expression::Op> program_;
};

struct Dual {
  double v = 0.0;
  std::array<double, Expression::kMaxVariables> g{};
};

template <typename T>
struct Arith;

template <>
struct Arith<double> {
  static double num(double x, int) { return x; }
  static double var(std::span<const double> vars, int i, int) { return vars[i]; }
  static double add(double a, double b) { return a + b; }
  static double sub(double a, double b) { return a - b; }
  static double mul(double a, double b) { return a * b; }
  static double div(double a, double b) { return a / b; }
  static double neg(double a) { return -a; }
  static double exp(double a) { return std::exp(a); }
  static double log(double a) { return std::log(a); }
  static double pow(double a, double b) { return std::pow(a, b); }
};

template <>
struct Arith<Dual> {
  static Dual num(double x, int) {
    Dual d;
    d.v = x;
    return d;
  }
  static Dual var(std::span<const double> vars, int i, int) {
    Dual d;
    d.v = vars[i];
    d.g[i] = 1.0;
    return d;
  }
  static Dual add(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v + b.v;
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = a.g[i] + b.g[i];
    return r;
  }
  static Dual sub(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v - b.v;
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = a.g[i] - b.g[i];
    return r;
  }
  static Dual mul(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v * b.v;
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return r;
  }
  static Dual div(const Dual& a, const Dual& b) {
    Dual r;
    r.v = a.v / b.v;
    const double inv = 1.0 / b.v;
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = (a.g[i] - r.v * b.g[i]) * inv;
    return r;
  }
  static Dual neg(const Dual& a) {
    Dual r;
    r.v = -a.v;
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = -a.g[i];
    return r;
  }
  static Dual exp(const Dual& a) {
    Dual r;
    r.v = std::exp(a.v);
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = r.v * a.g[i];
    return r;
  }
  static Dual log(const Dual& a) {
    Dual r;
    r.v = std::log(a.v);
    for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = a.g[i] / a.v;
    return r;
  }
  static Dual pow(const Dual& a, const Dual& b) {
    Dual r;
    r.v = std::pow(a.v, b.v);
    bool exponent_constant = true;
    for (double gi : b.g) exponent_constant = exponent_constant && gi == 0.0;
    if (exponent_constant) {
      // d(a^b) = b a^(b-1) da, valid for negative bases with integer b
      const double scale = b.v == 0.0 ? 0.0 : b.v * std::pow(a.v, b.v - 1.0);
      for (int i = 0; i < Expression::kMaxVariables; ++i) r.g[i] = scale * a.g[i];
    } else {
      const double la = std::log(a.v);
      for (int i = 0; i < Expression::kMaxVariables; ++i)
        r.g[i] = r.v * (b.g[i] * la + b.v * a.g[i] / a.v);
    }
    return r;
  }
};

template <typename T>
T run_program(const std::vector<Expression::Op>& program, std::span<const double> vars, int depth) {
  using A = Arith<T>;
  std::vector<T> stack;
  stack.reserve(static_cast<std::size_t>(depth));
  for (const auto& op : program) {
    switch (op.code) {
      case Expression::Op::Num: stack.push_back(A::num(op.value, 0)); break;
      case Expression::Op::Var: stack.push_back(A::var(vars, op.index, 0)); break;
      case Expression::Op::Neg: stack.back() = A::neg(stack.back()); break;
      case Expression::Op::Exp: stack.back() = A::exp(stack.back()); break;
      case Expression::Op::Log: stack.back() = A::log(stack.back()); break;
      default: {
        T rhs = stack.back();
        stack.pop_back();
        T& lhs = stack.back();
        switch (op.code) {
          case Expression::Op::Add: lhs = A::add(lhs, rhs); break;
          case Expression::Op::Sub: lhs = A::sub(lhs, rhs); break;
          case Expression::Op::Mul: lhs = A::mul(lhs, rhs); break;
          case Expression::Op::Div: lhs = A::div(lhs, rhs); break;
          case Expression::Op::Pow: lhs = A::pow(lhs, rhs); break;
          default: break;
        }
      }
    }
  }
  return stack.back();
}

}  // namespace

Expression Expression::parse(std::string_view text, std::vector<std::string> variables) {
  if (variables.size() > static_cast<std::size_t>(kMaxVariables)) {
    throw Error(ErrorKind::Config, "too many expression variables",
                std::to_string(variables.size()) + " > " + std::to_string(kMaxVariables));
  }
  Expression e;
  e.source_ = std::string(text);
  e.variables_ = std::move(variables);
  e.program_ = Parser(e.source_, e.variables_).run();
  int depth = 0;
  for (const auto& op : e.program_) {
    if (op.code == Op::Num || op.code == Op::Var) ++depth;
    else if (op.code != Op::Neg && op.code != Op::Exp && op.code != Op::Log) --depth;
    e.max_stack_ = std::max(e.max_stack_, depth);
  }
  return e;
}

Expression Expression::constant(double value) {
  Expression e;
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  e.source_.assign(buf, res.ptr);
  e.program_.push_back({Op::Num, value, 0});
  e.max_stack_ = 1;
  return e;
}

double Expression::eval(std::span<const double> vars) const {
  return run_program<double>(program_, vars, max_stack_);
}

double Expression::eval_grad(std::span<const double> vars, std::span<double> grad) const {
  Dual r = run_program<Dual>(program_, vars, max_stack_);
  for (std::size_t i = 0; i < grad.size() && i < r.g.size(); ++i) grad[i] = r.g[i];
  return r.v;
}

bool Expression::depends_on(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i] != name) continue;
    for (const auto& op : program_)
      if (op.code == Op::Var && op.index == static_cast<int>(i)) return true;
  }
  return false;
}

}  // namespace polylin
