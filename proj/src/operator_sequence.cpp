#include "polylin/operator_sequence.hpp"

#include <cmath>
#include <memory>

namespace polylin {

OperatorSequence::OperatorSequence(std::string name, int dim, TimeAxis axis, Generator generator,
                                   std::optional<long> last_index, ErrorKind beyond_last,
                                   ConditioningLimits limits)
    : name_(std::move(name)),
      dim_(dim),
      axis_(axis),
      generator_(std::move(generator)),
      last_(last_index),
      beyond_last_(beyond_last),
      limits_(limits) {
  if (dim_ <= 0) throw Error(ErrorKind::Config, "dimension must be positive", name_);
}

Matrix OperatorSequence::operator()(long n) const {
  if (n < origin()) {
    throw Error(ErrorKind::Domain, "index below sequence origin",
                name_ + ": n=" + std::to_string(n) + " < " + std::to_string(origin()));
  }
  if (last_ && n > *last_) {
    throw Error(beyond_last_, "index beyond the last available entry",
                name_ + ": n=" + std::to_string(n) + " > " + std::to_string(*last_));
  }
  Matrix m = generator_(n);
  if (m.rows() != dim_ || m.cols() != dim_) {
    throw Error(ErrorKind::Config, "generator returned a matrix of the wrong shape",
                name_ + ": n=" + std::to_string(n));
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::Conditioning, "non-finite matrix entry", name_ + ": n=" + std::to_string(n));
  }
  const double det = m.determinant();
  const double cond = condition_number(m);
  if (!(std::abs(det) >= limits_.det_floor) || !(cond <= limits_.cond_ceiling)) {
    throw Error(ErrorKind::Conditioning, "matrix too close to singular",
                name_ + ": n=" + std::to_string(n) + " det=" + std::to_string(det) +
                    " cond=" + std::to_string(cond));
  }
  return m;
}

OperatorSequence OperatorSequence::closed_form(std::string name, TimeAxis axis,
                                               std::vector<std::vector<Expression>> entries) {
  const int d = static_cast<int>(entries.size());
  for (const auto& row : entries) {
    if (static_cast<int>(row.size()) != d) {
      throw Error(ErrorKind::Config, "expression matrix must be square", name);
    }
  }
  auto shared = std::make_shared<const std::vector<std::vector<Expression>>>(std::move(entries));
  return OperatorSequence(std::move(name), d, axis, [shared, d](long n) {
    Matrix m(d, d);
    const double nv = static_cast<double>(n);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = (*shared)[i][j].eval(std::span<const double>(&nv, 1));
    return m;
  });
}

OperatorSequence OperatorSequence::table(std::string name, TimeAxis axis, std::vector<Matrix> values) {
  if (values.empty()) throw Error(ErrorKind::Config, "empty table", name);
  const int d = static_cast<int>(values.front().rows());
  const long origin = origin_of(axis);
  const long last = origin + static_cast<long>(values.size()) - 1;
  auto shared = std::make_shared<const std::vector<Matrix>>(std::move(values));
  return OperatorSequence(std::move(name), d, axis,
                          [shared, origin](long n) { return (*shared)[static_cast<std::size_t>(n - origin)]; },
                          last);
}

OperatorSequence OperatorSequence::diagonal_power_law(std::vector<double> exponents, std::string name) {
  const int d = static_cast<int>(exponents.size());
  if (name.empty()) {
    name = "power_law(";
    for (int i = 0; i < d; ++i) name += (i ? "," : "") + std::to_string(exponents[i]);
    name += ")";
  }
  return OperatorSequence(std::move(name), d, TimeAxis::Natural, [exponents, d](long n) {
    Matrix m = Matrix::Zero(d, d);
    const double ratio = static_cast<double>(n + 1) / static_cast<double>(n);
    for (int i = 0; i < d; ++i) m(i, i) = std::pow(ratio, exponents[i]);
    return m;
  });
}

OperatorSequence OperatorSequence::constant(std::string name, TimeAxis axis, Matrix value) {
  const int d = static_cast<int>(value.rows());
  return OperatorSequence(std::move(name), d, axis, [value](long) { return value; });
}

}  // namespace polylin
