#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polylin {

enum class ErrorKind {
  Domain,
  Conditioning,
  Horizon,
  Precondition,
  Rank,
  Projection,
  Indeterminate,
  Structure,
  NoHyperbolicity,
  Certification,
  Divergence,
  Smallness,
  Accuracy,
  Inversion,
  Integration,
  Config,
  NotAvailable,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure in the library is reported through this type. The witness
/// string carries the indices or points needed to reproduce the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string witness = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& witness() const noexcept { return witness_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
  std::string witness_;
};

}  // namespace polylin
