#include "polylin/error.hpp"

namespace polylin {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Conditioning: return "conditioning";
    case ErrorKind::Horizon: return "horizon";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Rank: return "rank";
    case ErrorKind::Projection: return "projection";
    case ErrorKind::Indeterminate: return "indeterminate";
    case ErrorKind::Structure: return "structure";
    case ErrorKind::NoHyperbolicity: return "no-hyperbolicity";
    case ErrorKind::Certification: return "certification";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Smallness: return "smallness";
    case ErrorKind::Accuracy: return "accuracy";
    case ErrorKind::Inversion: return "inversion";
    case ErrorKind::Integration: return "integration";
    case ErrorKind::Config: return "config";
    case ErrorKind::NotAvailable: return "not-available";
  }
  return "unknown";
}

namespace {
std::string compose(ErrorKind kind, const std::string& message, const std::string& witness) {
  std::string out(to_string(kind));
  out += " error: ";
  out += message;
  if (!witness.empty()) {
    out += " [";
    out += witness;
    out += "]";
  }
  return out;
}
}  // namespace

Error::Error(ErrorKind kind, std::string message, std::string witness)
    : std::runtime_error(compose(kind, message, witness)),
      kind_(kind),
      message_(std::move(message)),
      witness_(std::move(witness)) {}

}  // namespace polylin
