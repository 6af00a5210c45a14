#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace penprior {

enum class ErrorKind {
  InvalidParameter,
  UnsupportedPenalty,
  Configuration,
  NonNormalizablePrior,
  IllConditionedDeconvolution,
  NumericalFailure,
  SupportViolation,
  InvalidWitness,
  HypothesisViolation,
  Domain,
  Rescaling,
  ShapeMismatch,
  Divergence,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::UnsupportedPenalty: return "unsupported-penalty";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::NonNormalizablePrior: return "non-normalizable-prior";
    case ErrorKind::IllConditionedDeconvolution: return "ill-conditioned-deconvolution";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::SupportViolation: return "support-violation";
    case ErrorKind::InvalidWitness: return "invalid-witness";
    case ErrorKind::HypothesisViolation: return "hypothesis-violation";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Rescaling: return "rescaling";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::Divergence: return "divergence";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures caused by bad caller input rather than numerics.
  bool is_input_error() const noexcept {
    switch (kind_) {
      case ErrorKind::InvalidParameter:
      case ErrorKind::UnsupportedPenalty:
      case ErrorKind::Configuration:
      case ErrorKind::InvalidWitness:
      case ErrorKind::HypothesisViolation:
      case ErrorKind::ShapeMismatch:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace penprior
