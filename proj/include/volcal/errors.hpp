#pragma once

#include <stdexcept>
#include <string>

namespace volcal {

enum class ErrorCode {
  OutOfDomain,
  NegativeInput,
  EmptyInput,
  NonFiniteParams,
  NonFiniteGradient,
  DegenerateDensity,
  NegativeVariance,
  DivergedTraining,
  Io,
  VersionMismatch,
  MalformedHeader,
  EmptyAfterValidation,
  MaturityOutOfRange,
  VolFieldFailure,
  DomainError,
  ConfigMismatch,
};

/// Typed runtime error; the CLI maps codes onto process exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteParams: return "NonFiniteParams";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DegenerateDensity: return "DegenerateDensity";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::Io: return "Io";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::EmptyAfterValidation: return "EmptyAfterValidation";
    case ErrorCode::MaturityOutOfRange: return "MaturityOutOfRange";
    case ErrorCode::VolFieldFailure: return "VolFieldFailure";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
  }
  return "Unknown";
}

}  // namespace volcal
