#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rationale {

enum class ErrorCode {
  TransportError,
  BackendRefusal,
  EmptyCompletion,
  CapabilityMissing,
  DimensionMismatch,
  ZeroVector,
  EmptyReference,
  ParseFailure,
  NonFiniteLoss,
  NonFiniteScore,
  InsufficientLabels,
  EmptyRationale,
  NoCandidates,
  PreconditionViolation,
  NoAnswerFound,
  SchemaError,
  ConfigInvalid,
  UnboundPlaceholder,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::BackendRefusal: return "BackendRefusal";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::CapabilityMissing: return "CapabilityMissing";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::InsufficientLabels: return "InsufficientLabels";
    case ErrorCode::EmptyRationale: return "EmptyRationale";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::NoAnswerFound: return "NoAnswerFound";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// All library failures are reported as this exception; inspect code() to
/// tell recoverable per-item failures from fatal ones.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rationale
