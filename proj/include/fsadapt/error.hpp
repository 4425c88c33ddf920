#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsadapt {

enum class ErrorCode {
  BadMagic,
  VersionUnsupported,
  DimMismatch,
  NonFiniteValue,
  LabelOutOfRange,
  IoFailure,
  ZeroNormRow,
  InsufficientSamples,
  BadTestIndices,
  DegenerateInput,
  NonFiniteLoss,
  LineSearchFailure,
  NotNormalized,
  UnknownMethod,
  MissingClass,
  EmptyGroup,
  EmptyGrid,
  SchemaError,
  ConfigError,
};

std::string_view error_name(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can dispatch on the failure class, not the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fsadapt
