#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lfd {

enum class ErrorCode {
  InvalidArgument,
  InvalidImage,
  CoincidentEyes,
  OutOfBounds,
  PatchOutOfCanvas,
  ConfigMismatch,
  PatchTooSmall,
  EmptyConfig,
  DimensionMismatch,
  NoCommonLandmarks,
  NonPositiveSigma,
  ZeroVariance,
  DegenerateLabels,
  NonFiniteInput,
  NoConvergence,
  SingleClass,
  InsufficientData,
  SplitOverlap,
  MissingVariant,
  ParseError,
  IndexOutOfRange,
  TooFewRecords,
  VersionMismatch,
  ChecksumMismatch,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace lfd
