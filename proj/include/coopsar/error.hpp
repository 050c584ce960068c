#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coopsar {

enum class ErrorCode {
  NonPositiveDt,
  ZeroAccelVector,
  DegenerateMagField,
  NonMonotonicTimestamp,
  EmptyMask,
  StaleMeasurement,
  InvalidMeasurement,
  OutOfSpan,
  InsufficientCorrespondences,
  DegenerateConfiguration,
  DisconnectedGraph,
  LocalizationFailed,
  NoPath,
  InvalidEndpoint,
  AllTrajectoriesCollide,
  JointLimitViolation,
  Unreachable,
  DegenerateSupport,
  UndeclaredTopic,
  MaxRetriesExceeded,
  EmptyOverlap,
  ConfigInvalid,
  ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-checkable code; every module throws this.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace coopsar
