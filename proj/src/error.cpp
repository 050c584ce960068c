#include <coopsar/error.hpp>

namespace coopsar {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonPositiveDt: return "NonPositiveDt";
    case ErrorCode::ZeroAccelVector: return "ZeroAccelVector";
    case ErrorCode::DegenerateMagField: return "DegenerateMagField";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::StaleMeasurement: return "StaleMeasurement";
    case ErrorCode::InvalidMeasurement: return "InvalidMeasurement";
    case ErrorCode::OutOfSpan: return "OutOfSpan";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::LocalizationFailed: return "LocalizationFailed";
    case ErrorCode::NoPath: return "NoPath";
    case ErrorCode::InvalidEndpoint: return "InvalidEndpoint";
    case ErrorCode::AllTrajectoriesCollide: return "AllTrajectoriesCollide";
    case ErrorCode::JointLimitViolation: return "JointLimitViolation";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::DegenerateSupport: return "DegenerateSupport";
    case ErrorCode::UndeclaredTopic: return "UndeclaredTopic";
    case ErrorCode::MaxRetriesExceeded: return "MaxRetriesExceeded";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace coopsar
