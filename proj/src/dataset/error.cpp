#include "detaug/error.hpp"

namespace detaug {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidColor: return "InvalidColor";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::IncompleteBundle: return "IncompleteBundle";
    case ErrorCode::UnknownImageId: return "UnknownImageId";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::NetworkError: return "NetworkError";
    case ErrorCode::QuotaExceeded: return "QuotaExceeded";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownTargetLabel: return "UnknownTargetLabel";
    case ErrorCode::InconsistentImageSets: return "InconsistentImageSets";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace detaug
