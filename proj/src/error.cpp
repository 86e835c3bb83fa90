#include "streetstage/error.hpp"

namespace streetstage {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PoleProximity: return "PoleProximity";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NoGroundIntersection: return "NoGroundIntersection";
    case ErrorCode::OutOfRaster: return "OutOfRaster";
    case ErrorCode::DegenerateSketch: return "DegenerateSketch";
    case ErrorCode::InvalidScene: return "InvalidScene";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::QuotaExceeded: return "QuotaExceeded";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::SequenceMismatch: return "SequenceMismatch";
    case ErrorCode::BackendUnreachable: return "BackendUnreachable";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
  }
  return "Unknown";
}

}  // namespace streetstage
