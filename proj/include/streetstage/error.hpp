#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace streetstage {

enum class ErrorCode {
  InvalidArgument,
  PoleProximity,
  OutOfRange,
  NoGroundIntersection,
  OutOfRaster,
  DegenerateSketch,
  InvalidScene,
  DecodeError,
  IoError,
  ProviderUnavailable,
  QuotaExceeded,
  EmptyPrompt,
  SequenceMismatch,
  BackendUnreachable,
  BackendFailure,
  IllegalTransition,
  NotFound,
  Conflict,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Provider and backend outages are worth retrying; everything else is not.
  bool retriable() const noexcept {
    return code_ == ErrorCode::ProviderUnavailable || code_ == ErrorCode::QuotaExceeded ||
           code_ == ErrorCode::BackendUnreachable;
  }

 private:
  ErrorCode code_;
};

}  // namespace streetstage
