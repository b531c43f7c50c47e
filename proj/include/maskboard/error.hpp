#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskboard {

enum class ErrorCode {
  not_found,
  conflict,
  invalid,
  integrity,
  provider_unavailable,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found:
      return "not_found";
    case ErrorCode::conflict:
      return "conflict";
    case ErrorCode::invalid:
      return "invalid";
    case ErrorCode::integrity:
      return "integrity";
    case ErrorCode::provider_unavailable:
      return "provider_unavailable";
  }
  return "invalid";
}

/// Every failure raised by the library carries one of the service-level codes
/// so the HTTP layer can map it without inspecting messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error invalid(const std::string& message) {
  return Error(ErrorCode::invalid, message);
}
inline Error not_found(const std::string& message) {
  return Error(ErrorCode::not_found, message);
}
inline Error conflict(const std::string& message) {
  return Error(ErrorCode::conflict, message);
}

}  // namespace maskboard
