#pragma once

#include <stdexcept>
#include <string>

namespace valign {

// Error families map one-to-one onto CLI exit codes (see tools/valign.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable or malformed input data.
class InputError : public Error {
 public:
  using Error::Error;
};

// A data or model invariant does not hold (diverged training, bad split, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

enum class BackendErrorKind { network, auth, rate_limit, malformed_response, request };

inline const char* to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::network: return "network";
    case BackendErrorKind::auth: return "auth";
    case BackendErrorKind::rate_limit: return "rate_limit";
    case BackendErrorKind::malformed_response: return "malformed_response";
    case BackendErrorKind::request: return "request";
  }
  return "unknown";
}

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  BackendErrorKind kind() const noexcept { return kind_; }

 private:
  BackendErrorKind kind_;
};

}  // namespace valign
