#pragma once

#include <stdexcept>
#include <string>

namespace selfrw {

enum class ErrorKind {
  BackendUnavailable,
  ContextOverflow,
  UnsupportedBackend,
  EmptyBatch,
  EmptyInput,
  NonFinite,
  DimensionMismatch,
  MalformedResponse,
  OutOfRange,
  MalformedAfterRetries,
  ConfigInvalid,
  IoError,
  MissingInputs,
  PreconditionViolation,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind next to the human message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace selfrw
