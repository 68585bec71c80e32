#include "selfrw/errors.hpp"

namespace selfrw {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BackendUnavailable:
      return "backend_unavailable";
    case ErrorKind::ContextOverflow:
      return "context_overflow";
    case ErrorKind::UnsupportedBackend:
      return "unsupported_backend";
    case ErrorKind::EmptyBatch:
      return "empty_batch";
    case ErrorKind::EmptyInput:
      return "empty_input";
    case ErrorKind::NonFinite:
      return "non_finite";
    case ErrorKind::DimensionMismatch:
      return "dimension_mismatch";
    case ErrorKind::MalformedResponse:
      return "malformed_response";
    case ErrorKind::OutOfRange:
      return "out_of_range";
    case ErrorKind::MalformedAfterRetries:
      return "malformed_after_retries";
    case ErrorKind::ConfigInvalid:
      return "config_invalid";
    case ErrorKind::IoError:
      return "io_error";
    case ErrorKind::MissingInputs:
      return "missing_inputs";
    case ErrorKind::PreconditionViolation:
      return "precondition_violation";
  }
  return "unknown_error";
}

}  // namespace selfrw
