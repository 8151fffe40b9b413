#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace llmtd {

enum class ErrorCode {
  EmptyTemplate,
  ContainsWildcardMarker,
  EmptyLine,
  IoError,
  DuplicateTemplate,
  EmptyGroundTruth,
  EmptyBatch,
  Timeout,
  HttpStatus,
  MalformedResponse,
  ScriptExhausted,
  BackendUnreachable,
  InvalidCounts,
  InvalidConfig,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyTemplate: return "EmptyTemplate";
    case ErrorCode::ContainsWildcardMarker: return "ContainsWildcardMarker";
    case ErrorCode::EmptyLine: return "EmptyLine";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DuplicateTemplate: return "DuplicateTemplate";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::HttpStatus: return "HttpStatus";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::BackendUnreachable: return "BackendUnreachable";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "UnknownError";
}

/// All library failures are reported through this single exception type so
/// callers can dispatch on the code without parsing messages.
/// what() is "<code name>: <message>"; message() is the bare message, so
/// callers can rewrap an error with extra context without nesting prefixes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(std::move(message)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace llmtd
