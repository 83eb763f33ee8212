#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kcp {

enum class ErrorCode {
  kInvalidEntity,
  kRuleViolation,
  kNotFound,
  kInvalidSpec,
  kPoolExhausted,
  kGenerationRejected,
  kTemplateMissing,
  kBackendError,
  kSessionHalted,
  kUndefinedMetric,
  kConfigError,
  kInvalidArgument,
  kParseError,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure the library reports. The code lets
/// callers (and the CLI exit-code mapping) branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kcp
