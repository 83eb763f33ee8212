#include "kcprobe/error.h"

namespace kcp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidEntity: return "InvalidEntity";
    case ErrorCode::kRuleViolation: return "RuleViolation";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kPoolExhausted: return "PoolExhausted";
    case ErrorCode::kGenerationRejected: return "GenerationRejected";
    case ErrorCode::kTemplateMissing: return "TemplateMissing";
    case ErrorCode::kBackendError: return "BackendError";
    case ErrorCode::kSessionHalted: return "SessionHalted";
    case ErrorCode::kUndefinedMetric: return "UndefinedMetric";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace kcp
