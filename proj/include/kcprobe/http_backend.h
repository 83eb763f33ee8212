#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>

#include "kcprobe/model.h"

namespace kcp {

struct HttpBackendConfig {
  /// Scheme, host and optional port, e.g. "https://api.openai.com".
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  /// Environment variable holding the bearer token; empty disables auth.
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 4;
  int initial_backoff_ms = 500;
  int timeout_seconds = 60;
  int max_in_flight = 4;
  /// Token-bucket refill rate; 0 disables rate limiting.
  double requests_per_second = 0.0;
};

/// OpenAI-compatible chat-completions client requesting token logprobs.
/// 408/429/5xx and connection failures are retried with exponential
/// backoff; other HTTP errors throw kBackendError immediately.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string model_id() const override { return config_.model; }
  Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) override;

  static nlohmann::json request_body(const std::string& model, std::span<const ChatTurn> history,
                                     const GenerationParams& params);
  /// Parses a chat-completions response; missing logprobs yield a degraded
  /// completion with no tokens.
  static Completion parse_response(const nlohmann::json& body, const std::string& fallback_model);

 private:
  void acquire_slot();
  void release_slot();
  void throttle();

  HttpBackendConfig config_;
  std::string api_key_;
  std::mutex mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
  double bucket_tokens_ = 1.0;
  std::chrono::steady_clock::time_point bucket_time_ = std::chrono::steady_clock::now();
};

}  // namespace kcp
