#include "kcprobe/http_backend.h"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "kcprobe/error.h"

namespace kcp {

using nlohmann::json;

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
  if (config_.max_in_flight < 1) config_.max_in_flight = 1;
}

json HttpBackend::request_body(const std::string& model, std::span<const ChatTurn> history,
                               const GenerationParams& params) {
  json messages = json::array();
  for (const auto& t : history) messages.push_back(t);
  return json{{"model", model},
              {"messages", messages},
              {"temperature", params.temperature},
              {"top_p", params.top_p},
              {"max_tokens", params.max_tokens},
              {"logprobs", true}};
}

Completion HttpBackend::parse_response(const json& body, const std::string& fallback_model) {
  try {
    Completion c;
    c.model_id = body.value("model", fallback_model);
    const json& choice = body.at("choices").at(0);
    c.text = choice.at("message").at("content").get<std::string>();
    const bool has_logprobs = choice.contains("logprobs") && choice.at("logprobs").is_object() &&
                              choice.at("logprobs").contains("content") &&
                              choice.at("logprobs").at("content").is_array();
    if (has_logprobs) {
      for (const auto& tok : choice.at("logprobs").at("content")) {
        c.tokens.push_back({tok.at("token").get<std::string>(), tok.at("logprob").get<double>()});
      }
    } else {
      c.degraded = true;
    }
    if (body.contains("usage")) {
      c.usage.prompt_tokens = body.at("usage").value("prompt_tokens", std::int64_t{0});
      c.usage.completion_tokens = body.at("usage").value("completion_tokens", std::int64_t{0});
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBackendError, std::string("malformed chat-completions response: ") + e.what());
  }
}

void HttpBackend::acquire_slot() {
  std::unique_lock lock(mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
  ++in_flight_;
}

void HttpBackend::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void HttpBackend::throttle() {
  if (config_.requests_per_second <= 0.0) return;
  for (;;) {
    std::chrono::duration<double> wait{0};
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      const std::chrono::duration<double> elapsed = now - bucket_time_;
      bucket_time_ = now;
      bucket_tokens_ = std::min(1.0, bucket_tokens_ + elapsed.count() * config_.requests_per_second);
      if (bucket_tokens_ >= 1.0) {
        bucket_tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - bucket_tokens_) / config_.requests_per_second);
    }
    std::this_thread::sleep_for(wait);
  }
}

Completion HttpBackend::chat(std::span<const ChatTurn> history, const GenerationParams& params) {
  check_history(history);
  const std::string body = request_body(config_.model, history, params).dump();
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  acquire_slot();
  struct SlotGuard {
    HttpBackend* self;
    ~SlotGuard() { self->release_slot(); }
  } guard{this};

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<long long>(config_.initial_backoff_ms) << (attempt - 1)));
    }
    throttle();
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    auto res = client.Post(config_.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kBackendError, std::string("response is not JSON: ") + e.what());
      }
      return parse_response(parsed, config_.model);
    }
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300);
    const bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
    if (!transient) throw Error(ErrorCode::kBackendError, last_error);
  }
  throw Error(ErrorCode::kBackendError, "giving up after " +
                                            std::to_string(config_.max_retries + 1) +
                                            " attempts: " + last_error);
}

}  // namespace kcp
