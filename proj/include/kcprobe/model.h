#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kcp {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view s);

struct ChatTurn {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatTurn&) const = default;
};

struct TokenLogprob {
  std::string text;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct Completion {
  std::string text;
  /// Empty when the backend did not return logprobs (see `degraded`).
  std::vector<TokenLogprob> tokens;
  std::string model_id;
  Usage usage;
  bool degraded = false;

  bool operator==(const Completion&) const = default;
};

/// Decoding settings. Defaults follow the probing setup: top-p 1,
/// temperature 0.3, 512 max tokens.
struct GenerationParams {
  double temperature = 0.3;
  double top_p = 1.0;
  int max_tokens = 512;
  /// Only consulted by the simulated backend.
  std::uint64_t seed = 0;

  bool operator==(const GenerationParams&) const = default;
};

/// Chat-completion backend. Implementations must be safe to call from
/// several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string model_id() const = 0;
  /// History must be non-empty and end with a user turn. Transport
  /// failures throw kBackendError.
  virtual Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) = 0;
};

/// Throws kInvalidArgument unless the history is non-empty, has no empty
/// turns and ends with a user turn.
void check_history(std::span<const ChatTurn> history);

/// Forwards to another backend and counts calls.
class CountingBackend : public Backend {
 public:
  explicit CountingBackend(Backend& inner) : inner_(inner) {}

  std::string model_id() const override { return inner_.model_id(); }
  Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.chat(history, params);
  }

  std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  Backend& inner_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Always fails; stands in for "no network allowed".
class OfflineBackend : public Backend {
 public:
  explicit OfflineBackend(std::string model_id = "offline") : model_id_(std::move(model_id)) {}
  std::string model_id() const override { return model_id_; }
  Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) override;

 private:
  std::string model_id_;
};

void to_json(nlohmann::json& j, const ChatTurn& t);
void from_json(const nlohmann::json& j, ChatTurn& t);
void to_json(nlohmann::json& j, const TokenLogprob& t);
void from_json(const nlohmann::json& j, TokenLogprob& t);
void to_json(nlohmann::json& j, const Completion& c);
void from_json(const nlohmann::json& j, Completion& c);
void to_json(nlohmann::json& j, const GenerationParams& p);
void from_json(const nlohmann::json& j, GenerationParams& p);

/// Sum of logprobs of the tokens overlapping [begin, end) of the completion
/// text; nullopt when the completion has no tokens.
std::optional<double> span_logprob(const Completion& completion, std::size_t begin,
                                   std::size_t end);

}  // namespace kcp
