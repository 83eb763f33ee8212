#include "kcprobe/model.h"

#include "kcprobe/error.h"

namespace kcp {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view s) {
  if (s == "system") return Role::kSystem;
  if (s == "user") return Role::kUser;
  if (s == "assistant") return Role::kAssistant;
  throw Error(ErrorCode::kParseError, "unknown chat role '" + std::string(s) + "'");
}

void check_history(std::span<const ChatTurn> history) {
  if (history.empty()) throw Error(ErrorCode::kInvalidArgument, "empty chat history");
  for (const auto& turn : history) {
    if (turn.content.empty()) throw Error(ErrorCode::kInvalidArgument, "chat turn with empty content");
  }
  if (history.back().role != Role::kUser) {
    throw Error(ErrorCode::kInvalidArgument, "chat history must end with a user turn");
  }
}

Completion OfflineBackend::chat(std::span<const ChatTurn>, const GenerationParams&) {
  throw Error(ErrorCode::kBackendError, "network access disabled (offline backend)");
}

void to_json(json& j, const ChatTurn& t) {
  j = json{{"role", std::string(to_string(t.role))}, {"content", t.content}};
}
void from_json(const json& j, ChatTurn& t) {
  t.role = parse_role(j.at("role").get<std::string>());
  t.content = j.at("content").get<std::string>();
}

void to_json(json& j, const TokenLogprob& t) { j = json{{"token", t.text}, {"logprob", t.logprob}}; }
void from_json(const json& j, TokenLogprob& t) {
  t.text = j.at("token").get<std::string>();
  t.logprob = j.at("logprob").get<double>();
}

void to_json(json& j, const Completion& c) {
  j = json{{"text", c.text},
           {"tokens", c.tokens},
           {"model_id", c.model_id},
           {"usage", {{"prompt_tokens", c.usage.prompt_tokens},
                      {"completion_tokens", c.usage.completion_tokens}}},
           {"degraded", c.degraded}};
}
void from_json(const json& j, Completion& c) {
  c.text = j.at("text").get<std::string>();
  c.tokens = j.value("tokens", std::vector<TokenLogprob>{});
  c.model_id = j.value("model_id", "");
  if (j.contains("usage")) {
    c.usage.prompt_tokens = j.at("usage").value("prompt_tokens", std::int64_t{0});
    c.usage.completion_tokens = j.at("usage").value("completion_tokens", std::int64_t{0});
  }
  c.degraded = j.value("degraded", false);
}

void to_json(json& j, const GenerationParams& p) {
  j = json{{"temperature", p.temperature},
           {"top_p", p.top_p},
           {"max_tokens", p.max_tokens},
           {"seed", p.seed}};
}
void from_json(const json& j, GenerationParams& p) {
  GenerationParams d;
  p.temperature = j.value("temperature", d.temperature);
  p.top_p = j.value("top_p", d.top_p);
  p.max_tokens = j.value("max_tokens", d.max_tokens);
  p.seed = j.value("seed", d.seed);
}

std::optional<double> span_logprob(const Completion& completion, std::size_t begin,
                                   std::size_t end) {
  if (completion.tokens.empty()) return std::nullopt;
  double sum = 0.0;
  bool any = false;
  std::size_t offset = 0;
  for (const auto& tok : completion.tokens) {
    const std::size_t tb = offset;
    const std::size_t te = offset + tok.text.size();
    offset = te;
    if (te <= begin || tb >= end) continue;
    // Whitespace-only tokens carry no entity content.
    if (tok.text.find_first_not_of(" \t\n") == std::string::npos) continue;
    sum += tok.logprob;
    any = true;
  }
  if (!any) return std::nullopt;
  return sum;
}

}  // namespace kcp
