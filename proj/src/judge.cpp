#include "kcprobe/judge.h"

#include <algorithm>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/text.h"

namespace kcp {
namespace {

std::string try_key(std::string_view s) {
  try {
    return canonical_key(s);
  } catch (const Error&) {
    return {};
  }
}

// First occurrence of `needle` (word list) in `hay`; returns index or npos.
std::size_t find_words(const std::vector<WordSpan>& hay, const std::vector<WordSpan>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return std::string::npos;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < needle.size() && ok; ++k) ok = hay[i + k].word == needle[k].word;
    if (ok) return i;
  }
  return std::string::npos;
}

}  // namespace

void AliasTable::add_group(std::span<const std::string> names) {
  std::vector<std::string> keys;
  for (const auto& n : names) {
    auto k = try_key(n);
    if (!k.empty()) keys.push_back(std::move(k));
  }
  if (keys.empty()) return;
  // Merge with any group that already holds one of the names.
  std::vector<std::string> merged;
  for (const auto& k : keys) {
    auto it = group_of_.find(k);
    if (it != group_of_.end()) {
      auto& old = groups_[it->second];
      merged.insert(merged.end(), old.begin(), old.end());
      old.clear();
    }
  }
  merged.insert(merged.end(), keys.begin(), keys.end());
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  const std::size_t id = groups_.size();
  for (const auto& k : merged) group_of_[k] = id;
  groups_.push_back(std::move(merged));
}

std::vector<std::string> AliasTable::equivalents(const std::string& key) const {
  auto it = group_of_.find(key);
  if (it == group_of_.end()) return {key};
  return groups_[it->second];
}

AliasTable AliasTable::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "alias table must be a JSON object");
  AliasTable t;
  for (const auto& [name, aliases] : j.items()) {
    std::vector<std::string> group{name};
    for (const auto& a : aliases) group.push_back(a.get<std::string>());
    t.add_group(group);
  }
  return t;
}

AliasTable AliasTable::load(const std::string& path) {
  return from_json(parse_json(read_file(path), path));
}

JudgeMatch find_entity(std::string_view answer, std::string_view expected_surface,
                       const AliasTable& aliases) {
  const auto key = try_key(expected_surface);
  if (key.empty() || trim(answer).empty()) return {};
  const auto hay = split_words(answer);
  for (const auto& candidate : aliases.equivalents(key)) {
    const auto needle = split_words(candidate);
    const auto at = find_words(hay, needle);
    if (at == std::string::npos) continue;
    return {true, hay[at].begin, hay[at + needle.size() - 1].end};
  }
  return {};
}

bool judge_equivalence(std::string_view answer, std::string_view expected_surface,
                       const AliasTable& aliases) {
  return find_entity(answer, expected_surface, aliases).matched;
}

const std::vector<std::string>& default_refusal_patterns() {
  static const std::vector<std::string> kPatterns{"i don't know", "n/a", "cannot", "unsure",
                                                  "unable to"};
  return kPatterns;
}

bool detect_abstention(std::string_view answer, std::span<const std::string> patterns) {
  // Typographic apostrophes are folded so "don’t" matches "don't".
  std::string folded = replace_all(std::string(answer), "\xE2\x80\x99", "'");
  const auto hay = split_words(folded);
  for (const auto& p : patterns) {
    if (find_words(hay, split_words(p)) != std::string::npos) return true;
  }
  return false;
}

Judge::Judge(AliasTable aliases, JudgeMode mode, Backend* llm, PromptSet prompts)
    : aliases_(std::move(aliases)), mode_(mode), llm_(llm), prompts_(std::move(prompts)) {
  if (mode_ == JudgeMode::kLlm && !llm_) {
    throw Error(ErrorCode::kConfigError, "LLM judge mode needs a judge backend");
  }
}

bool Judge::ask_yes_no(const std::string& prompt) const {
  const ChatTurn turn{Role::kUser, prompt};
  GenerationParams params;
  params.temperature = 0.0;
  const auto reply = llm_->chat(std::span(&turn, 1), params);
  return starts_with_ci(trim(reply.text), "yes");
}

JudgeMatch Judge::match(std::string_view answer, std::string_view expected_surface) const {
  auto m = find_entity(answer, expected_surface, aliases_);
  if (m.matched || mode_ != JudgeMode::kLlm || trim(answer).empty()) return m;
  const auto prompt = render_prompt(prompts_.judge, {{"answer", trim(answer)},
                                                     {"expected", std::string(expected_surface)}});
  if (!ask_yes_no(prompt)) return {};
  // Whole trimmed reply is the entity span.
  const auto first = answer.find_first_not_of(" \t\r\n");
  const auto last = answer.find_last_not_of(" \t\r\n");
  return {true, first, last + 1};
}

bool Judge::is_abstention(std::string_view answer) const {
  return detect_abstention(answer, refusals_);
}

bool Judge::agree(std::string_view question, std::span<const std::string> answers) const {
  if (answers.empty()) return false;
  for (const auto& a : answers) {
    if (is_abstention(a) || try_key(a).empty()) return false;
  }
  if (mode_ == JudgeMode::kLlm) {
    if (answers.size() != 3) throw Error(ErrorCode::kInvalidArgument, "checker prompt takes 3 answers");
    return ask_yes_no(render_prompt(prompts_.consistency, {{"question", std::string(question)},
                                                           {"answer1", answers[0]},
                                                           {"answer2", answers[1]},
                                                           {"answer3", answers[2]}}));
  }
  const auto first = try_key(answers[0]);
  return std::all_of(answers.begin(), answers.end(),
                     [&](const std::string& a) { return try_key(a) == first; });
}

}  // namespace kcp
