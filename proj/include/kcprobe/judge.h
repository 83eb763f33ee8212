#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kcprobe/model.h"
#include "kcprobe/prompts.h"

namespace kcp {

/// Groups of interchangeable names. Loaded from a JSON object mapping a
/// name to its aliases, e.g. {"United States": ["USA", "US"]}; every member
/// of a group is equivalent to every other.
class AliasTable {
 public:
  AliasTable() = default;
  void add_group(std::span<const std::string> names);
  /// Canonical keys equivalent to `key`, including `key` itself.
  std::vector<std::string> equivalents(const std::string& key) const;
  bool empty() const { return group_of_.empty(); }

  static AliasTable from_json(const nlohmann::json& j);
  static AliasTable load(const std::string& path);

 private:
  std::map<std::string, std::size_t> group_of_;
  std::vector<std::vector<std::string>> groups_;
};

struct JudgeMatch {
  bool matched = false;
  /// Byte span of the matched entity inside the answer.
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Deterministic match: the expected key (or an alias) occurs in the answer
/// as a whole-word sequence. Canonical equality is the special case where
/// the sequence is the whole answer.
JudgeMatch find_entity(std::string_view answer, std::string_view expected_surface,
                       const AliasTable& aliases = {});

enum class JudgeMode { kDeterministic, kLlm };

bool judge_equivalence(std::string_view answer, std::string_view expected_surface,
                       const AliasTable& aliases = {});

const std::vector<std::string>& default_refusal_patterns();

/// True when a refusal pattern occurs in the answer as a whole-word sequence.
bool detect_abstention(std::string_view answer,
                       std::span<const std::string> patterns = default_refusal_patterns());

/// Bundles the matching policy used by graph construction and probing.
/// In LLM mode, answers the deterministic rules reject are referred to the
/// judge backend with the checker prompt.
class Judge {
 public:
  Judge() = default;
  Judge(AliasTable aliases, JudgeMode mode = JudgeMode::kDeterministic, Backend* llm = nullptr,
        PromptSet prompts = PromptSet::defaults());

  JudgeMatch match(std::string_view answer, std::string_view expected_surface) const;
  bool is_abstention(std::string_view answer) const;
  /// Whether three answers to `question` agree. Deterministic mode requires
  /// identical canonical keys.
  bool agree(std::string_view question, std::span<const std::string> answers) const;

  JudgeMode mode() const { return mode_; }
  const AliasTable& aliases() const { return aliases_; }
  void set_refusal_patterns(std::vector<std::string> patterns) { refusals_ = std::move(patterns); }

 private:
  bool ask_yes_no(const std::string& prompt) const;

  AliasTable aliases_;
  JudgeMode mode_ = JudgeMode::kDeterministic;
  Backend* llm_ = nullptr;
  PromptSet prompts_ = PromptSet::defaults();
  std::vector<std::string> refusals_ = default_refusal_patterns();
};

}  // namespace kcp
