#pragma once

#include <map>
#include <string>
#include <string_view>

namespace kcp {

/// Prompt templates with `{name}` placeholders. Every template can be
/// replaced by a `<name>.txt` file in an override directory.
struct PromptSet {
  /// Placeholders: {question}.
  std::string answer;
  /// Placeholders: {question}, {answer1}, {answer2}, {answer3}.
  std::string consistency;
  /// Placeholders: {answer}, {expected}.
  std::string judge;
  /// Keyed "object_match", "object_shift", "subject_match", "subject_shift",
  /// "indirect_match", "indirect_shift". Placeholders: {statement},
  /// {relation}, {subjects}, {object}, {subject_types}, {object_type},
  /// {shift_types}.
  std::map<std::string, std::string> distractor;
  /// Placeholders: {statement}.
  std::string paragraph;

  static PromptSet defaults();
  /// Applies `<dir>/<name>.txt` overrides; unknown files are ignored.
  void load_overrides(const std::string& dir);
  const std::string& distractor_prompt(std::string_view key) const;
};

std::string render_prompt(std::string tmpl, const std::map<std::string, std::string>& values);

}  // namespace kcp
