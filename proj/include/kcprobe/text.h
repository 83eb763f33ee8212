#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kcp {

/// Casefolds, collapses whitespace, strips leading articles and terminal
/// punctuation. Throws kInvalidEntity when nothing is left.
std::string canonical_key(std::string_view surface);

std::string trim(std::string_view s);

/// Trims and removes trailing sentence punctuation, keeping the case.
std::string clean_surface(std::string_view s);

std::string to_lower_ascii(std::string_view s);

struct WordSpan {
  std::string word;  // lowercased
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last byte
};

/// Maximal runs of alphanumeric bytes (bytes >= 0x80 count as letters so
/// UTF-8 words stay whole).
std::vector<WordSpan> split_words(std::string_view text);

/// Splits on '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(std::string_view text);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);

bool starts_with_ci(std::string_view s, std::string_view prefix);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Template with `{0}`, `{1}`, ... subject placeholders and an optional
/// `{object}` placeholder.
struct TemplateInfo {
  int subject_slots = 0;  // highest subject index + 1
  bool has_object = false;
  bool ends_with_placeholder = false;
  bool well_formed = true;
};

TemplateInfo inspect_template(std::string_view tmpl);

std::string fill_template(std::string_view tmpl, std::span<const std::string> subjects,
                          std::string_view object = {});

/// Replaces every `{name}` with `value`.
std::string replace_all(std::string text, std::string_view from, std::string_view to);

}  // namespace kcp
