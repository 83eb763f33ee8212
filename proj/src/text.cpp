#include "kcprobe/text.h"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "kcprobe/error.h"

namespace kcp {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string clean_surface(std::string_view s) {
  std::string out = collapse_whitespace(s);
  while (!out.empty() && (is_terminal_punct(out.back()) || is_space(out.back()))) out.pop_back();
  return out;
}

std::string canonical_key(std::string_view surface) {
  std::string key = to_lower_ascii(surface);
  for (;;) {
    std::string next = collapse_whitespace(key);
    while (!next.empty() && (is_terminal_punct(next.back()) || is_space(next.back()))) {
      next.pop_back();
    }
    for (std::string_view article : {"the ", "a ", "an "}) {
      if (next.size() > article.size() && next.compare(0, article.size(), article) == 0) {
        next.erase(0, article.size());
        break;
      }
    }
    if (next == key) break;
    key = std::move(next);
  }
  if (key.empty()) {
    throw Error(ErrorCode::kInvalidEntity, "entity surface is empty after normalization: '" +
                                               std::string(surface) + "'");
  }
  return key;
}

std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(text[j])) ++j;
    words.push_back({to_lower_ascii(text.substr(i, j - i)), i, j});
    i = j;
  }
  return words;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    // Swallow runs like "?!" or "...".
    std::size_t j = i + 1;
    while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
    if (j == text.size() || is_space(text[j])) {
      std::string sentence = trim(text.substr(start, j - start));
      if (!sentence.empty()) out.push_back(std::move(sentence));
      start = j;
    }
    i = j - 1;
  }
  std::string tail = trim(text.substr(start));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

TemplateInfo inspect_template(std::string_view tmpl) {
  TemplateInfo info;
  std::size_t i = 0;
  std::size_t last_placeholder_end = std::string_view::npos;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      ++i;
      continue;
    }
    const std::size_t close = tmpl.find('}', i);
    if (close == std::string_view::npos) {
      info.well_formed = false;
      break;
    }
    const std::string_view name = tmpl.substr(i + 1, close - i - 1);
    if (name == "object") {
      info.has_object = true;
    } else if (!name.empty() && name.find_first_not_of("0123456789") == std::string_view::npos) {
      info.subject_slots = std::max(info.subject_slots, std::stoi(std::string(name)) + 1);
    } else {
      info.well_formed = false;
    }
    last_placeholder_end = close + 1;
    i = close + 1;
  }
  const std::string trimmed = trim(tmpl);
  info.ends_with_placeholder = !trimmed.empty() && trimmed.back() == '}' &&
                               last_placeholder_end != std::string_view::npos;
  return info;
}

std::string fill_template(std::string_view tmpl, std::span<const std::string> subjects,
                          std::string_view object) {
  std::string out;
  out.reserve(tmpl.size() + 32);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const std::string_view name = tmpl.substr(i + 1, close - i - 1);
        if (name == "object") {
          out += object;
          i = close + 1;
          continue;
        }
        if (!name.empty() && name.find_first_not_of("0123456789") == std::string_view::npos) {
          const auto idx = static_cast<std::size_t>(std::stoul(std::string(name)));
          if (idx < subjects.size()) {
            out += subjects[idx];
            i = close + 1;
            continue;
          }
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  if (from.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

}  // namespace kcp
