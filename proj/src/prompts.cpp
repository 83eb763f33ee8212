#include "kcprobe/prompts.h"

#include <filesystem>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/text.h"

namespace kcp {
namespace {

constexpr const char* kJsonReply =
    "Reply with JSON only, in the form {\"subjects\": [\"...\"], \"object\": \"...\"}.";

std::string edit_prompt(std::string_view instruction) {
  std::string p = "Statement: {statement}\nRelation: {relation}\nSubjects: {subjects}\nObject: {object}\n";
  p += instruction;
  p += "\nThe new statement must be a plausible-sounding but different fact for the same relation.\n";
  p += kJsonReply;
  return p;
}

}  // namespace

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.answer =
      "Answer the question with a short entity name only. If you are not sure, reply N/A.\n"
      "Question: {question}";
  p.consistency =
      "Three answers were given to one question.\nQuestion: {question}\n"
      "Answer 1: {answer1}\nAnswer 2: {answer2}\nAnswer 3: {answer3}\n"
      "Do all three answers name the same entity? Reply Yes or No.";
  p.judge =
      "Answer A: {answer}\nAnswer B: {expected}\n"
      "Do answer A and answer B name the same entity? Reply Yes or No.";
  p.distractor["object_match"] = edit_prompt(
      "Replace the object with a different entity of type {object_type}. Keep the subjects.");
  p.distractor["object_shift"] = edit_prompt(
      "Replace the object with an entity of one of these types: {shift_types}. Keep the subjects.");
  p.distractor["subject_match"] = edit_prompt(
      "Replace one subject with a different entity of the same type ({subject_types}). Keep the "
      "object.");
  p.distractor["subject_shift"] = edit_prompt(
      "Replace one subject with an entity of one of these types: {shift_types}. Keep the object.");
  p.distractor["indirect_match"] = edit_prompt(
      "Replace one subject with a different entity of the same type ({subject_types}) and the "
      "object with a different entity of type {object_type}.");
  p.distractor["indirect_shift"] = edit_prompt(
      "Replace one subject and the object with entities of one of these types: {shift_types}.");
  p.paragraph =
      "Write a paragraph of three to five sentences with supporting details around the statement "
      "below. Use the statement word for word as the first sentence.\nStatement: {statement}";
  return p;
}

void PromptSet::load_overrides(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kNotFound, "prompt directory " + dir);
  auto maybe = [&](const std::string& name, std::string& slot) {
    const auto path = fs::path(dir) / (name + ".txt");
    if (fs::exists(path)) slot = read_file(path.string());
  };
  maybe("answer", answer);
  maybe("consistency", consistency);
  maybe("judge", judge);
  maybe("paragraph", paragraph);
  for (auto& [key, text] : distractor) maybe(key, text);
}

const std::string& PromptSet::distractor_prompt(std::string_view key) const {
  auto it = distractor.find(std::string(key));
  if (it == distractor.end()) {
    throw Error(ErrorCode::kTemplateMissing, "no distractor prompt '" + std::string(key) + "'");
  }
  return it->second;
}

std::string render_prompt(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [name, value] : values) tmpl = replace_all(std::move(tmpl), "{" + name + "}", value);
  return tmpl;
}

}  // namespace kcp
