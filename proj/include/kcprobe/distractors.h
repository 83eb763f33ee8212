#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcprobe/chains.h"
#include "kcprobe/knowledge.h"
#include "kcprobe/model.h"
#include "kcprobe/prompts.h"

namespace kcp {

enum class Method { kObject, kSubject, kIndirect };
enum class Degree { kTypeMatch, kTypeShift };
enum class Format { kSingleSentence, kParagraph };
enum class Provenance { kDeterministic, kLlm };

std::string to_string(Method m);
std::string to_string(Degree d);
std::string to_string(Format f);
std::string to_string(Provenance p);
Method parse_method(const std::string& s);
Degree parse_degree(const std::string& s);
Format parse_format(const std::string& s);

inline constexpr Method kMethods[] = {Method::kObject, Method::kSubject, Method::kIndirect};
inline constexpr Degree kDegrees[] = {Degree::kTypeMatch, Degree::kTypeShift};

struct DistractorSpec {
  std::string chain_id;
  int hop_index = 0;
  PositionLabel position;
  Method method = Method::kObject;
  Degree degree = Degree::kTypeMatch;

  bool operator==(const DistractorSpec&) const = default;
};

struct Distractor {
  std::string id;
  std::string chain_id;
  int hop_index = 0;
  PositionLabel position;
  Method method = Method::kObject;
  Degree degree = Degree::kTypeMatch;
  Format format = Format::kSingleSentence;
  Triplet original;
  Triplet edited;
  std::string text;
  /// The single-sentence statement (also embedded in paragraph text).
  std::string statement;
  Provenance provenance = Provenance::kDeterministic;

  /// Entities that differ between original and edited triplet.
  std::vector<Entity> replaced_entities() const;
  bool operator==(const Distractor&) const = default;
};

/// Candidate replacements per type, in a fixed order.
class EntityPool {
 public:
  EntityPool() = default;
  static EntityPool from_pkg(const Pkg& graph);

  void add(const Entity& e);
  /// Adds {"Type": ["surface", ...]} entries.
  void add_json(const nlohmann::json& j);

  /// Same-type entities with a key other than `original.key`.
  std::vector<Entity> matching(const Entity& original) const;
  /// Entities of every other type with a key other than `original.key`.
  std::vector<Entity> shifted(const Entity& original) const;

  const std::map<std::string, std::vector<Entity>>& by_type() const { return by_type_; }

 private:
  std::map<std::string, std::vector<Entity>> by_type_;
};

/// Every position x method x degree for the chain: 6 specs per hop.
std::vector<DistractorSpec> plan_distractor_set(const DataChain& chain);

/// Reason the distractor breaks a method/degree/format invariant, if any.
std::optional<std::string> check_distractor(const Distractor& d);

/// Single-sentence rendering from the rule's statement template. Throws
/// kTemplateMissing when the rule has none.
std::string render_text(const Triplet& triplet, const RuleSet& rules);
std::string render_text(const Distractor& d, const RuleSet& rules);

struct LlmDistractorOptions {
  Backend* backend = nullptr;
  PromptSet prompts = PromptSet::defaults();
  int max_retries = 3;
};

/// Deterministic mode (no backend) draws replacements uniformly from the
/// pool with a seed derived from (seed, chain, position, method, degree).
/// Throws kPoolExhausted when nothing is eligible and kGenerationRejected
/// when LLM output keeps failing validation.
Distractor make_distractor(const DataChain& chain, int hop_index, Method method, Degree degree,
                           const EntityPool& pool, const RuleSet& rules, std::uint64_t seed,
                           const LlmDistractorOptions* llm = nullptr);

/// Expands a single-sentence distractor into 3-5 sentences with the
/// statement first or second. Deterministic mode composes filler from a
/// sentence bank, skipping fillers that read as a rule statement.
Distractor to_paragraph(const Distractor& d, const RuleSet& rules, std::uint64_t seed,
                        const LlmDistractorOptions* llm = nullptr);

void to_json(nlohmann::json& j, const Distractor& d);
void from_json(const nlohmann::json& j, Distractor& d);

std::vector<Distractor> load_distractors(const std::string& path);
void save_distractors(const std::vector<Distractor>& ds, const std::string& path);

}  // namespace kcp
