#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcprobe/knowledge.h"
#include "kcprobe/model.h"

namespace kcp {

/// Behaviour of the simulated model. The model answers from `ground_truth`
/// and is swayed by statements found earlier in the conversation:
///
///  * direct: a statement with the queried subjects and relation is
///    followed when confidence < direct_threshold * influence;
///  * indirect: a statement with the queried relation but other subjects is
///    followed when confidence < indirect_threshold * influence;
///  * a statement whose object the model knows to be of another type than
///    the relation's target is only followed below shift_accept_below.
///
/// influence = attention_decay^t * (1 + length_boost if the statement came
/// in a context of three or more sentences), t being the number of
/// assistant turns so far. Below abstain_below the model refuses.
struct SusceptibilityProfile {
  std::string model_id = "simulated";
  Pkg ground_truth;
  std::map<std::string, double> rule_confidence;
  double default_confidence = 0.9;
  double direct_threshold = 1.0;
  double indirect_threshold = 0.0;
  double shift_accept_below = 0.0;
  double abstain_below = 0.0;
  double attention_decay = 1.0;
  double length_boost = 0.0;
  /// Below this confidence, answers at temperatures above 0.3 drift to
  /// another entity of the target type.
  double unstable_below = 0.0;
  double deviated_confidence_boost = 0.0;
  double conforming_confidence_shift = 0.0;
  /// Entities the model knows about besides the ground-truth nodes (used to
  /// recognise type-shifted statements).
  std::vector<Entity> extra_entities;

  double confidence_for(const std::string& rule_id) const;
  /// Throws kInvalidArgument for out-of-range values.
  void validate() const;
};

void to_json(nlohmann::json& j, const SusceptibilityProfile& p);
/// Accepts either an inline "ground_truth" document or a "ground_truth_path"
/// resolved relative to `base_dir`.
SusceptibilityProfile profile_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
SusceptibilityProfile load_profile(const std::string& path);

inline constexpr std::string_view kRefusal = "I don't know.";

/// Deterministic stand-in for a chat model. It only sees the text of the
/// conversation: questions and statements are recognised by matching the
/// rule set's templates sentence by sentence, so entity surfaces must not
/// contain ". ".
class SimulatedBackend : public Backend {
 public:
  SimulatedBackend(RuleSet rules, SusceptibilityProfile profile);

  std::string model_id() const override { return profile_.model_id; }
  Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) override;

  const SusceptibilityProfile& profile() const { return profile_; }
  const RuleSet& rules() const { return rules_; }

  struct Query {
    const RelationRule* rule = nullptr;
    std::vector<std::string> subject_surfaces;
  };
  struct Statement {
    const RelationRule* rule = nullptr;
    std::vector<std::string> subject_keys;
    std::string object_surface;
    std::string object_key;
    std::size_t context_sentences = 0;
  };

  std::optional<Query> parse_query(std::string_view text) const;
  std::vector<Statement> parse_statements(std::string_view text) const;

 private:
  struct Patterns {
    const RelationRule* rule;
    std::regex question;
    std::optional<std::regex> statement;
    std::vector<int> statement_slots;  // subject index per group, -1 = object
  };

  bool shifted(const std::string& key, const std::string& target_type) const;
  Completion make_completion(std::string text, double confidence) const;

  RuleSet rules_;
  SusceptibilityProfile profile_;
  std::vector<Patterns> patterns_;
  std::map<std::string, std::vector<std::string>> lexicon_types_;  // key -> types
  std::map<std::string, std::vector<Entity>> lexicon_by_type_;
};

/// Compiles a `{0}`/`{object}` template to a full-match regex; groups are
/// reported in `slots` (subject index, or -1 for the object).
std::regex template_regex(std::string_view tmpl, std::vector<int>* slots = nullptr);

struct WorldParams {
  std::size_t entities_per_type = 12;
  /// Probability that a single-subject (entity, rule) pair has a fact.
  double fact_probability = 1.0;
  /// Number of two-subject facts sampled per multi-dependent rule.
  std::size_t pair_facts_per_rule = 12;
  /// Probability that a fact of a multi_valued rule has two objects.
  double multi_child_probability = 0.5;
  std::uint64_t seed = 1;
};

/// Random ground-truth world over a rule set with pronounceable, globally
/// unique entity names (years are rendered as numbers). The first entity of
/// the first type is the root.
Pkg make_synthetic_world(const RuleSet& rules, const WorldParams& params);

}  // namespace kcp
