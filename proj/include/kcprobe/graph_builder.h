#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kcprobe/judge.h"
#include "kcprobe/knowledge.h"
#include "kcprobe/model.h"
#include "kcprobe/prompts.h"

namespace kcp {

struct BuildLimits {
  int max_depth = 3;
  std::size_t max_nodes = 1000;
  std::size_t max_edges = 5000;
  /// Partners tried per two-subject rule when expanding one entity.
  std::size_t per_rule_fanout_cap = 8;
  /// Backend requests (three per elicited relation).
  std::size_t request_budget = 100000;

  /// Throws kInvalidArgument unless every limit is positive (max_depth may
  /// be zero).
  void validate() const;
};

inline const std::vector<double> kElicitationTemperatures{0.3, 0.5, 0.7};

/// Asks `question` at each elicitation temperature. The verdict is the
/// first answer, cleaned, when the judge finds all three equivalent.
ElicitationRecord consistent_answer(Backend& backend, const std::string& question,
                                    const Judge& judge, const PromptSet& prompts = PromptSet::defaults(),
                                    std::uint64_t seed = 0);

/// Mutable construction state shared by expand_node calls.
struct BuildState {
  std::size_t requests = 0;
  bool exhausted = false;
  std::set<std::pair<std::vector<NodeRef>, std::string>> asked;
};

struct BuildContext {
  const RuleSet& rules;
  Backend& backend;
  const Judge& judge;
  const BuildLimits& limits;
  const PromptSet& prompts;
  std::uint64_t seed = 0;
};

/// Elicits every rule applicable to `entity` (pairing it with known
/// co-subjects for two-subject rules) and commits accepted answers to
/// `graph`. Returns the edges added or extended. Stops early, setting
/// state.exhausted, when a limit is reached.
std::vector<Edge> expand_node(Pkg& graph, const Entity& entity, const BuildContext& ctx,
                              BuildState& state);

struct BuildResult {
  Pkg pkg;
  bool exhausted = false;
  std::size_t requests = 0;
};

/// Depth-first construction from `root`. Throws kRuleViolation when the
/// root type is not in the rule set.
BuildResult build_pkg(const Entity& root, const RuleSet& rules, Backend& backend,
                      const BuildLimits& limits, const Judge& judge = {},
                      const PromptSet& prompts = PromptSet::defaults(), std::uint64_t seed = 0);

/// Expands each root in turn into one graph whose root is the first entry.
/// Limits apply to the whole graph.
BuildResult build_pkg(std::span<const Entity> roots, const RuleSet& rules, Backend& backend,
                      const BuildLimits& limits, const Judge& judge = {},
                      const PromptSet& prompts = PromptSet::defaults(), std::uint64_t seed = 0);

}  // namespace kcp
