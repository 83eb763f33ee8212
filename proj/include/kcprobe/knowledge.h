#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace kcp {

struct EntityType {
  std::string name;
  std::string description;
};

/// Node identity inside a graph. The same surface under two types is two nodes.
struct NodeRef {
  std::string key;
  std::string type;

  auto operator<=>(const NodeRef&) const = default;
};

struct Entity {
  std::string key;
  std::string surface;
  std::string type;

  /// Builds an entity, deriving the key with canonical_key().
  static Entity make(std::string_view surface, std::string type);

  NodeRef ref() const { return {key, type}; }
  bool operator==(const Entity&) const = default;
};

struct RelationRule {
  std::string id;
  std::vector<std::string> source_types;
  std::string relation_phrase;
  std::string target_type;
  /// Subject placeholders `{0}` (and `{1}` for two-subject rules).
  std::string question_template;
  /// Same subject placeholders plus `{object}`.
  std::string statement_template;
  /// Hint that several answers may be correct (official languages, ...).
  bool multi_valued = false;

  bool multi_dependent() const { return source_types.size() == 2; }
  std::size_t arity() const { return source_types.size(); }
};

class RuleSet {
 public:
  RuleSet() = default;
  /// Validates on construction; throws kRuleViolation.
  RuleSet(std::string id, std::vector<EntityType> types, std::vector<RelationRule> rules);

  const std::string& id() const { return id_; }
  const std::vector<EntityType>& types() const { return types_; }
  const std::vector<RelationRule>& rules() const { return rules_; }

  bool has_type(std::string_view name) const;
  const RelationRule* find_rule(std::string_view rule_id) const;
  /// Throws kNotFound.
  const RelationRule& rule(std::string_view rule_id) const;

 private:
  void validate() const;

  std::string id_;
  std::vector<EntityType> types_;
  std::vector<RelationRule> rules_;
};

/// Small illustrative rule set shipped with the tool.
const RuleSet& default_rule_set();

struct ElicitationRecord {
  std::vector<std::string> answers;
  std::vector<double> temperatures;
  std::optional<std::string> verdict;
  /// Probability of the accepted answer at the first temperature, when the
  /// backend exposes token logprobs.
  std::optional<double> confidence;

  bool operator==(const ElicitationRecord&) const = default;
};

struct Edge {
  std::vector<NodeRef> subjects;
  std::string rule_id;
  std::vector<NodeRef> objects;
  ElicitationRecord elicitation;

  bool multi_child() const { return objects.size() > 1; }
  bool operator==(const Edge&) const = default;
};

/// Stable key for a (subjects, rule) relation, used to join probe hops with
/// construction-time confidence.
std::string relation_key(std::span<const NodeRef> subjects, std::string_view rule_id);

enum class AddResult { kAdded, kMerged, kUnchanged };

/// Parametric knowledge graph. A plain value: copies are independent and
/// const access is safe from several threads.
class Pkg {
 public:
  Pkg() = default;
  Pkg(std::string rule_set_id, Entity root);

  const std::string& rule_set_id() const { return rule_set_id_; }
  const std::optional<NodeRef>& root() const { return root_; }

  bool contains(const NodeRef& ref) const { return node_index_.count(ref) != 0; }
  const Entity* find_node(const NodeRef& ref) const;
  /// Throws kNotFound.
  const Entity& node(const NodeRef& ref) const;
  const std::vector<Entity>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Inserts a node if absent. Throws kRuleViolation for an unknown type.
  const Entity& add_node(const RuleSet& rules, const Entity& entity);

  /// Inserts subjects/objects as needed and records the edge. A repeated
  /// (subjects, rule) with the same objects is a no-op; new objects are
  /// merged into the existing edge. Type mismatches throw kRuleViolation
  /// and leave the graph untouched.
  AddResult add_edge(const RuleSet& rules, std::span<const Entity> subjects,
                     std::string_view rule_id, std::span<const Entity> objects,
                     ElicitationRecord elicitation = {});

  /// Edges whose subjects equal `subjects`, in insertion order. Throws
  /// kNotFound for an unknown subject.
  std::vector<Edge> neighbors(std::span<const NodeRef> subjects,
                              std::optional<std::string_view> rule_id = std::nullopt) const;

  const Edge* find_edge(std::span<const NodeRef> subjects, std::string_view rule_id) const;

  /// Full invariant check against a rule set; throws kRuleViolation.
  void validate(const RuleSet& rules) const;

  nlohmann::json to_json() const;
  static Pkg from_json(const nlohmann::json& j);

  /// Canonical text form (stable across round trips).
  std::string serialize() const;
  static Pkg deserialize(std::string_view text);

  bool operator==(const Pkg& other) const {
    return rule_set_id_ == other.rule_set_id_ && root_ == other.root_ &&
           nodes_ == other.nodes_ && edges_ == other.edges_;
  }

 private:
  using EdgeKey = std::pair<std::vector<NodeRef>, std::string>;

  void check_entity(const RuleSet& rules, const Entity& e, std::string_view expected_type,
                    std::string_view role) const;

  std::string rule_set_id_;
  std::optional<NodeRef> root_;
  std::vector<Entity> nodes_;
  std::map<NodeRef, std::size_t> node_index_;
  std::vector<Edge> edges_;
  std::map<EdgeKey, std::size_t> edge_index_;
};

void to_json(nlohmann::json& j, const EntityType& t);
void from_json(const nlohmann::json& j, EntityType& t);
void to_json(nlohmann::json& j, const NodeRef& r);
void from_json(const nlohmann::json& j, NodeRef& r);
void to_json(nlohmann::json& j, const Entity& e);
void from_json(const nlohmann::json& j, Entity& e);
void to_json(nlohmann::json& j, const RelationRule& r);
void from_json(const nlohmann::json& j, RelationRule& r);
void to_json(nlohmann::json& j, const RuleSet& rs);
void from_json(const nlohmann::json& j, RuleSet& rs);
void to_json(nlohmann::json& j, const ElicitationRecord& e);
void from_json(const nlohmann::json& j, ElicitationRecord& e);

RuleSet load_rule_set(const std::string& path);
void save_rule_set(const RuleSet& rules, const std::string& path);
Pkg load_pkg(const std::string& path);
void save_pkg(const Pkg& pkg, const std::string& path);

}  // namespace kcp
