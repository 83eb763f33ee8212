#include "kcprobe/knowledge.h"

#include <algorithm>
#include <set>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/text.h"

namespace kcp {

using nlohmann::json;

Entity Entity::make(std::string_view surface, std::string type) {
  Entity e;
  e.key = canonical_key(surface);
  e.surface = clean_surface(surface);
  e.type = std::move(type);
  return e;
}

RuleSet::RuleSet(std::string id, std::vector<EntityType> types, std::vector<RelationRule> rules)
    : id_(std::move(id)), types_(std::move(types)), rules_(std::move(rules)) {
  validate();
}

bool RuleSet::has_type(std::string_view name) const {
  return std::any_of(types_.begin(), types_.end(),
                     [&](const EntityType& t) { return t.name == name; });
}

const RelationRule* RuleSet::find_rule(std::string_view rule_id) const {
  for (const auto& r : rules_) {
    if (r.id == rule_id) return &r;
  }
  return nullptr;
}

const RelationRule& RuleSet::rule(std::string_view rule_id) const {
  if (const auto* r = find_rule(rule_id)) return *r;
  throw Error(ErrorCode::kNotFound, "unknown rule '" + std::string(rule_id) + "'");
}

void RuleSet::validate() const {
  std::set<std::string> type_names;
  for (const auto& t : types_) {
    if (t.name.empty()) throw Error(ErrorCode::kRuleViolation, "entity type with empty name");
    if (!type_names.insert(t.name).second) {
      throw Error(ErrorCode::kRuleViolation, "duplicate entity type '" + t.name + "'");
    }
  }
  std::set<std::string> rule_ids;
  for (const auto& r : rules_) {
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::kRuleViolation, "rule '" + r.id + "': " + why);
    };
    if (r.id.empty()) throw Error(ErrorCode::kRuleViolation, "rule with empty id");
    if (!rule_ids.insert(r.id).second) fail("duplicate rule id");
    if (r.source_types.empty() || r.source_types.size() > 2) fail("needs one or two source types");
    for (const auto& st : r.source_types) {
      if (!type_names.count(st)) fail("unknown source type '" + st + "'");
    }
    if (!type_names.count(r.target_type)) fail("unknown target type '" + r.target_type + "'");

    const auto q = inspect_template(r.question_template);
    if (!q.well_formed || q.has_object || q.subject_slots != static_cast<int>(r.arity())) {
      fail("question template must use exactly " + std::to_string(r.arity()) +
           " subject placeholder(s)");
    }
    if (q.ends_with_placeholder) fail("question template must not end with a placeholder");
    const auto s = inspect_template(r.statement_template);
    if (!r.statement_template.empty()) {
      if (!s.well_formed || !s.has_object || s.subject_slots != static_cast<int>(r.arity())) {
        fail("statement template must use the subject placeholders and {object}");
      }
    }
  }
}

namespace {

RuleSet build_default_rules() {
  std::vector<EntityType> types = {
      {"Country", "Sovereign state"},
      {"City", "City or town"},
      {"Person", "Named individual"},
      {"Company", "Business organization"},
      {"Year", "Calendar year"},
      {"Building", "Named structure"},
      {"Language", "Natural language"},
      {"University", "Higher-education institution"},
      {"Animal", "Animal species"},
      {"Sport", "Sport or game"},
  };
  auto rule = [](std::string id, std::vector<std::string> src, std::string phrase,
                 std::string target, std::string q, std::string s, bool multi = false) {
    RelationRule r;
    r.id = std::move(id);
    r.source_types = std::move(src);
    r.relation_phrase = std::move(phrase);
    r.target_type = std::move(target);
    r.question_template = std::move(q);
    r.statement_template = std::move(s);
    r.multi_valued = multi;
    return r;
  };
  std::vector<RelationRule> rules = {
      rule("capital-is", {"Country"}, "capital is", "City", "What is the capital of {0}?",
           "The capital of {0} is {object}."),
      rule("head-of-state", {"Country"}, "head of state is", "Person",
           "Who is the head of state of {0}?", "The head of state of {0} is {object}."),
      rule("official-language", {"Country"}, "official language is", "Language",
           "What are the official languages of {0}?", "An official language of {0} is {object}.",
           true),
      rule("largest-company", {"Country"}, "largest company is", "Company",
           "What is the largest company headquartered in {0}?",
           "The largest company headquartered in {0} is {object}."),
      rule("national-animal", {"Country"}, "national animal is", "Animal",
           "What is the national animal of {0}?", "The national animal of {0} is {object}."),
      rule("national-sport", {"Country"}, "national sport is", "Sport",
           "What is the national sport of {0}?", "The national sport of {0} is {object}."),
      rule("country-of-city", {"City"}, "is located in country", "Country",
           "In which country is the city {0} located?", "{0} is a city in {object}."),
      rule("tallest-building", {"City"}, "tallest building is", "Building",
           "What is the tallest building in {0}?", "The tallest building in {0} is {object}."),
      rule("mayor-of", {"City"}, "mayor is", "Person", "Who is the mayor of {0}?",
           "The mayor of {0} is {object}."),
      rule("nationality", {"Person"}, "is a citizen of", "Country",
           "What is the nationality of {0}?", "{0} is a citizen of {object}."),
      rule("born-in", {"Person"}, "was born in", "City", "In which city was {0} born?",
           "{0} was born in {object}."),
      rule("alma-mater", {"Person"}, "attended", "University", "Which university did {0} attend?",
           "{0} attended {object}."),
      rule("founded-by", {"Company"}, "was founded by", "Person", "Who founded {0}?",
           "{0} was founded by {object}."),
      rule("founding-year", {"Company"}, "was founded in", "Year", "In which year was {0} founded?",
           "{0} was founded in the year {object}."),
      rule("completion-year", {"Building"}, "was completed in", "Year",
           "In which year was {0} completed?", "{0} was completed in {object}."),
      rule("university-city", {"University"}, "is located in", "City",
           "In which city is {0} located?", "{0} is located in {object}."),
      rule("ceo-in-year", {"Company", "Year"}, "CEO in year", "Person",
           "Who was the CEO of {0} in the year {1}?", "The CEO of {0} in the year {1} was {object}."),
      rule("mayor-in-year", {"City", "Year"}, "mayor in year", "Person",
           "Who was the mayor of {0} in {1}?", "The mayor of {0} in {1} was {object}."),
  };
  return RuleSet("default-v1", std::move(types), std::move(rules));
}

}  // namespace

const RuleSet& default_rule_set() {
  static const RuleSet rules = build_default_rules();
  return rules;
}

std::string relation_key(std::span<const NodeRef> subjects, std::string_view rule_id) {
  std::string out;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (i) out += '+';
    out += subjects[i].type;
    out += ':';
    out += subjects[i].key;
  }
  out += " -[";
  out += rule_id;
  out += "]";
  return out;
}

Pkg::Pkg(std::string rule_set_id, Entity root) : rule_set_id_(std::move(rule_set_id)) {
  root_ = root.ref();
  node_index_.emplace(root.ref(), 0);
  nodes_.push_back(std::move(root));
}

const Entity* Pkg::find_node(const NodeRef& ref) const {
  auto it = node_index_.find(ref);
  return it == node_index_.end() ? nullptr : &nodes_[it->second];
}

const Entity& Pkg::node(const NodeRef& ref) const {
  if (const auto* e = find_node(ref)) return *e;
  throw Error(ErrorCode::kNotFound, "no node " + ref.type + ":" + ref.key);
}

void Pkg::check_entity(const RuleSet& rules, const Entity& e, std::string_view expected_type,
                       std::string_view role) const {
  if (e.key.empty()) throw Error(ErrorCode::kInvalidEntity, std::string(role) + " has empty key");
  if (!rules.has_type(e.type)) {
    throw Error(ErrorCode::kRuleViolation, std::string(role) + " '" + e.surface +
                                               "' has unknown type '" + e.type + "'");
  }
  if (e.type != expected_type) {
    throw Error(ErrorCode::kRuleViolation, std::string(role) + " '" + e.surface + "' has type " +
                                               e.type + ", rule expects " +
                                               std::string(expected_type));
  }
}

const Entity& Pkg::add_node(const RuleSet& rules, const Entity& entity) {
  if (!rules.has_type(entity.type)) {
    throw Error(ErrorCode::kRuleViolation, "unknown type '" + entity.type + "'");
  }
  if (entity.key.empty()) throw Error(ErrorCode::kInvalidEntity, "entity with empty key");
  auto [it, inserted] = node_index_.emplace(entity.ref(), nodes_.size());
  if (inserted) nodes_.push_back(entity);
  return nodes_[it->second];
}

AddResult Pkg::add_edge(const RuleSet& rules, std::span<const Entity> subjects,
                        std::string_view rule_id, std::span<const Entity> objects,
                        ElicitationRecord elicitation) {
  const RelationRule* rule = rules.find_rule(rule_id);
  if (!rule) throw Error(ErrorCode::kRuleViolation, "unknown rule '" + std::string(rule_id) + "'");
  if (!rule_set_id_.empty() && rule_set_id_ != rules.id()) {
    throw Error(ErrorCode::kRuleViolation, "graph built with rule set '" + rule_set_id_ +
                                               "', got '" + rules.id() + "'");
  }
  if (subjects.size() != rule->arity()) {
    throw Error(ErrorCode::kRuleViolation, "rule '" + rule->id + "' takes " +
                                               std::to_string(rule->arity()) + " subject(s)");
  }
  if (objects.empty()) throw Error(ErrorCode::kRuleViolation, "edge needs at least one object");
  // Validate everything before touching the graph so failures are atomic.
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    check_entity(rules, subjects[i], rule->source_types[i], "subject");
  }
  for (const auto& o : objects) check_entity(rules, o, rule->target_type, "object");

  if (rule_set_id_.empty()) rule_set_id_ = rules.id();
  std::vector<NodeRef> subject_refs;
  for (const auto& s : subjects) subject_refs.push_back(add_node(rules, s).ref());
  std::vector<NodeRef> object_refs;
  for (const auto& o : objects) {
    NodeRef ref = add_node(rules, o).ref();
    if (std::find(object_refs.begin(), object_refs.end(), ref) == object_refs.end()) {
      object_refs.push_back(std::move(ref));
    }
  }

  EdgeKey key{subject_refs, std::string(rule_id)};
  auto it = edge_index_.find(key);
  if (it == edge_index_.end()) {
    edge_index_.emplace(std::move(key), edges_.size());
    edges_.push_back({std::move(subject_refs), std::string(rule_id), std::move(object_refs),
                      std::move(elicitation)});
    return AddResult::kAdded;
  }
  Edge& edge = edges_[it->second];
  bool merged = false;
  for (auto& ref : object_refs) {
    if (std::find(edge.objects.begin(), edge.objects.end(), ref) == edge.objects.end()) {
      edge.objects.push_back(std::move(ref));
      merged = true;
    }
  }
  return merged ? AddResult::kMerged : AddResult::kUnchanged;
}

std::vector<Edge> Pkg::neighbors(std::span<const NodeRef> subjects,
                                 std::optional<std::string_view> rule_id) const {
  for (const auto& s : subjects) {
    if (!contains(s)) throw Error(ErrorCode::kNotFound, "no node " + s.type + ":" + s.key);
  }
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (!std::equal(e.subjects.begin(), e.subjects.end(), subjects.begin(), subjects.end())) {
      continue;
    }
    if (rule_id && e.rule_id != *rule_id) continue;
    out.push_back(e);
  }
  return out;
}

const Edge* Pkg::find_edge(std::span<const NodeRef> subjects, std::string_view rule_id) const {
  auto it = edge_index_.find(
      EdgeKey{std::vector<NodeRef>(subjects.begin(), subjects.end()), std::string(rule_id)});
  return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

void Pkg::validate(const RuleSet& rules) const {
  if (rule_set_id_ != rules.id()) {
    throw Error(ErrorCode::kRuleViolation,
                "graph rule set '" + rule_set_id_ + "' does not match '" + rules.id() + "'");
  }
  for (const auto& n : nodes_) {
    if (!rules.has_type(n.type)) {
      throw Error(ErrorCode::kRuleViolation, "node '" + n.surface + "' has unknown type");
    }
  }
  if (root_ && !contains(*root_)) throw Error(ErrorCode::kRuleViolation, "root is not a node");
  std::set<EdgeKey> seen;
  for (const auto& e : edges_) {
    const RelationRule* rule = rules.find_rule(e.rule_id);
    if (!rule) throw Error(ErrorCode::kRuleViolation, "edge uses unknown rule " + e.rule_id);
    if (e.subjects.size() != rule->arity() || e.objects.empty()) {
      throw Error(ErrorCode::kRuleViolation, "edge arity mismatch for " + e.rule_id);
    }
    for (std::size_t i = 0; i < e.subjects.size(); ++i) {
      if (!contains(e.subjects[i]) || e.subjects[i].type != rule->source_types[i]) {
        throw Error(ErrorCode::kRuleViolation, "bad subject on edge " + e.rule_id);
      }
    }
    for (const auto& o : e.objects) {
      if (!contains(o) || o.type != rule->target_type) {
        throw Error(ErrorCode::kRuleViolation, "bad object on edge " + e.rule_id);
      }
    }
    if (!seen.insert({e.subjects, e.rule_id}).second) {
      throw Error(ErrorCode::kRuleViolation, "duplicate edge " + e.rule_id);
    }
  }
}

// --- JSON -----------------------------------------------------------------

void to_json(json& j, const EntityType& t) { j = json{{"name", t.name}, {"description", t.description}}; }
void from_json(const json& j, EntityType& t) {
  t.name = j.at("name").get<std::string>();
  t.description = j.value("description", "");
}

void to_json(json& j, const NodeRef& r) { j = json{{"key", r.key}, {"type", r.type}}; }
void from_json(const json& j, NodeRef& r) {
  r.key = j.at("key").get<std::string>();
  r.type = j.at("type").get<std::string>();
}

void to_json(json& j, const Entity& e) {
  j = json{{"key", e.key}, {"surface", e.surface}, {"type", e.type}};
}
void from_json(const json& j, Entity& e) {
  e.surface = j.at("surface").get<std::string>();
  e.type = j.at("type").get<std::string>();
  e.key = j.contains("key") ? j.at("key").get<std::string>() : canonical_key(e.surface);
}

void to_json(json& j, const RelationRule& r) {
  j = json{{"id", r.id},
           {"source_types", r.source_types},
           {"relation_phrase", r.relation_phrase},
           {"target_type", r.target_type},
           {"question_template", r.question_template},
           {"statement_template", r.statement_template},
           {"multi_dependent", r.multi_dependent()},
           {"multi_valued", r.multi_valued}};
}
void from_json(const json& j, RelationRule& r) {
  r.id = j.at("id").get<std::string>();
  r.source_types = j.at("source_types").get<std::vector<std::string>>();
  r.relation_phrase = j.value("relation_phrase", "");
  r.target_type = j.at("target_type").get<std::string>();
  r.question_template = j.at("question_template").get<std::string>();
  r.statement_template = j.value("statement_template", "");
  r.multi_valued = j.value("multi_valued", false);
  if (j.contains("multi_dependent") && j.at("multi_dependent").get<bool>() != r.multi_dependent()) {
    throw Error(ErrorCode::kRuleViolation,
                "rule '" + r.id + "': multi_dependent must be true iff it has two source types");
  }
}

void to_json(json& j, const RuleSet& rs) {
  j = json{{"id", rs.id()}, {"types", rs.types()}, {"rules", rs.rules()}};
}
void from_json(const json& j, RuleSet& rs) {
  rs = RuleSet(j.at("id").get<std::string>(), j.at("types").get<std::vector<EntityType>>(),
               j.at("rules").get<std::vector<RelationRule>>());
}

void to_json(json& j, const ElicitationRecord& e) {
  j = json{{"answers", e.answers}, {"temperatures", e.temperatures}};
  j["verdict"] = e.verdict ? json(*e.verdict) : json(nullptr);
  j["confidence"] = e.confidence ? json(*e.confidence) : json(nullptr);
}
void from_json(const json& j, ElicitationRecord& e) {
  e.answers = j.value("answers", std::vector<std::string>{});
  e.temperatures = j.value("temperatures", std::vector<double>{});
  e.verdict.reset();
  e.confidence.reset();
  if (j.contains("verdict") && !j.at("verdict").is_null()) e.verdict = j.at("verdict").get<std::string>();
  if (j.contains("confidence") && !j.at("confidence").is_null()) {
    e.confidence = j.at("confidence").get<double>();
  }
}

json Pkg::to_json() const {
  json j;
  j["rule_set_id"] = rule_set_id_;
  j["root"] = root_ ? json(root_->key) : json(nullptr);
  j["root_type"] = root_ ? json(root_->type) : json(nullptr);
  j["nodes"] = nodes_;
  json edges = json::array();
  for (const auto& e : edges_) {
    edges.push_back(json{{"subjects", e.subjects},
                         {"rule", e.rule_id},
                         {"objects", e.objects},
                         {"elicitation", e.elicitation}});
  }
  j["edges"] = std::move(edges);
  return j;
}

Pkg Pkg::from_json(const json& j) {
  try {
    Pkg g;
    g.rule_set_id_ = j.at("rule_set_id").get<std::string>();
    for (const auto& n : j.at("nodes")) {
      Entity e = n.get<Entity>();
      if (!g.node_index_.emplace(e.ref(), g.nodes_.size()).second) {
        throw Error(ErrorCode::kRuleViolation, "duplicate node " + e.type + ":" + e.key);
      }
      g.nodes_.push_back(std::move(e));
    }
    if (!j.at("root").is_null()) {
      g.root_ = NodeRef{j.at("root").get<std::string>(), j.at("root_type").get<std::string>()};
      if (!g.contains(*g.root_)) throw Error(ErrorCode::kRuleViolation, "root is not a node");
    }
    for (const auto& ej : j.at("edges")) {
      Edge e;
      e.subjects = ej.at("subjects").get<std::vector<NodeRef>>();
      e.rule_id = ej.at("rule").get<std::string>();
      e.objects = ej.at("objects").get<std::vector<NodeRef>>();
      if (ej.contains("elicitation")) e.elicitation = ej.at("elicitation").get<ElicitationRecord>();
      for (const auto& r : e.subjects) {
        if (!g.contains(r)) throw Error(ErrorCode::kRuleViolation, "edge subject not a node: " + r.key);
      }
      for (const auto& r : e.objects) {
        if (!g.contains(r)) throw Error(ErrorCode::kRuleViolation, "edge object not a node: " + r.key);
      }
      if (e.subjects.empty() || e.objects.empty()) {
        throw Error(ErrorCode::kRuleViolation, "edge with no subjects or objects");
      }
      if (!g.edge_index_.emplace(EdgeKey{e.subjects, e.rule_id}, g.edges_.size()).second) {
        throw Error(ErrorCode::kRuleViolation, "duplicate edge " + e.rule_id);
      }
      g.edges_.push_back(std::move(e));
    }
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed PKG document: ") + e.what());
  }
}

std::string Pkg::serialize() const { return to_json().dump(2) + "\n"; }

Pkg Pkg::deserialize(std::string_view text) {
  return from_json(parse_json(std::string(text), "PKG"));
}

RuleSet load_rule_set(const std::string& path) {
  try {
    return parse_json(read_file(path), path).get<RuleSet>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

void save_rule_set(const RuleSet& rules, const std::string& path) {
  write_file(path, json(rules).dump(2) + "\n");
}

Pkg load_pkg(const std::string& path) { return Pkg::deserialize(read_file(path)); }

void save_pkg(const Pkg& pkg, const std::string& path) { write_file(path, pkg.serialize()); }

}  // namespace kcp
