#pragma once

// Brute-force reference implementations. Deliberately naive: they try every
// tuple of triplets instead of walking adjacency, so they share no logic with
// the library's enumerator.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "kcprobe/chains.h"
#include "kcprobe/distractors.h"
#include "kcprobe/knowledge.h"
#include "kcprobe/rng.h"

namespace kcp::oracle {

inline const RuleSet& graph_rules() {
  static const RuleSet rules = [] {
    std::vector<EntityType> types{{"N", "abstract node"}};
    std::vector<RelationRule> rs;
    for (const std::string id : {"f", "g", "h"}) {
      rs.push_back({id, {"N"}, id, "N", "What is the " + id + " of {0}?", "The " + id + " of {0} is {object}."});
    }
    RelationRule m{"m", {"N"}, "m", "N", "What are the m of {0}?", "An m of {0} is {object}."};
    m.multi_valued = true;
    rs.push_back(m);
    rs.push_back({"p", {"N", "N"}, "p", "N", "What is the p of {0} and {1}?", "The p of {0} and {1} is {object}."});
    return RuleSet("oracle-graph", types, rs);
  }();
  return rules;
}

/// Random graph with at most `max_nodes` nodes over graph_rules().
inline Pkg random_graph(std::uint64_t seed, std::size_t max_nodes = 12) {
  Rng rng(seed);
  const std::size_t n = 3 + rng.below(max_nodes - 2);
  std::vector<Entity> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back(Entity::make("n" + std::to_string(i), "N"));
  Pkg g(graph_rules().id(), nodes[0]);
  for (const auto& e : nodes) g.add_node(graph_rules(), e);
  const std::size_t edges = n + rng.below(n);
  const std::vector<std::string> ids{"f", "g", "h", "m", "p"};
  for (std::size_t k = 0; k < edges; ++k) {
    const auto& rule = ids[rng.below(ids.size())];
    std::vector<Entity> subjects{nodes[rng.below(n)]};
    if (rule == "p") subjects.push_back(nodes[rng.below(n)]);
    std::vector<Entity> objects{nodes[rng.below(n)]};
    if (rule == "m" && rng.below(2) == 0) {
      const auto& extra = nodes[rng.below(n)];
      if (extra.key != objects[0].key) objects.push_back(extra);
    }
    g.add_edge(graph_rules(), subjects, rule, objects);
  }
  return g;
}

using Seq = std::vector<Triplet>;

/// Every single-object view of every edge.
inline std::vector<Triplet> all_triplets(const Pkg& g) {
  std::vector<Triplet> out;
  for (const auto& e : g.edges()) {
    for (const auto& o : e.objects) {
      Triplet t;
      for (const auto& s : e.subjects) t.subjects.push_back(g.node(s));
      t.rule_id = e.rule_id;
      t.object = g.node(o);
      out.push_back(t);
    }
  }
  return out;
}

inline bool distinct(const Seq& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      if (s[i] == s[j]) return false;
    }
  }
  return true;
}

inline bool linked(const Seq& s, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i + 1 < to; ++i) {
    if (s[i].object.ref() != s[i + 1].subjects[0].ref()) return false;
  }
  return true;
}

/// All tuples of `len` triplets drawn from `pool`, filtered by `keep`.
/// Tuples whose last element repeats an earlier one are cut early; that is
/// the only pruning.
template <class Keep>
void tuples(const std::vector<Triplet>& pool, std::size_t len, Seq& cur, const Keep& keep,
            std::vector<Seq>& out) {
  if (cur.size() == len) {
    if (keep(cur)) out.push_back(cur);
    return;
  }
  for (const auto& t : pool) {
    if (std::find(cur.begin(), cur.end(), t) != cur.end()) continue;
    cur.push_back(t);
    tuples(pool, len, cur, keep, out);
    cur.pop_back();
  }
}

inline std::vector<Seq> multihop(const Pkg& g, int n) {
  std::vector<Triplet> single;
  for (auto& t : all_triplets(g)) {
    if (t.subjects.size() == 1) single.push_back(t);
  }
  std::vector<Seq> out;
  Seq cur;
  tuples(single, static_cast<std::size_t>(n), cur,
         [&](const Seq& s) { return distinct(s) && linked(s, 0, s.size()); }, out);
  return out;
}

/// Layout: A parent-1 hops, B parent-2 hops, pivot, C child hops.
inline std::vector<Seq> abc(const Pkg& g, int a, int b, int c) {
  const auto all = all_triplets(g);
  const auto A = static_cast<std::size_t>(a), B = static_cast<std::size_t>(b), C = static_cast<std::size_t>(c);
  std::vector<Seq> out;
  Seq cur;
  tuples(all, A + B + C + 1, cur,
         [&](const Seq& s) {
           for (std::size_t i = 0; i < s.size(); ++i) {
             if ((s[i].subjects.size() == 2) != (i == A + B)) return false;
           }
           const auto& pivot = s[A + B];
           return distinct(s) && linked(s, 0, A) && linked(s, A, A + B) && linked(s, A + B + 1, s.size()) &&
                  s[A - 1].object.ref() == pivot.subjects[0].ref() &&
                  s[A + B - 1].object.ref() == pivot.subjects[1].ref() &&
                  (C == 0 || pivot.object.ref() == s[A + B + 1].subjects[0].ref());
         },
         out);
  return out;
}

inline std::string signature(const Seq& s) {
  std::string out;
  for (const auto& t : s) {
    for (const auto& e : t.subjects) out += e.key + "+";
    out += "|" + t.rule_id + "|" + t.object.key + ";";
  }
  return out;
}

inline std::multiset<std::string> as_set(const std::vector<Seq>& v) {
  std::multiset<std::string> s;
  for (const auto& q : v) s.insert(signature(q));
  return s;
}

inline std::multiset<std::string> as_set(const std::vector<DataChain>& chains) {
  std::multiset<std::string> s;
  for (const auto& c : chains) s.insert(signature(c.triplets));
  return s;
}

/// Counts sentences as runs ending in '.', '!' or '?' followed by a space or
/// the end of the text.
inline int sentence_count(const std::string& text) {
  int n = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || text[i + 1] == ' ')) ++n;
  }
  return n;
}

inline std::string fill(const std::string& tmpl, const Triplet& t) {
  std::string out = tmpl;
  auto put = [&](const std::string& slot, const std::string& value) {
    for (auto at = out.find(slot); at != std::string::npos; at = out.find(slot, at + value.size())) {
      out.replace(at, slot.size(), value);
    }
  };
  for (std::size_t i = 0; i < t.subjects.size(); ++i) put("{" + std::to_string(i) + "}", t.subjects[i].surface);
  put("{object}", t.object.surface);
  return out;
}

/// Independent restatement of the method/degree/format rules. Returns an
/// empty string when the distractor is valid.
inline std::string distractor_violation(const Distractor& d, const RuleSet& rules) {
  const auto& o = d.original;
  const auto& e = d.edited;
  if (o.rule_id != e.rule_id || o.subjects.size() != e.subjects.size()) return "shape";
  std::vector<std::pair<const Entity*, const Entity*>> changed;
  int subjects_changed = 0;
  for (std::size_t i = 0; i < o.subjects.size(); ++i) {
    if (o.subjects[i].key != e.subjects[i].key) {
      changed.push_back({&o.subjects[i], &e.subjects[i]});
      ++subjects_changed;
    } else if (!(o.subjects[i] == e.subjects[i])) {
      return "subject altered in place";
    }
  }
  const bool object_changed = o.object.key != e.object.key;
  if (object_changed) changed.push_back({&o.object, &e.object});
  else if (!(o.object == e.object)) return "object altered in place";

  switch (d.method) {
    case Method::kObject:
      if (subjects_changed != 0 || !object_changed) return "object method";
      break;
    case Method::kSubject:
      if (subjects_changed != 1 || object_changed) return "subject method";
      break;
    case Method::kIndirect:
      if (subjects_changed != 1 || !object_changed) return "indirect method";
      break;
  }
  for (const auto& [before, after] : changed) {
    const bool same_type = before->type == after->type;
    if (d.degree == Degree::kTypeMatch && !same_type) return "type match crossed types";
    if (d.degree == Degree::kTypeShift && same_type) return "type shift kept a type";
    if (!rules.has_type(after->type)) return "unknown replacement type";
  }
  const auto& rule = rules.rule(e.rule_id);
  const auto statement = fill(rule.statement_template, e);
  if (d.statement.rfind(statement, 0) != 0) return "statement does not render the edited triplet";
  if (d.format == Format::kSingleSentence) {
    if (d.text != d.statement) return "single sentence text differs from statement";
  } else {
    const int n = sentence_count(d.text);
    if (n < 3 || n > 5) return "paragraph has " + std::to_string(n) + " sentences";
    if (d.text.find(d.statement) == std::string::npos) return "paragraph lacks the statement";
    if (d.text.find(e.object.surface) == std::string::npos) return "paragraph lacks the edited object";
  }
  return {};
}

}  // namespace kcp::oracle
