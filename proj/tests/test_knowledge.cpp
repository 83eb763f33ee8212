#include <gtest/gtest.h>

#include "fixtures.h"
#include "kcprobe/error.h"
#include "kcprobe/knowledge.h"
#include "kcprobe/rng.h"
#include "kcprobe/text.h"

using namespace kcp;
using kcp::testing::E;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no kcp::Error thrown";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(CanonicalKey, Examples) {
  EXPECT_EQ(canonical_key("The United States."), "united states");
  EXPECT_EQ(canonical_key("Ottawa"), "ottawa");
  EXPECT_EQ(canonical_key("  Washington   DC "), "washington dc");
}

TEST(CanonicalKey, EmptyAfterNormalizationIsInvalid) {
  EXPECT_EQ(code_of([] { canonical_key("   "); }), ErrorCode::kInvalidEntity);
  EXPECT_EQ(code_of([] { canonical_key(" . ! "); }), ErrorCode::kInvalidEntity);
}

TEST(CanonicalKey, IdempotentOnRandomStrings) {
  Rng rng(5);
  const std::string alphabet = "abcXYZ .,!?;:the an A\t";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const auto len = 1 + rng.below(20);
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng.below(alphabet.size())];
    std::string once;
    try {
      once = canonical_key(s);
    } catch (const Error&) {
      continue;
    }
    EXPECT_EQ(canonical_key(once), once) << "input: '" << s << "'";
  }
}

TEST(AddEdge, SingleInsertionOnRootedGraph) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  const Entity s = E("Canada", "Country"), o = E("Ottawa", "City");
  EXPECT_EQ(g.add_edge(rules, std::span(&s, 1), "capital-is", std::span(&o, 1)), AddResult::kAdded);
  EXPECT_EQ(g.nodes().size(), 2u);
  EXPECT_EQ(g.edges().size(), 1u);
}

TEST(AddEdge, ReAddIsNoOp) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  const Entity s = E("Canada", "Country"), o = E("Ottawa", "City");
  g.add_edge(rules, std::span(&s, 1), "capital-is", std::span(&o, 1));
  const auto before = g.serialize();
  EXPECT_EQ(g.add_edge(rules, std::span(&s, 1), "capital-is", std::span(&o, 1)), AddResult::kUnchanged);
  EXPECT_EQ(g.serialize(), before);
}

TEST(AddEdge, TypeMismatchIsRuleViolationAndLeavesGraphUntouched) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  const auto before = g.serialize();
  const Entity s = E("Canada", "Country"), o = E("1867", "Year");
  EXPECT_EQ(code_of([&] { g.add_edge(rules, std::span(&s, 1), "capital-is", std::span(&o, 1)); }),
            ErrorCode::kRuleViolation);
  EXPECT_EQ(g.serialize(), before);
}

TEST(AddEdge, NewObjectMergesIntoMultiChildEdge) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  const Entity s = E("Canada", "Country");
  const Entity en = E("English", "Language"), fr = E("French", "Language");
  g.add_edge(rules, std::span(&s, 1), "official-language", std::span(&en, 1));
  EXPECT_EQ(g.add_edge(rules, std::span(&s, 1), "official-language", std::span(&fr, 1)), AddResult::kMerged);
  ASSERT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.edges()[0].objects.size(), 2u);
}

TEST(Neighbors, LineGraph) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  kcp::testing::fact(g, "Canada", "Country", "capital-is", "Ottawa", "City");
  kcp::testing::fact(g, "Ottawa", "City", "mayor-of", "Mark Sutcliffe", "Person");
  const NodeRef a{"canada", "Country"};
  const auto out = g.neighbors(std::span(&a, 1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].rule_id, "capital-is");
  EXPECT_TRUE(g.neighbors(std::span(&a, 1), std::string_view("national-sport")).empty());
}

TEST(Neighbors, MultiChildIsOneEdge) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  const Entity s = E("Canada", "Country");
  const std::vector<Entity> langs{E("English", "Language"), E("French", "Language")};
  g.add_edge(rules, std::span(&s, 1), "official-language", langs);
  const NodeRef a = s.ref();
  const auto out = g.neighbors(std::span(&a, 1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].objects.size(), 2u);
}

TEST(Neighbors, UnknownSubjectIsNotFound) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  const NodeRef missing{"atlantis", "Country"};
  EXPECT_EQ(code_of([&] { g.neighbors(std::span(&missing, 1)); }), ErrorCode::kNotFound);
}

TEST(Pkg, SerializeRoundTripIsByteStable) {
  const auto g = kcp::testing::world_facts();
  const auto once = g.serialize();
  const auto again = Pkg::deserialize(once).serialize();
  EXPECT_EQ(once, again);
  EXPECT_EQ(Pkg::deserialize(once), g);
}

TEST(Pkg, SameSurfaceUnderTwoTypesIsTwoNodes) {
  const auto& rules = default_rule_set();
  Pkg g(rules.id(), E("Canada", "Country"));
  g.add_node(rules, E("Georgia", "Country"));
  g.add_node(rules, E("Georgia", "City"));
  EXPECT_EQ(g.nodes().size(), 3u);
}

TEST(Pkg, RandomRuleConformantEdgesKeepInvariants) {
  const auto& rules = default_rule_set();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::map<std::string, std::vector<Entity>> pool;
    for (const auto& t : rules.types()) {
      for (int i = 0; i < 4; ++i) pool[t.name].push_back(E(t.name + " " + std::to_string(i), t.name));
    }
    Pkg g(rules.id(), pool["Country"][0]);
    for (int step = 0; step < 60; ++step) {
      const auto& rule = rules.rules()[rng.below(rules.rules().size())];
      std::vector<Entity> subjects;
      for (const auto& st : rule.source_types) subjects.push_back(pool[st][rng.below(4)]);
      std::vector<Entity> objects{pool[rule.target_type][rng.below(4)]};
      g.add_edge(rules, subjects, rule.id, objects);
    }
    EXPECT_NO_THROW(g.validate(rules));
    EXPECT_EQ(Pkg::deserialize(g.serialize()).serialize(), g.serialize());
  }
}

TEST(RuleSet, DefaultHasRequiredShape) {
  const auto& rules = default_rule_set();
  EXPECT_GE(rules.types().size(), 6u);
  EXPECT_GE(rules.rules().size(), 12u);
  int multi_dep = 0, multi_child = 0;
  for (const auto& r : rules.rules()) {
    multi_dep += r.multi_dependent() ? 1 : 0;
    multi_child += r.multi_valued ? 1 : 0;
    const auto q = inspect_template(r.question_template);
    EXPECT_EQ(static_cast<std::size_t>(q.subject_slots), r.arity()) << r.id;
  }
  EXPECT_GE(multi_dep, 2);
  EXPECT_GE(multi_child, 1);
}

TEST(RuleSet, RejectsUnknownTypesAndDuplicateIds) {
  std::vector<EntityType> types{{"A", ""}, {"B", ""}};
  RelationRule r{"r", {"A"}, "to", "C", "What is {0}?", "{0} is {object}."};
  EXPECT_EQ(code_of([&] { RuleSet("x", types, {r}); }), ErrorCode::kRuleViolation);
  r.target_type = "B";
  EXPECT_EQ(code_of([&] { RuleSet("x", types, {r, r}); }), ErrorCode::kRuleViolation);
  RelationRule bad_arity{"q", {"A"}, "to", "B", "What is {0} and {1}?", "{0} is {object}."};
  EXPECT_EQ(code_of([&] { RuleSet("x", types, {bad_arity}); }), ErrorCode::kRuleViolation);
}
