#include <gtest/gtest.h>

#include "fixtures.h"
#include "kcprobe/distractors.h"
#include "kcprobe/error.h"
#include "kcprobe/simulated.h"
#include "oracles.h"

using namespace kcp;
using kcp::testing::E;

namespace {

const RuleSet& rules() { return default_rule_set(); }

/// (United States, capital-is, Washington DC) -> (Washington DC, tallest-building, ...).
DataChain us_chain() {
  return make_chain(ChainKind::multi_hop(2),
                    {Triplet{{E("US", "Country")}, "capital-is", E("Washington DC", "City")},
                     Triplet{{E("Washington DC", "City")}, "tallest-building", E("The Washington Monument", "Building")}});
}

EntityPool pool_of(const nlohmann::json& j) {
  EntityPool p;
  p.add_json(j);
  return p;
}

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

TEST(MakeDistractor, ObjectTypeMatchUsesSameTypePool) {
  const auto pool = pool_of({{"City", {"Beijing"}}, {"Animal", {"Elephant"}}});
  const auto d = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 1);
  EXPECT_EQ(d.edited.object.surface, "Beijing");
  EXPECT_EQ(d.edited.subjects, d.original.subjects);
  EXPECT_EQ(d.text, "The capital of US is Beijing.");
  EXPECT_EQ(oracle::distractor_violation(d, rules()), "");
}

TEST(MakeDistractor, ObjectTypeShiftCrossesType) {
  const auto pool = pool_of({{"City", {"Beijing"}}, {"Animal", {"Elephant"}}});
  const auto d = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeShift, pool, rules(), 1);
  EXPECT_EQ(d.edited.object.surface, "Elephant");
  EXPECT_EQ(d.edited.object.type, "Animal");
  EXPECT_EQ(d.text, "The capital of US is Elephant.");
  EXPECT_FALSE(check_distractor(d).has_value());
}

TEST(MakeDistractor, SubjectMethodKeepsObject) {
  const auto chain = make_chain(
      ChainKind::multi_hop(2), {Triplet{{E("Canada", "Country")}, "capital-is", E("Ottawa", "City")},
                                Triplet{{E("Ottawa", "City")}, "mayor-of", E("Mark Sutcliffe", "Person")}});
  const auto pool = pool_of({{"City", {"New York"}}});
  const auto d = make_distractor(chain, 1, Method::kSubject, Degree::kTypeMatch, pool, rules(), 4);
  EXPECT_EQ(d.edited.subjects[0].surface, "New York");
  EXPECT_EQ(d.edited.object, d.original.object);
  EXPECT_EQ(d.text, "The mayor of New York is Mark Sutcliffe.");
  EXPECT_EQ(d.position.str(), "Hop2");
}

TEST(MakeDistractor, PivotSubjectMethodReplacesExactlyOneSlot) {
  const auto chain = make_chain(
      ChainKind::abc(1, 1, 0),
      {Triplet{{E("Canada", "Country")}, "capital-is", E("Ottawa", "City")},
       Triplet{{E("Parliament Hill", "Building")}, "completion-year", E("2020", "Year")},
       Triplet{{E("Ottawa", "City"), E("2020", "Year")}, "mayor-in-year", E("Jim Watson", "Person")}});
  const auto pool = pool_of({{"City", {"New York", "Toronto"}}, {"Year", {"1999", "2005"}}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = make_distractor(chain, 2, Method::kSubject, Degree::kTypeMatch, pool, rules(), seed);
    EXPECT_EQ(oracle::distractor_violation(d, rules()), "");
    EXPECT_EQ(d.replaced_entities().size(), 1u);
    EXPECT_EQ(d.position.str(), "Pivot");
  }
}

TEST(MakeDistractor, IndirectChangesSubjectAndObject) {
  const auto pool = pool_of({{"Country", {"France", "Japan"}}, {"City", {"Beijing", "Tokyo"}}});
  const auto d = make_distractor(us_chain(), 0, Method::kIndirect, Degree::kTypeMatch, pool, rules(), 2);
  EXPECT_NE(d.edited.subjects[0].key, d.original.subjects[0].key);
  EXPECT_NE(d.edited.object.key, d.original.object.key);
  EXPECT_EQ(oracle::distractor_violation(d, rules()), "");
}

TEST(MakeDistractor, EmptyPoolIsPoolExhausted) {
  const auto pool = pool_of({{"City", {"Washington DC"}}});  // only the original itself
  EXPECT_EQ(code_of([&] { make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 1); }),
            ErrorCode::kPoolExhausted);
  EXPECT_EQ(code_of([&] { make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeShift, pool, rules(), 1); }),
            ErrorCode::kPoolExhausted);
}

TEST(MakeDistractor, SeededAndDeterministic) {
  const auto pool = pool_of({{"City", {"Beijing", "Tokyo", "Lima", "Oslo", "Rome"}}});
  const auto a = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 7);
  const auto b = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 7);
  EXPECT_EQ(a, b);
}

TEST(MakeDistractor, LlmModeRetriesUntilValid) {
  auto backend = kcp::testing::sequence_backend(
      {"Sure! {\"subjects\": [\"US\"], \"object\": \"Washington DC\"}",  // unchanged: rejected
       "{\"subjects\": [\"US\"], \"object\": \"Shanghai\"}"});
  LlmDistractorOptions llm{&backend};
  const auto d = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, EntityPool{}, rules(), 1, &llm);
  EXPECT_EQ(d.edited.object.surface, "Shanghai");
  EXPECT_EQ(d.provenance, Provenance::kLlm);
  EXPECT_EQ(backend.calls, 2);
}

TEST(MakeDistractor, LlmModeGivesUpAfterThreeRetries) {
  auto backend = kcp::testing::sequence_backend({"no idea"});
  LlmDistractorOptions llm{&backend};
  EXPECT_EQ(code_of([&] {
              make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, EntityPool{}, rules(), 1, &llm);
            }),
            ErrorCode::kGenerationRejected);
  EXPECT_EQ(backend.calls, 4);
}

TEST(RenderText, FigureWording) {
  EXPECT_EQ(render_text(Triplet{{E("US", "Country")}, "capital-is", E("Beijing", "City")}, rules()),
            "The capital of US is Beijing.");
}

TEST(RenderText, TwoSubjectRuleNamesBoth) {
  const auto t = Triplet{{E("Acme", "Company"), E("1999", "Year")}, "ceo-in-year", E("Jane Roe", "Person")};
  const auto text = render_text(t, rules());
  EXPECT_NE(text.find("Acme"), std::string::npos);
  EXPECT_NE(text.find("1999"), std::string::npos);
  EXPECT_EQ(text, render_text(t, rules()));
}

TEST(RenderText, MissingTemplateIsTemplateMissing) {
  const RuleSet bare("bare", {{"A", ""}}, {{"r", {"A"}, "r", "A", "What is the r of {0}?", ""}});
  const auto t = Triplet{{Entity::make("x", "A")}, "r", Entity::make("y", "A")};
  EXPECT_EQ(code_of([&] { render_text(t, bare); }), ErrorCode::kTemplateMissing);
}

TEST(ToParagraph, StatementLeadsThreeToFiveSentences) {
  const auto pool = pool_of({{"City", {"Boston"}}});
  const auto chain = make_chain(ChainKind::multi_hop(2),
                                {Triplet{{E("Theodore Roosevelt", "Person")}, "born-in", E("New York City", "City")},
                                 Triplet{{E("New York City", "City")}, "country-of-city", E("United States", "Country")}});
  const auto d = make_distractor(chain, 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 1);
  EXPECT_EQ(d.text, "Theodore Roosevelt was born in Boston.");
  const auto p = to_paragraph(d, rules(), 5);
  EXPECT_EQ(p.format, Format::kParagraph);
  EXPECT_NE(p.text.find("born in Boston"), std::string::npos);
  const int n = oracle::sentence_count(p.text);
  EXPECT_GE(n, 3);
  EXPECT_LE(n, 5);
  EXPECT_EQ(p, to_paragraph(d, rules(), 5));
  EXPECT_EQ(p.edited, d.edited);
}

TEST(ToParagraph, LlmParagraphMissingObjectIsRejected) {
  const auto pool = pool_of({{"City", {"Beijing"}}});
  const auto d = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 1);
  auto backend = kcp::testing::sequence_backend({"It is a city. It is big. It is old."});
  LlmDistractorOptions llm{&backend};
  EXPECT_EQ(code_of([&] { to_paragraph(d, rules(), 1, &llm); }), ErrorCode::kGenerationRejected);
}

TEST(ToParagraph, TwoHundredRandomParagraphsAreWellFormed) {
  WorldParams wp;
  wp.entities_per_type = 6;
  wp.seed = 21;
  const auto world = make_synthetic_world(rules(), wp);
  const auto pool = EntityPool::from_pkg(world);
  const auto chains = enumerate_multihop(world, 2, 40, 1);
  int made = 0;
  for (std::size_t i = 0; made < 200; ++i) {
    const auto& chain = chains.at(i % chains.size());
    const Method m = kMethods[i % 3];
    const Degree g = kDegrees[(i / 3) % 2];
    const auto d = make_distractor(chain, static_cast<int>(i % chain.hop_count()), m, g, pool, rules(), i);
    const auto p = to_paragraph(d, rules(), i);
    ASSERT_EQ(oracle::distractor_violation(p, rules()), "") << p.text;
    ++made;
  }
}

TEST(PlanDistractorSet, SixSpecsPerHop) {
  const auto g = kcp::testing::world_facts();
  EXPECT_EQ(plan_distractor_set(kcp::testing::jackie_chain(g)).size(), 18u);
  EXPECT_EQ(plan_distractor_set(us_chain()).size(), 12u);
  DataChain four = make_chain(ChainKind::multi_hop(4),
                              {Triplet{{E("a", "Person")}, "nationality", E("b", "Country")},
                               Triplet{{E("b", "Country")}, "capital-is", E("c", "City")},
                               Triplet{{E("c", "City")}, "mayor-of", E("d", "Person")},
                               Triplet{{E("d", "Person")}, "born-in", E("e", "City")}});
  const auto specs = plan_distractor_set(four);
  EXPECT_EQ(specs.size(), 24u);
  EXPECT_EQ(specs.size() * four.hop_count(), 96u);
  std::set<std::tuple<int, int, int>> distinct;
  for (const auto& s : specs) distinct.insert({s.hop_index, int(s.method), int(s.degree)});
  EXPECT_EQ(distinct.size(), 24u);
}

TEST(Distractors, JsonlRoundTrip) {
  const auto pool = pool_of({{"City", {"Beijing"}}});
  const auto d = make_distractor(us_chain(), 0, Method::kObject, Degree::kTypeMatch, pool, rules(), 1);
  const std::vector<Distractor> ds{d, to_paragraph(d, rules(), 1)};
  const auto path = (std::filesystem::temp_directory_path() / "kcp_distractors.jsonl").string();
  save_distractors(ds, path);
  EXPECT_EQ(load_distractors(path), ds);
}
