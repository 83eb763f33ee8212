#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "fixtures.h"
#include "kcprobe/chains.h"
#include "kcprobe/error.h"
#include "oracles.h"

using namespace kcp;
namespace oracle = kcp::oracle;

namespace {

Entity N(const std::string& s) { return Entity::make(s, "N"); }

void link(Pkg& g, const std::string& s, const std::string& rule, const std::string& o) {
  const Entity a = N(s), b = N(o);
  g.add_edge(oracle::graph_rules(), std::span(&a, 1), rule, std::span(&b, 1));
}

void pair_link(Pkg& g, const std::string& s1, const std::string& s2, const std::string& o) {
  const std::vector<Entity> subj{N(s1), N(s2)};
  const Entity b = N(o);
  g.add_edge(oracle::graph_rules(), subj, "p", std::span(&b, 1));
}

Pkg line(int nodes) {
  Pkg g(oracle::graph_rules().id(), N("v0"));
  for (int i = 0; i + 1 < nodes; ++i) link(g, "v" + std::to_string(i), "f", "v" + std::to_string(i + 1));
  return g;
}

std::vector<std::string> labels(const DataChain& c) {
  std::vector<std::string> out;
  for (const auto& l : c.labels) out.push_back(l.str());
  return out;
}

}  // namespace

TEST(Multihop, LineOfFourHasTwoTwoHopChains) {
  const auto chains = enumerate_multihop(line(4), 2);
  ASSERT_EQ(chains.size(), 2u);
  for (const auto& c : chains) EXPECT_NO_THROW(validate_chain(c));
}

TEST(Multihop, SingleEdgeHasNoTwoHopChain) { EXPECT_TRUE(enumerate_multihop(line(2), 2).empty()); }

TEST(Multihop, EmptyGraphIsEmpty) {
  const Pkg g(oracle::graph_rules().id(), N("v0"));
  EXPECT_TRUE(enumerate_multihop(g, 3).empty());
  EXPECT_EQ(count_structures(g), (StructureStats{1, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(Multihop, LineOfFiveCounts) {
  const auto s = count_structures(line(5));
  EXPECT_EQ(s.hop2, 3u);
  EXPECT_EQ(s.hop3, 2u);
  EXPECT_EQ(s.hop4, 1u);
}

TEST(Multihop, LabelsAndAdjacency) {
  const auto chains = enumerate_multihop(line(5), 3);
  ASSERT_FALSE(chains.empty());
  EXPECT_EQ(labels(chains[0]), (std::vector<std::string>{"Hop1", "Hop2", "Hop3"}));
  for (const auto& c : chains) {
    for (std::size_t i = 1; i < c.hop_count(); ++i) {
      EXPECT_EQ(c.triplets[i - 1].object, c.triplets[i].subjects[0]);
      EXPECT_EQ(c.subject_sources[i], std::vector<int>{static_cast<int>(i - 1)});
    }
  }
}

TEST(Multihop, CycleTerminatesWithoutRepeatedTriplets) {
  Pkg g(oracle::graph_rules().id(), N("a"));
  link(g, "a", "f", "b");
  link(g, "b", "f", "a");
  // Paths: a->b->a and b->a->b; a third hop would repeat a triplet.
  EXPECT_EQ(enumerate_multihop(g, 2).size(), 2u);
  EXPECT_TRUE(enumerate_multihop(g, 3).empty());
}

TEST(Multihop, MultiChildFansOut) {
  Pkg g(oracle::graph_rules().id(), N("a"));
  const Entity a = N("a");
  const std::vector<Entity> kids{N("b"), N("c")};
  g.add_edge(oracle::graph_rules(), std::span(&a, 1), "m", kids);
  link(g, "b", "f", "d");
  link(g, "c", "f", "d");
  EXPECT_EQ(enumerate_multihop(g, 2).size(), 2u);
  EXPECT_EQ(count_structures(g).multi_child_relations, 1u);
}

TEST(MultiDependent, OneOneZeroLabels) {
  Pkg g(oracle::graph_rules().id(), N("x"));
  link(g, "x", "f", "s1");
  link(g, "y", "g", "s2");
  pair_link(g, "s1", "s2", "z");
  const auto chains = enumerate_multidependent(g, 1, 1, 0);
  ASSERT_EQ(chains.size(), 1u);
  EXPECT_EQ(chains[0].hop_count(), 3u);
  EXPECT_EQ(labels(chains[0]), (std::vector<std::string>{"Par1-Hop1", "Par2-Hop1", "Pivot"}));
  EXPECT_EQ(chains[0].subject_sources[2], (std::vector<int>{0, 1}));
  EXPECT_NO_THROW(validate_chain(chains[0]));
}

TEST(MultiDependent, OneTwoZeroLabels) {
  Pkg g(oracle::graph_rules().id(), N("x"));
  link(g, "x", "f", "s1");
  link(g, "w", "h", "y");
  link(g, "y", "g", "s2");
  pair_link(g, "s1", "s2", "z");
  const auto chains = enumerate_multidependent(g, 1, 2, 0);
  ASSERT_EQ(chains.size(), 1u);
  EXPECT_EQ(chains[0].hop_count(), 4u);
  EXPECT_EQ(labels(chains[0]), (std::vector<std::string>{"Par1-Hop1", "Par2-Hop1", "Par2-Hop2", "Pivot"}));
  EXPECT_EQ(chains[0].subject_sources[3], (std::vector<int>{0, 2}));
}

TEST(MultiDependent, OneOneOneHasChildHop) {
  Pkg g(oracle::graph_rules().id(), N("x"));
  link(g, "x", "f", "s1");
  link(g, "y", "g", "s2");
  pair_link(g, "s1", "s2", "z");
  link(g, "z", "h", "q");
  const auto chains = enumerate_multidependent(g, 1, 1, 1);
  ASSERT_EQ(chains.size(), 1u);
  EXPECT_EQ(labels(chains[0]), (std::vector<std::string>{"Par1-Hop1", "Par2-Hop1", "Pivot", "Child-Hop1"}));
  EXPECT_EQ(chains[0].subject_sources[3], std::vector<int>{2});
}

TEST(MultiDependent, ZeroParentIsInvalidSpec) {
  const auto g = line(3);
  for (auto [a, b, c] : {std::tuple{0, 1, 0}, std::tuple{1, 0, 0}, std::tuple{1, 1, -1}}) {
    try {
      enumerate_multidependent(g, a, b, c);
      ADD_FAILURE() << "accepted " << a << b << c;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidSpec);
    }
  }
}

TEST(ChainKind, NamesRoundTrip) {
  for (const auto& k : {ChainKind::multi_hop(2), ChainKind::multi_hop(4), ChainKind::abc(1, 1, 0),
                        ChainKind::abc(1, 2, 0)}) {
    EXPECT_EQ(ChainKind::parse(k.name()), k);
  }
  EXPECT_EQ(ChainKind::abc(1, 1, 1).name(), "1-1-1");
  EXPECT_EQ(ChainKind::multi_hop(3).name(), "3-hop");
}

TEST(Sampling, DeterministicForSeedAndSortedById) {
  const auto g = oracle::random_graph(77, 12);
  const auto all = enumerate_multihop(g, 2);
  ASSERT_GT(all.size(), 3u);
  const auto a = enumerate_multihop(g, 2, 3, 9);
  const auto b = enumerate_multihop(g, 2, 3, 9);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(a[i - 1].id, a[i].id);
  const auto full = oracle::as_set(all);
  for (const auto& c : a) EXPECT_EQ(full.count(oracle::signature(c.triplets)), 1u);
}

TEST(Sampling, UniformAcrossSeeds) {
  // Each of the K paths should be drawn about limit/K of the time.
  const auto g = line(6);  // four 2-hop paths
  std::map<std::string, int> hits;
  const int trials = 2000;
  for (int s = 0; s < trials; ++s) {
    for (const auto& c : enumerate_multihop(g, 2, 2, static_cast<std::uint64_t>(s))) ++hits[c.id];
  }
  ASSERT_EQ(hits.size(), 4u);
  for (const auto& [id, n] : hits) EXPECT_NEAR(n, trials / 2, trials * 0.05) << id;
}

TEST(Oracle, MultihopMatchesBruteForceOnRandomGraphs) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto g = oracle::random_graph(seed, 12);
    for (int n = 2; n <= 4; ++n) {
      const auto got = enumerate_multihop(g, n);
      EXPECT_EQ(oracle::as_set(got), oracle::as_set(oracle::multihop(g, n))) << "seed " << seed << " n " << n;
      for (const auto& c : got) EXPECT_NO_THROW(validate_chain(c));
    }
    const auto s = count_structures(g);
    EXPECT_EQ(s.hop3, oracle::multihop(g, 3).size());
  }
}

TEST(Oracle, MultiDependentMatchesBruteForceOnRandomGraphs) {
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto g = oracle::random_graph(seed, 10);
    for (auto [a, b, c] : {std::tuple{1, 1, 0}, std::tuple{1, 1, 1}, std::tuple{1, 2, 0}}) {
      const auto got = enumerate_multidependent(g, a, b, c);
      EXPECT_EQ(oracle::as_set(got), oracle::as_set(oracle::abc(g, a, b, c)))
          << "seed " << seed << " " << a << b << c;
      for (const auto& ch : got) EXPECT_NO_THROW(validate_chain(ch));
      total += got.size();
    }
  }
  EXPECT_GT(total, 40u);  // the comparison must not be vacuous
}

TEST(ValidateChain, RejectsBrokenAdjacency) {
  const auto g = line(4);
  auto c = enumerate_multihop(g, 2).at(0);
  std::swap(c.triplets[0], c.triplets[1]);
  EXPECT_THROW(validate_chain(c), Error);
}

TEST(ChainsIo, JsonlRoundTrip) {
  const auto g = oracle::random_graph(5, 12);
  auto chains = enumerate_multihop(g, 3);
  const auto md = enumerate_multidependent(g, 1, 1, 0);
  chains.insert(chains.end(), md.begin(), md.end());
  const auto path = (std::filesystem::temp_directory_path() / "kcp_chains_test.jsonl").string();
  save_chains(chains, path);
  EXPECT_EQ(load_chains(path), chains);
  std::remove(path.c_str());
}
