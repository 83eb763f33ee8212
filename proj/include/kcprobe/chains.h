#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcprobe/knowledge.h"

namespace kcp {

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

/// One hop of a chain: a single-object view of an edge.
struct Triplet {
  std::vector<Entity> subjects;
  std::string rule_id;
  Entity object;

  std::vector<NodeRef> subject_refs() const;
  bool operator==(const Triplet&) const = default;
};

struct ChainKind {
  bool multi_dependent = false;
  int hops = 0;  // multi-hop length
  int a = 0, b = 0, c = 0;

  static ChainKind multi_hop(int n) { return {false, n, 0, 0, 0}; }
  static ChainKind abc(int a, int b, int c) { return {true, a + b + c + 1, a, b, c}; }

  int hop_count() const { return hops; }
  /// Index of the two-subject hop; -1 for multi-hop chains.
  int pivot_index() const { return multi_dependent ? a + b : -1; }
  /// "2-hop", "1-1-0", ...
  std::string name() const;
  static ChainKind parse(const std::string& name);

  auto operator<=>(const ChainKind&) const = default;
};

struct PositionLabel {
  enum class Part { kHop, kPar1, kPar2, kPivot, kChild };
  Part part = Part::kHop;
  int hop = 1;  // 1-based within the part; unused for the pivot

  /// "Hop2", "Par1-Hop1", "Pivot", "Child-Hop1".
  std::string str() const;
  static PositionLabel parse(const std::string& s);

  auto operator<=>(const PositionLabel&) const = default;
};

std::vector<PositionLabel> position_labels(const ChainKind& kind);

struct DataChain {
  std::string id;
  ChainKind kind;
  std::vector<Triplet> triplets;
  std::vector<PositionLabel> labels;
  /// Per hop and subject: index of the earlier hop whose answer is used as
  /// this subject when querying, or -1 when the chain supplies the entity.
  std::vector<std::vector<int>> subject_sources;

  std::size_t hop_count() const { return triplets.size(); }
  const Entity& terminal() const { return triplets.back().object; }
  bool operator==(const DataChain&) const = default;
};

/// Fills labels, subject_sources and id from kind and triplets.
DataChain make_chain(ChainKind kind, std::vector<Triplet> triplets);

/// Throws kInvalidArgument when adjacency, pivot arity, label coverage or
/// triplet uniqueness is violated.
void validate_chain(const DataChain& chain);

/// Simple paths of `n` single-subject hops (no repeated triplet); a
/// multi-child edge contributes one path per object. When more than
/// `limit` exist, a seeded uniform sample is returned. Output is sorted by id.
std::vector<DataChain> enumerate_multihop(const Pkg& graph, int n, std::size_t limit = kUnlimited,
                                          std::uint64_t seed = 0);

/// A-B-C structures around each two-subject edge. Throws kInvalidSpec when
/// A or B is below 1 or C is negative.
std::vector<DataChain> enumerate_multidependent(const Pkg& graph, int a, int b, int c,
                                                std::size_t limit = kUnlimited,
                                                std::uint64_t seed = 0);

std::vector<DataChain> enumerate_chains(const Pkg& graph, const ChainKind& kind,
                                        std::size_t limit = kUnlimited, std::uint64_t seed = 0);

struct StructureStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t multi_dependent_relations = 0;
  std::size_t multi_child_relations = 0;
  std::size_t hop2 = 0;
  std::size_t hop3 = 0;
  std::size_t hop4 = 0;
  std::size_t abc110 = 0;
  std::size_t abc111 = 0;
  std::size_t abc120 = 0;

  bool operator==(const StructureStats&) const = default;
};

StructureStats count_structures(const Pkg& graph);

void to_json(nlohmann::json& j, const Triplet& t);
void from_json(const nlohmann::json& j, Triplet& t);
void to_json(nlohmann::json& j, const DataChain& c);
void from_json(const nlohmann::json& j, DataChain& c);
void to_json(nlohmann::json& j, const StructureStats& s);

std::vector<DataChain> load_chains(const std::string& path);
void save_chains(const std::vector<DataChain>& chains, const std::string& path);

}  // namespace kcp
