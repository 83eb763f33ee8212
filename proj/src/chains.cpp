#include "kcprobe/chains.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/rng.h"
#include "kcprobe/text.h"

namespace kcp {

std::vector<NodeRef> Triplet::subject_refs() const {
  std::vector<NodeRef> out;
  for (const auto& s : subjects) out.push_back(s.ref());
  return out;
}

std::string ChainKind::name() const {
  if (!multi_dependent) return std::to_string(hops) + "-hop";
  return std::to_string(a) + "-" + std::to_string(b) + "-" + std::to_string(c);
}

ChainKind ChainKind::parse(const std::string& name) {
  try {
    if (name.size() > 4 && name.ends_with("-hop")) {
      const int n = std::stoi(name.substr(0, name.size() - 4));
      if (n >= 1) return multi_hop(n);
    }
    const auto parts = split(name, '-');
    if (parts.size() == 3) return abc(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]));
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown structure kind '" + name + "'");
}

std::string PositionLabel::str() const {
  const std::string h = "Hop" + std::to_string(hop);
  switch (part) {
    case Part::kHop: return h;
    case Part::kPar1: return "Par1-" + h;
    case Part::kPar2: return "Par2-" + h;
    case Part::kPivot: return "Pivot";
    case Part::kChild: return "Child-" + h;
  }
  return h;
}

PositionLabel PositionLabel::parse(const std::string& s) {
  if (s == "Pivot") return {Part::kPivot, 1};
  auto hop_of = [&](std::string_view rest) {
    if (!rest.starts_with("Hop")) throw Error(ErrorCode::kParseError, "position label " + s);
    try {
      return std::stoi(std::string(rest.substr(3)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParseError, "position label " + s);
    }
  };
  const std::string_view v(s);
  if (v.starts_with("Par1-")) return {Part::kPar1, hop_of(v.substr(5))};
  if (v.starts_with("Par2-")) return {Part::kPar2, hop_of(v.substr(5))};
  if (v.starts_with("Child-")) return {Part::kChild, hop_of(v.substr(6))};
  return {Part::kHop, hop_of(v)};
}

std::vector<PositionLabel> position_labels(const ChainKind& kind) {
  using P = PositionLabel::Part;
  std::vector<PositionLabel> out;
  if (!kind.multi_dependent) {
    for (int i = 1; i <= kind.hops; ++i) out.push_back({P::kHop, i});
    return out;
  }
  for (int i = 1; i <= kind.a; ++i) out.push_back({P::kPar1, i});
  for (int i = 1; i <= kind.b; ++i) out.push_back({P::kPar2, i});
  out.push_back({P::kPivot, 1});
  for (int i = 1; i <= kind.c; ++i) out.push_back({P::kChild, i});
  return out;
}

namespace {

std::string chain_id(const ChainKind& kind, const std::vector<Triplet>& triplets) {
  std::string material = kind.name();
  for (const auto& t : triplets) {
    material += '\x1e';
    for (const auto& s : t.subjects) material += s.key + '\x1f' + s.type + '\x1f';
    material += t.rule_id + '\x1f' + t.object.key + '\x1f' + t.object.type;
  }
  return hex64(fnv1a64(material));
}

}  // namespace

DataChain make_chain(ChainKind kind, std::vector<Triplet> triplets) {
  DataChain c;
  c.kind = kind;
  c.labels = position_labels(kind);
  const int pivot = kind.pivot_index();
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    std::vector<int> sources;
    if (static_cast<int>(k) == pivot) {
      sources = {kind.a - 1, kind.a + kind.b - 1};
    } else {
      for (const auto& s : triplets[k].subjects) {
        // An answer feeds the next hop only when that hop's chain subject is
        // the previous hop's object.
        const bool chained = k > 0 && triplets[k - 1].object.ref() == s.ref();
        sources.push_back(chained ? static_cast<int>(k) - 1 : -1);
      }
    }
    c.subject_sources.push_back(std::move(sources));
  }
  c.id = chain_id(kind, triplets);
  c.triplets = std::move(triplets);
  return c;
}

void validate_chain(const DataChain& chain) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kInvalidArgument, "chain " + chain.id + ": " + why);
  };
  const auto& k = chain.kind;
  if (static_cast<int>(chain.triplets.size()) != k.hop_count()) fail("hop count mismatch");
  if (chain.labels != position_labels(k)) fail("position labels do not cover the hops");
  if (chain.subject_sources.size() != chain.triplets.size()) fail("subject sources size");
  const int pivot = k.pivot_index();
  std::set<std::pair<std::vector<NodeRef>, std::pair<std::string, NodeRef>>> seen;
  for (std::size_t i = 0; i < chain.triplets.size(); ++i) {
    const auto& t = chain.triplets[i];
    const bool is_pivot = static_cast<int>(i) == pivot;
    if (t.subjects.size() != (is_pivot ? 2u : 1u)) fail("wrong subject arity at hop " + std::to_string(i));
    if (!seen.insert({t.subject_refs(), {t.rule_id, t.object.ref()}}).second) fail("repeated triplet");
    const auto& src = chain.subject_sources[i];
    if (src.size() != t.subjects.size()) fail("subject sources arity");
    for (std::size_t j = 0; j < src.size(); ++j) {
      if (src[j] < 0) continue;
      if (src[j] >= static_cast<int>(i)) fail("subject source points forward");
      if (chain.triplets[src[j]].object.ref() != t.subjects[j].ref()) fail("broken adjacency");
    }
  }
  if (!k.multi_dependent) {
    for (std::size_t i = 1; i < chain.triplets.size(); ++i) {
      if (chain.subject_sources[i] != std::vector<int>{static_cast<int>(i) - 1}) fail("not a path");
    }
    return;
  }
  // Within-part adjacency for parents and child.
  for (int i = 0; i < k.hop_count(); ++i) {
    const bool part_start = i == 0 || i == k.a || i == pivot;
    if (part_start || i == pivot) continue;
    if (chain.subject_sources[i] != std::vector<int>{i - 1}) fail("parent or child chain is broken");
  }
  if (chain.subject_sources[pivot] != std::vector<int>{k.a - 1, k.a + k.b - 1}) fail("pivot sources");
}

namespace {

struct HopIndex {
  std::vector<Triplet> hops;  // single-subject, one per object
  std::map<NodeRef, std::vector<std::size_t>> out;
  std::map<NodeRef, std::vector<std::size_t>> in;
  std::vector<Triplet> pivots;  // two-subject, one per object

  explicit HopIndex(const Pkg& g) {
    for (const auto& e : g.edges()) {
      std::vector<Entity> subjects;
      for (const auto& s : e.subjects) subjects.push_back(g.node(s));
      for (const auto& o : e.objects) {
        Triplet t{subjects, e.rule_id, g.node(o)};
        if (subjects.size() == 1) {
          out[subjects[0].ref()].push_back(hops.size());
          in[o].push_back(hops.size());
          hops.push_back(std::move(t));
        } else {
          pivots.push_back(std::move(t));
        }
      }
    }
  }

  const std::vector<std::size_t>& outgoing(const NodeRef& n) const {
    static const std::vector<std::size_t> kNone;
    auto it = out.find(n);
    return it == out.end() ? kNone : it->second;
  }
  const std::vector<std::size_t>& incoming(const NodeRef& n) const {
    static const std::vector<std::size_t> kNone;
    auto it = in.find(n);
    return it == in.end() ? kNone : it->second;
  }

  using Path = std::vector<std::size_t>;

  // Visits every simple path of `len` hops; `start` restricts the first
  // subject when non-null.
  void forward(const NodeRef* start, int len, const std::function<void(const Path&)>& emit) const {
    Path path;
    std::function<void(const NodeRef&)> step = [&](const NodeRef& at) {
      if (static_cast<int>(path.size()) == len) {
        emit(path);
        return;
      }
      for (const auto h : outgoing(at)) {
        if (std::find(path.begin(), path.end(), h) != path.end()) continue;
        path.push_back(h);
        step(hops[h].object.ref());
        path.pop_back();
      }
    };
    if (len == 0) {
      emit(path);
      return;
    }
    if (start) {
      step(*start);
      return;
    }
    for (std::size_t h = 0; h < hops.size(); ++h) {
      path.push_back(h);
      step(hops[h].object.ref());
      path.pop_back();
    }
  }

  // Simple paths of `len` hops ending at `end`, in forward order.
  std::vector<Path> ending_at(const NodeRef& end, int len) const {
    std::vector<Path> result;
    Path rev;
    std::function<void(const NodeRef&)> step = [&](const NodeRef& at) {
      if (static_cast<int>(rev.size()) == len) {
        result.emplace_back(rev.rbegin(), rev.rend());
        return;
      }
      for (const auto h : incoming(at)) {
        if (std::find(rev.begin(), rev.end(), h) != rev.end()) continue;
        rev.push_back(h);
        step(hops[h].subjects[0].ref());
        rev.pop_back();
      }
    };
    step(end);
    return result;
  }

  std::vector<Path> starting_at(const NodeRef& start, int len) const {
    std::vector<Path> result;
    forward(&start, len, [&](const Path& p) { result.push_back(p); });
    return result;
  }

  // Calls emit(pivot, par1, par2, child) for every disjoint combination.
  void abc(int a, int b, int c,
           const std::function<void(std::size_t, const Path&, const Path&, const Path&)>& emit) const {
    for (std::size_t p = 0; p < pivots.size(); ++p) {
      const auto& pv = pivots[p];
      const auto par1 = ending_at(pv.subjects[0].ref(), a);
      if (par1.empty()) continue;
      const auto par2 = ending_at(pv.subjects[1].ref(), b);
      if (par2.empty()) continue;
      const auto child = starting_at(pv.object.ref(), c);
      for (const auto& p1 : par1) {
        for (const auto& p2 : par2) {
          if (std::any_of(p2.begin(), p2.end(), [&](std::size_t h) {
                return std::find(p1.begin(), p1.end(), h) != p1.end();
              })) {
            continue;
          }
          for (const auto& ch : child) {
            const bool clash = std::any_of(ch.begin(), ch.end(), [&](std::size_t h) {
              return std::find(p1.begin(), p1.end(), h) != p1.end() ||
                     std::find(p2.begin(), p2.end(), h) != p2.end();
            });
            if (!clash) emit(p, p1, p2, ch);
          }
        }
      }
    }
  }
};

template <typename T>
void sample_in_place(std::vector<T>& items, std::size_t limit, std::uint64_t seed) {
  if (items.size() <= limit) return;
  Rng rng(seed);
  rng.shuffle(items);
  items.resize(limit);
}

void sort_by_id(std::vector<DataChain>& chains) {
  std::sort(chains.begin(), chains.end(),
            [](const DataChain& x, const DataChain& y) { return x.id < y.id; });
}

}  // namespace

std::vector<DataChain> enumerate_multihop(const Pkg& graph, int n, std::size_t limit,
                                          std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::kInvalidSpec, "hop count must be at least 1");
  const HopIndex index(graph);
  std::vector<HopIndex::Path> paths;
  index.forward(nullptr, n, [&](const HopIndex::Path& p) { paths.push_back(p); });
  sample_in_place(paths, limit, seed);
  std::vector<DataChain> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    std::vector<Triplet> ts;
    for (const auto h : p) ts.push_back(index.hops[h]);
    out.push_back(make_chain(ChainKind::multi_hop(n), std::move(ts)));
  }
  sort_by_id(out);
  return out;
}

std::vector<DataChain> enumerate_multidependent(const Pkg& graph, int a, int b, int c,
                                                std::size_t limit, std::uint64_t seed) {
  if (a < 1 || b < 1 || c < 0) {
    throw Error(ErrorCode::kInvalidSpec, "A-B-C structure needs A >= 1, B >= 1 and C >= 0");
  }
  const HopIndex index(graph);
  struct Combo {
    std::size_t pivot;
    HopIndex::Path p1, p2, child;
  };
  std::vector<Combo> combos;
  index.abc(a, b, c, [&](std::size_t pv, const auto& p1, const auto& p2, const auto& ch) {
    combos.push_back({pv, p1, p2, ch});
  });
  sample_in_place(combos, limit, seed);
  std::vector<DataChain> out;
  out.reserve(combos.size());
  for (const auto& cb : combos) {
    std::vector<Triplet> ts;
    for (const auto h : cb.p1) ts.push_back(index.hops[h]);
    for (const auto h : cb.p2) ts.push_back(index.hops[h]);
    ts.push_back(index.pivots[cb.pivot]);
    for (const auto h : cb.child) ts.push_back(index.hops[h]);
    out.push_back(make_chain(ChainKind::abc(a, b, c), std::move(ts)));
  }
  sort_by_id(out);
  return out;
}

std::vector<DataChain> enumerate_chains(const Pkg& graph, const ChainKind& kind, std::size_t limit,
                                        std::uint64_t seed) {
  if (kind.multi_dependent) return enumerate_multidependent(graph, kind.a, kind.b, kind.c, limit, seed);
  return enumerate_multihop(graph, kind.hops, limit, seed);
}

StructureStats count_structures(const Pkg& graph) {
  StructureStats s;
  s.nodes = graph.nodes().size();
  s.edges = graph.edges().size();
  for (const auto& e : graph.edges()) {
    if (e.subjects.size() == 2) ++s.multi_dependent_relations;
    if (e.multi_child()) ++s.multi_child_relations;
  }
  const HopIndex index(graph);
  auto count_paths = [&](int n) {
    std::size_t count = 0;
    index.forward(nullptr, n, [&](const HopIndex::Path&) { ++count; });
    return count;
  };
  auto count_abc = [&](int a, int b, int c) {
    std::size_t count = 0;
    index.abc(a, b, c, [&](std::size_t, const auto&, const auto&, const auto&) { ++count; });
    return count;
  };
  s.hop2 = count_paths(2);
  s.hop3 = count_paths(3);
  s.hop4 = count_paths(4);
  s.abc110 = count_abc(1, 1, 0);
  s.abc111 = count_abc(1, 1, 1);
  s.abc120 = count_abc(1, 2, 0);
  return s;
}

void to_json(nlohmann::json& j, const Triplet& t) {
  j = nlohmann::json{{"subjects", t.subjects}, {"rule", t.rule_id}, {"object", t.object}};
}

void from_json(const nlohmann::json& j, Triplet& t) {
  j.at("subjects").get_to(t.subjects);
  j.at("rule").get_to(t.rule_id);
  j.at("object").get_to(t.object);
}

void to_json(nlohmann::json& j, const DataChain& c) {
  std::vector<std::string> labels;
  for (const auto& l : c.labels) labels.push_back(l.str());
  nlohmann::json kind{{"name", c.kind.name()}, {"multi_dependent", c.kind.multi_dependent}};
  if (c.kind.multi_dependent) {
    kind["a"] = c.kind.a;
    kind["b"] = c.kind.b;
    kind["c"] = c.kind.c;
    kind["pivot_index"] = c.kind.pivot_index();
  } else {
    kind["hops"] = c.kind.hops;
  }
  j = nlohmann::json{{"id", c.id},
                     {"kind", kind},
                     {"triplets", c.triplets},
                     {"position_labels", labels},
                     {"subject_sources", c.subject_sources}};
}

void from_json(const nlohmann::json& j, DataChain& c) {
  j.at("id").get_to(c.id);
  c.kind = ChainKind::parse(j.at("kind").at("name").get<std::string>());
  j.at("triplets").get_to(c.triplets);
  c.labels.clear();
  for (const auto& l : j.at("position_labels")) c.labels.push_back(PositionLabel::parse(l.get<std::string>()));
  j.at("subject_sources").get_to(c.subject_sources);
}

void to_json(nlohmann::json& j, const StructureStats& s) {
  j = nlohmann::json{{"nodes", s.nodes},
                     {"edges", s.edges},
                     {"multi_dependent_relations", s.multi_dependent_relations},
                     {"multi_child_relations", s.multi_child_relations},
                     {"2-hop", s.hop2},
                     {"3-hop", s.hop3},
                     {"4-hop", s.hop4},
                     {"1-1-0", s.abc110},
                     {"1-1-1", s.abc111},
                     {"1-2-0", s.abc120}};
}

std::vector<DataChain> load_chains(const std::string& path) {
  std::vector<DataChain> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(row.get<DataChain>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, path + ": " + e.what());
    }
  }
  return out;
}

void save_chains(const std::vector<DataChain>& chains, const std::string& path) {
  std::vector<nlohmann::json> rows;
  for (const auto& c : chains) rows.push_back(c);
  write_jsonl(path, rows);
}

}  // namespace kcp
