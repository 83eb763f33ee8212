#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "kcprobe/chains.h"
#include "kcprobe/knowledge.h"
#include "kcprobe/model.h"
#include "kcprobe/simulated.h"
#include "kcprobe/text.h"

namespace kcp::testing {

/// Backend driven by a callback; counts calls.
class ScriptedBackend : public Backend {
 public:
  using Script = std::function<std::string(std::span<const ChatTurn>, const GenerationParams&)>;
  explicit ScriptedBackend(Script script, std::string id = "scripted")
      : script_(std::move(script)), id_(std::move(id)) {}
  std::string model_id() const override { return id_; }
  Completion chat(std::span<const ChatTurn> history, const GenerationParams& params) override {
    check_history(history);
    {
      std::lock_guard lock(mutex_);
      ++calls;
    }
    Completion c;
    c.text = script_(history, params);
    c.model_id = id_;
    c.tokens.push_back({c.text, std::log(0.5)});
    return c;
  }
  int calls = 0;

 private:
  Script script_;
  std::string id_;
  std::mutex mutex_;
};

/// Backend answering a fixed sequence, one answer per call.
inline ScriptedBackend sequence_backend(std::vector<std::string> answers) {
  auto state = std::make_shared<std::pair<std::vector<std::string>, std::size_t>>(std::move(answers), 0);
  return ScriptedBackend([state](std::span<const ChatTurn>, const GenerationParams&) {
    auto& [list, i] = *state;
    return list.at(i++ % list.size());
  });
}

inline Entity E(const std::string& surface, const std::string& type) { return Entity::make(surface, type); }

inline void fact(Pkg& g, const std::string& s, const std::string& stype, const std::string& rule,
                 const std::string& o, const std::string& otype) {
  const Entity subj = E(s, stype);
  const Entity obj = E(o, otype);
  g.add_edge(default_rule_set(), std::span(&subj, 1), rule, std::span(&obj, 1));
}

/// Small real-world ground truth over the default rule set.
inline Pkg world_facts() {
  Pkg g(default_rule_set().id(), E("China", "Country"));
  fact(g, "Jackie Chan", "Person", "nationality", "China", "Country");
  fact(g, "China", "Country", "capital-is", "Beijing", "City");
  fact(g, "Beijing", "City", "tallest-building", "China Zun", "Building");
  fact(g, "United Kingdom", "Country", "capital-is", "London", "City");
  fact(g, "London", "City", "tallest-building", "The Shard", "Building");
  fact(g, "Canada", "Country", "capital-is", "Ottawa", "City");
  fact(g, "Ottawa", "City", "tallest-building", "Place de Ville", "Building");
  fact(g, "Toronto", "City", "country-of-city", "Canada", "Country");
  fact(g, "United States", "Country", "capital-is", "Washington DC", "City");
  fact(g, "Beijing", "City", "country-of-city", "China", "Country");
  g.add_node(default_rule_set(), E("Elephant", "Animal"));
  g.add_node(default_rule_set(), E("New York", "City"));
  return g;
}

/// Chain (Jackie Chan -> China -> Beijing -> China Zun).
inline DataChain jackie_chain(const Pkg& g) {
  auto t = [&](const std::string& s, const std::string& st, const std::string& r, const std::string& o,
               const std::string& ot) {
    return Triplet{{g.node({canonical_key(s), st})}, r, g.node({canonical_key(o), ot})};
  };
  return make_chain(ChainKind::multi_hop(3),
                    {t("Jackie Chan", "Person", "nationality", "China", "Country"),
                     t("China", "Country", "capital-is", "Beijing", "City"),
                     t("Beijing", "City", "tallest-building", "China Zun", "Building")});
}

inline SusceptibilityProfile profile_for(Pkg truth, double confidence = 0.9) {
  SusceptibilityProfile p;
  p.ground_truth = std::move(truth);
  p.default_confidence = confidence;
  return p;
}

}  // namespace kcp::testing
