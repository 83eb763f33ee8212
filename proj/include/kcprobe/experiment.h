#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcprobe/cache.h"
#include "kcprobe/chains.h"
#include "kcprobe/distractors.h"
#include "kcprobe/graph_builder.h"
#include "kcprobe/http_backend.h"
#include "kcprobe/judge.h"
#include "kcprobe/probe.h"

namespace kcp {

inline constexpr int kConfigSchemaVersion = 1;

struct BackendConfig {
  /// simulated | http | replay | offline
  std::string kind = "simulated";
  std::string profile;  // simulated
  HttpBackendConfig http;
  /// Recorded model id for replay; overrides the HTTP model name.
  std::string model;
  /// Response cache directory; empty disables caching (replay requires it).
  std::string cache_dir;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int concurrency = 1;

  BackendConfig backend;

  std::string rules_path;  // empty = built-in rule set
  std::vector<Entity> roots;
  /// Prebuilt graph; when set, build-pkg is skipped.
  std::string pkg_path;
  BuildLimits limits;

  /// Structure kind name ("2-hop", "1-1-0", ...) -> chain count, in file order.
  std::vector<std::pair<std::string, std::size_t>> chain_plan;

  std::vector<Method> methods{kMethods[0], kMethods[1], kMethods[2]};
  std::vector<Degree> degrees{kDegrees[0], kDegrees[1]};
  std::vector<Format> formats{Format::kSingleSentence, Format::kParagraph};
  bool llm_distractors = false;
  std::string pool_path;

  GenerationParams params;

  Ablation ablation = Ablation::kNone;
  bool baselines = true;
  JudgeMode judge_mode = JudgeMode::kDeterministic;
  std::string aliases_path;
  std::string prompts_dir;

  /// Resolves relative paths against the config file directory.
  std::string base_dir = ".";
  std::string resolve(const std::string& path) const;
  std::string out(const std::string& name) const;
};

/// Parses the key/value configuration document. Top-level keys plus
/// [backend], [pkg], [chains], [distractors], [generation] and [probe]
/// sections; `#` and `;` start comments; lists are comma separated and may
/// be written as ["a", "b"]. Unknown keys throw kConfigError.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

struct PlanRow {
  std::string kind;
  std::size_t chains = 0;
  std::size_t hops_per_chain = 0;
  std::size_t rounds = 0;  // all formats
  std::size_t hops = 0;    // all formats
};

struct ExperimentPlan {
  std::vector<PlanRow> rows;
  std::size_t formats = 1;
  std::size_t rounds = 0;
  std::size_t hops = 0;
  std::size_t multi_hop_rounds = 0;
  std::size_t multi_hop_hops = 0;
  std::size_t multi_dependent_rounds = 0;
  std::size_t multi_dependent_hops = 0;
  std::size_t baseline_hops = 0;
  /// Probe requests: distracted hops plus baseline hops.
  std::size_t probe_calls = 0;
};

/// Dry-run accounting: 6N rounds and 6N * (hops queried) hops per chain and
/// format. Throws kConfigError for a chain whose kind is not in the plan.
ExperimentPlan plan_experiment(const ExperimentConfig& config, const std::vector<DataChain>& chains);
/// Same accounting from the configured chain counts alone.
ExperimentPlan plan_from_counts(const ExperimentConfig& config);

std::string plan_text(const ExperimentPlan& plan);
nlohmann::json plan_json(const ExperimentPlan& plan);

RuleSet config_rules(const ExperimentConfig& config);

/// Backend stack for a config: the live (or simulated) backend wrapped by a
/// response cache when one is configured.
class BackendStack {
 public:
  BackendStack(const ExperimentConfig& config, const RuleSet& rules);
  Backend& backend() { return *top_; }
  CachedBackend* cached() { return cached_.get(); }

 private:
  std::unique_ptr<Backend> inner_;
  std::unique_ptr<ResponseCache> cache_;
  std::unique_ptr<CachedBackend> cached_;
  Backend* top_ = nullptr;
};

Judge make_judge(const ExperimentConfig& config, Backend* backend);

struct BuildStageResult {
  Pkg pkg;
  bool exhausted = false;
  std::size_t requests = 0;
};

/// Expands each configured root into one graph (the first root is the
/// graph's root). Writes pkg.json and pkg_stats.json.
BuildStageResult stage_build_pkg(const ExperimentConfig& config, const RuleSet& rules, Backend& backend);

/// Samples the configured number of chains per kind and writes chains.jsonl.
std::vector<DataChain> stage_extract_chains(const ExperimentConfig& config, const Pkg& pkg);

struct DistractorStageResult {
  std::vector<Distractor> distractors;
  std::size_t skipped = 0;
};

/// Builds every configured spec and format for each chain and writes
/// distractors.jsonl. Specs without an eligible replacement are skipped.
DistractorStageResult stage_make_distractors(const ExperimentConfig& config, const RuleSet& rules,
                                             const Pkg& pkg, const std::vector<DataChain>& chains,
                                             Backend* llm_backend);

RunSummary stage_run_probe(const ExperimentConfig& config, const RuleSet& rules,
                           const std::vector<DataChain>& chains, const std::vector<Distractor>& distractors,
                           Backend& backend, bool resume, const std::atomic<bool>* stop);

nlohmann::json stage_report(const ExperimentConfig& config, const std::vector<ProbeSession>& sessions,
                            const Pkg& pkg);

}  // namespace kcp
