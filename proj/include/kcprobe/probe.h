#pragma once

#include <atomic>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcprobe/chains.h"
#include "kcprobe/distractors.h"
#include "kcprobe/judge.h"
#include "kcprobe/model.h"

namespace kcp {

enum class HopClass { kConforming, kDeviated, kAbstained, kOther };
enum class FinalStatus { kConsistent, kVariation, kAbstention, kFailed };
enum class Ablation { kNone, kLastTwo };

std::string to_string(HopClass c);
std::string to_string(FinalStatus s);
std::string to_string(Ablation a);
HopClass parse_hop_class(const std::string& s);
FinalStatus parse_final_status(const std::string& s);
Ablation parse_ablation(const std::string& s);

inline constexpr std::string_view kInfoPrefix = "Here is some information: ";
inline constexpr std::string_view kQuerySuffix = " Answer with a short entity.";

struct HopQuery {
  std::vector<std::string> subjects;  // surfaces as sent
  std::string rule_id;
};

struct HopOutcome {
  int hop_index = 0;
  std::vector<std::string> subjects;
  std::string rule_id;
  std::string answer_text;
  std::string answer_entity;
  HopClass classification = HopClass::kOther;
  std::optional<double> confidence;
  /// relation_key of the chain triplet at this hop.
  std::string relation_key;
  /// True when the query used exactly the chain's subjects, i.e. it asked
  /// for a relation stored in the graph.
  bool queried_pkg_relation = false;

  bool operator==(const HopOutcome&) const = default;
};

struct ProbeSession {
  std::string id;
  std::string chain_id;
  std::string chain_kind;
  /// Empty for baseline (no-distractor) sessions.
  std::string distractor_id;
  std::optional<int> distracted_hop;
  std::string position;
  std::string method;
  std::string degree;
  std::string format;
  Ablation ablation = Ablation::kNone;
  std::string model_id;
  GenerationParams params;
  std::vector<ChatTurn> transcript;
  std::vector<HopOutcome> hops;
  FinalStatus final_status = FinalStatus::kFailed;
  std::string error;

  bool baseline() const { return distractor_id.empty(); }
  bool operator==(const ProbeSession&) const = default;
};

/// Index of the first hop queried under the ablation.
int first_hop(const DataChain& chain, Ablation ablation);

/// Subjects and relation for `hop_index`: an upstream answer is used where
/// the chain links the hops, the chain's own entity otherwise (including
/// hops skipped by an ablation). Throws kSessionHalted when an upstream hop
/// abstained.
HopQuery next_query(const DataChain& chain, int hop_index, std::span<const HopOutcome> previous);

std::string render_query(const RelationRule& rule, std::span<const std::string> subjects);

std::string session_id(const std::string& chain_id, const std::string& distractor_id,
                       Ablation ablation, const std::string& model_id);

/// One probe conversation. `distractor` null means a baseline session.
/// Backend errors produce a Failed session instead of throwing.
ProbeSession run_session(const DataChain& chain, const Distractor* distractor, Backend& backend,
                         const RuleSet& rules, const Judge& judge, const GenerationParams& params,
                         Ablation ablation = Ablation::kNone);

struct ProbeTask {
  const DataChain* chain = nullptr;
  const Distractor* distractor = nullptr;
};

struct RunOptions {
  int concurrency = 1;
  Ablation ablation = Ablation::kNone;
  GenerationParams params;
  /// Sessions are appended here as they finish and the file is rewritten
  /// sorted by id at the end. Empty disables persistence.
  std::string output_path;
  /// Skip tasks whose session id is already in output_path; failed
  /// sessions are retried.
  bool resume = false;
  /// Set asynchronously to stop handing out tasks; finished sessions are kept.
  const std::atomic<bool>* stop = nullptr;
};

struct RunSummary {
  std::vector<ProbeSession> sessions;  // sorted by id, including resumed ones
  std::size_t executed = 0;
  std::size_t skipped = 0;
  bool interrupted = false;
};

/// Baseline plus one task per distractor, for every chain.
std::vector<ProbeTask> make_tasks(const std::vector<DataChain>& chains,
                                  const std::vector<Distractor>& distractors, bool with_baselines = true);

RunSummary run_probe(std::span<const ProbeTask> tasks, Backend& backend, const RuleSet& rules,
                     const Judge& judge, const RunOptions& options);

void to_json(nlohmann::json& j, const HopOutcome& h);
void from_json(const nlohmann::json& j, HopOutcome& h);
void to_json(nlohmann::json& j, const ProbeSession& s);
void from_json(const nlohmann::json& j, ProbeSession& s);

std::vector<ProbeSession> load_sessions(const std::string& path);
void save_sessions(const std::vector<ProbeSession>& sessions, const std::string& path);

}  // namespace kcp
