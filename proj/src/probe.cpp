#include "kcprobe/probe.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/text.h"

namespace kcp {

std::string to_string(HopClass c) {
  switch (c) {
    case HopClass::kConforming: return "Conforming";
    case HopClass::kDeviated: return "Deviated";
    case HopClass::kAbstained: return "Abstained";
    case HopClass::kOther: return "Other";
  }
  return "?";
}

std::string to_string(FinalStatus s) {
  switch (s) {
    case FinalStatus::kConsistent: return "Consistent";
    case FinalStatus::kVariation: return "Variation";
    case FinalStatus::kAbstention: return "Abstention";
    case FinalStatus::kFailed: return "Failed";
  }
  return "?";
}

std::string to_string(Ablation a) { return a == Ablation::kNone ? "none" : "last2"; }

HopClass parse_hop_class(const std::string& s) {
  for (const auto c : {HopClass::kConforming, HopClass::kDeviated, HopClass::kAbstained, HopClass::kOther}) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::kParseError, "unknown hop classification '" + s + "'");
}

FinalStatus parse_final_status(const std::string& s) {
  for (const auto f : {FinalStatus::kConsistent, FinalStatus::kVariation, FinalStatus::kAbstention,
                       FinalStatus::kFailed}) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorCode::kParseError, "unknown final status '" + s + "'");
}

Ablation parse_ablation(const std::string& s) {
  if (s.empty() || s == "none") return Ablation::kNone;
  if (s == "last2") return Ablation::kLastTwo;
  throw Error(ErrorCode::kParseError, "unknown ablation '" + s + "' (expected none or last2)");
}

int first_hop(const DataChain& chain, Ablation ablation) {
  const int n = static_cast<int>(chain.hop_count());
  return ablation == Ablation::kLastTwo ? std::max(0, n - 2) : 0;
}

HopQuery next_query(const DataChain& chain, int hop_index, std::span<const HopOutcome> previous) {
  if (hop_index < 0 || static_cast<std::size_t>(hop_index) >= chain.hop_count()) {
    throw Error(ErrorCode::kInvalidArgument, "hop index out of range");
  }
  for (const auto& p : previous) {
    if (p.classification == HopClass::kAbstained) {
      throw Error(ErrorCode::kSessionHalted, "hop " + std::to_string(p.hop_index + 1) + " abstained");
    }
  }
  const auto& t = chain.triplets[hop_index];
  HopQuery q;
  q.rule_id = t.rule_id;
  for (std::size_t j = 0; j < t.subjects.size(); ++j) {
    const int src = chain.subject_sources[hop_index][j];
    const HopOutcome* upstream = nullptr;
    for (const auto& p : previous) {
      if (p.hop_index == src) upstream = &p;
    }
    q.subjects.push_back(upstream ? upstream->answer_entity : t.subjects[j].surface);
  }
  return q;
}

std::string render_query(const RelationRule& rule, std::span<const std::string> subjects) {
  return fill_template(rule.question_template, subjects) + std::string(kQuerySuffix);
}

std::string session_id(const std::string& chain_id, const std::string& distractor_id,
                       Ablation ablation, const std::string& model_id) {
  return hex64(fnv1a64(chain_id + '|' + (distractor_id.empty() ? "baseline" : distractor_id) + '|' +
                       to_string(ablation) + '|' + model_id));
}

namespace {

std::string trimmed_span(const std::string& text, std::size_t& begin, std::size_t& end) {
  const auto entity = clean_surface(text);
  begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) begin = 0;
  end = std::min(text.size(), begin + entity.size());
  return entity;
}

}  // namespace

ProbeSession run_session(const DataChain& chain, const Distractor* distractor, Backend& backend,
                         const RuleSet& rules, const Judge& judge, const GenerationParams& params,
                         Ablation ablation) {
  if (distractor && distractor->chain_id != chain.id) {
    throw Error(ErrorCode::kInvalidArgument, "distractor " + distractor->id + " belongs to another chain");
  }
  ProbeSession s;
  s.chain_id = chain.id;
  s.chain_kind = chain.kind.name();
  s.ablation = ablation;
  s.model_id = backend.model_id();
  s.params = params;
  std::vector<Entity> replaced;
  if (distractor) {
    s.distractor_id = distractor->id;
    s.distracted_hop = distractor->hop_index;
    s.position = distractor->position.str();
    s.method = to_string(distractor->method);
    s.degree = to_string(distractor->degree);
    s.format = to_string(distractor->format);
    s.transcript.push_back({Role::kUser, std::string(kInfoPrefix) + distractor->text});
    replaced = distractor->replaced_entities();
  }
  s.id = session_id(chain.id, s.distractor_id, ablation, s.model_id);

  const int n = static_cast<int>(chain.hop_count());
  try {
    for (int k = first_hop(chain, ablation); k < n; ++k) {
      const auto q = next_query(chain, k, s.hops);
      const auto& rule = rules.rule(q.rule_id);
      s.transcript.push_back({Role::kUser, render_query(rule, q.subjects)});
      const auto reply = backend.chat(s.transcript, params);
      s.transcript.push_back({Role::kAssistant, reply.text.empty() ? std::string(" ") : reply.text});

      const auto& t = chain.triplets[k];
      HopOutcome h;
      h.hop_index = k;
      h.subjects = q.subjects;
      h.rule_id = q.rule_id;
      h.answer_text = reply.text;
      h.relation_key = relation_key(t.subject_refs(), t.rule_id);
      h.queried_pkg_relation = true;
      for (std::size_t j = 0; j < q.subjects.size(); ++j) {
        std::string key;
        try {
          key = canonical_key(q.subjects[j]);
        } catch (const Error&) {
        }
        if (key != t.subjects[j].key) h.queried_pkg_relation = false;
      }

      std::size_t begin = 0, end = 0;
      if (judge.is_abstention(reply.text) || trim(reply.text).empty()) {
        h.classification = HopClass::kAbstained;
        h.answer_entity = trimmed_span(reply.text, begin, end);
      } else if (auto m = judge.match(reply.text, t.object.surface); m.matched) {
        h.classification = HopClass::kConforming;
        begin = m.begin;
        end = m.end;
        h.answer_entity = reply.text.substr(begin, end - begin);
      } else {
        h.classification = HopClass::kOther;
        for (const auto& r : replaced) {
          if (auto dm = judge.match(reply.text, r.surface); dm.matched) {
            h.classification = HopClass::kDeviated;
            begin = dm.begin;
            end = dm.end;
            h.answer_entity = reply.text.substr(begin, end - begin);
            break;
          }
        }
        if (h.classification == HopClass::kOther) h.answer_entity = trimmed_span(reply.text, begin, end);
      }
      if (h.classification != HopClass::kAbstained) {
        if (const auto lp = span_logprob(reply, begin, end)) h.confidence = std::exp(*lp);
      }
      s.hops.push_back(std::move(h));
      if (s.hops.back().classification == HopClass::kAbstained) break;
    }
    const auto& last = s.hops.back();
    if (last.classification == HopClass::kAbstained) {
      s.final_status = FinalStatus::kAbstention;
    } else {
      s.final_status = last.classification == HopClass::kConforming ? FinalStatus::kConsistent
                                                                    : FinalStatus::kVariation;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kBackendError) throw;
    s.final_status = FinalStatus::kFailed;
    s.error = e.what();
  }
  return s;
}

std::vector<ProbeTask> make_tasks(const std::vector<DataChain>& chains,
                                  const std::vector<Distractor>& distractors, bool with_baselines) {
  std::map<std::string, std::vector<const Distractor*>> by_chain;
  for (const auto& d : distractors) by_chain[d.chain_id].push_back(&d);
  std::vector<ProbeTask> tasks;
  for (const auto& c : chains) {
    if (with_baselines) tasks.push_back({&c, nullptr});
    for (const auto* d : by_chain[c.id]) tasks.push_back({&c, d});
  }
  return tasks;
}

namespace {

std::vector<ProbeSession> load_partial(const std::string& path) {
  std::vector<ProbeSession> out;
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<ProbeSession>());
    } catch (const std::exception& e) {
      std::cerr << "warning: " << path << ":" << lineno << ": skipping unreadable session (" << e.what()
                << ")\n";
    }
  }
  return out;
}

}  // namespace

RunSummary run_probe(std::span<const ProbeTask> tasks, Backend& backend, const RuleSet& rules,
                     const Judge& judge, const RunOptions& options) {
  RunSummary summary;
  std::map<std::string, ProbeSession> done;
  if (options.resume && !options.output_path.empty() && std::filesystem::exists(options.output_path)) {
    // Failed sessions are retried.
    for (auto& s : load_partial(options.output_path)) {
      if (s.final_status != FinalStatus::kFailed) done.insert_or_assign(s.id, std::move(s));
    }
  }

  std::vector<const ProbeTask*> todo;
  std::set<std::string> queued;
  const std::string model = backend.model_id();
  for (const auto& t : tasks) {
    const auto id = session_id(t.chain->id, t.distractor ? t.distractor->id : "", options.ablation, model);
    if (done.count(id) || !queued.insert(id).second) {
      ++summary.skipped;
      continue;
    }
    todo.push_back(&t);
  }

  std::ofstream sink;
  if (!options.output_path.empty()) {
    const auto parent = std::filesystem::path(options.output_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    // Without resume, start from an empty file.
    sink.open(options.output_path, options.resume ? std::ios::app : std::ios::trunc);
    if (!sink) throw Error(ErrorCode::kNotFound, "cannot write " + options.output_path);
  }

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      if (options.stop && options.stop->load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      try {
        auto s = run_session(*todo[i]->chain, todo[i]->distractor, backend, rules, judge, options.params,
                             options.ablation);
        std::lock_guard lock(mutex);
        if (sink.is_open()) {
          sink << nlohmann::json(s).dump() << '\n';
          sink.flush();
        }
        ++summary.executed;
        done.insert_or_assign(s.id, std::move(s));
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.concurrency, static_cast<int>(todo.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (sink.is_open()) sink.close();

  summary.interrupted = summary.executed + summary.skipped < tasks.size();
  for (auto& [id, s] : done) summary.sessions.push_back(std::move(s));
  if (!options.output_path.empty()) save_sessions(summary.sessions, options.output_path);
  if (failure) std::rethrow_exception(failure);
  return summary;
}

void to_json(nlohmann::json& j, const HopOutcome& h) {
  j = nlohmann::json{{"hop_index", h.hop_index},
                     {"subjects", h.subjects},
                     {"rule", h.rule_id},
                     {"answer_text", h.answer_text},
                     {"answer_entity", h.answer_entity},
                     {"classification", to_string(h.classification)},
                     {"confidence", h.confidence ? nlohmann::json(*h.confidence) : nlohmann::json(nullptr)},
                     {"relation_key", h.relation_key},
                     {"queried_pkg_relation", h.queried_pkg_relation}};
}

void from_json(const nlohmann::json& j, HopOutcome& h) {
  j.at("hop_index").get_to(h.hop_index);
  j.at("subjects").get_to(h.subjects);
  j.at("rule").get_to(h.rule_id);
  j.at("answer_text").get_to(h.answer_text);
  j.at("answer_entity").get_to(h.answer_entity);
  h.classification = parse_hop_class(j.at("classification").get<std::string>());
  h.confidence = j.at("confidence").is_null() ? std::nullopt : std::optional<double>(j.at("confidence").get<double>());
  j.at("relation_key").get_to(h.relation_key);
  j.at("queried_pkg_relation").get_to(h.queried_pkg_relation);
}

void to_json(nlohmann::json& j, const ProbeSession& s) {
  j = nlohmann::json{{"id", s.id},
                     {"chain_id", s.chain_id},
                     {"chain_kind", s.chain_kind},
                     {"distractor_id", s.distractor_id},
                     {"distracted_hop", s.distracted_hop ? nlohmann::json(*s.distracted_hop) : nlohmann::json(nullptr)},
                     {"position", s.position},
                     {"method", s.method},
                     {"degree", s.degree},
                     {"format", s.format},
                     {"ablation", to_string(s.ablation)},
                     {"model_id", s.model_id},
                     {"params", s.params},
                     {"transcript", s.transcript},
                     {"hops", s.hops},
                     {"final_status", to_string(s.final_status)},
                     {"error", s.error}};
}

void from_json(const nlohmann::json& j, ProbeSession& s) {
  j.at("id").get_to(s.id);
  j.at("chain_id").get_to(s.chain_id);
  j.at("chain_kind").get_to(s.chain_kind);
  j.at("distractor_id").get_to(s.distractor_id);
  s.distracted_hop = j.at("distracted_hop").is_null() ? std::nullopt
                                                      : std::optional<int>(j.at("distracted_hop").get<int>());
  j.at("position").get_to(s.position);
  j.at("method").get_to(s.method);
  j.at("degree").get_to(s.degree);
  j.at("format").get_to(s.format);
  s.ablation = parse_ablation(j.at("ablation").get<std::string>());
  j.at("model_id").get_to(s.model_id);
  j.at("params").get_to(s.params);
  j.at("transcript").get_to(s.transcript);
  j.at("hops").get_to(s.hops);
  s.final_status = parse_final_status(j.at("final_status").get<std::string>());
  j.at("error").get_to(s.error);
}

std::vector<ProbeSession> load_sessions(const std::string& path) {
  std::vector<ProbeSession> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(row.get<ProbeSession>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, path + ": " + e.what());
    }
  }
  return out;
}

void save_sessions(const std::vector<ProbeSession>& sessions, const std::string& path) {
  std::vector<nlohmann::json> rows;
  for (const auto& s : sessions) rows.push_back(s);
  write_jsonl(path, rows);
}

}  // namespace kcp
