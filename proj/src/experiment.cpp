#include "kcprobe/experiment.h"

#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kcprobe/error.h"
#include "kcprobe/io.h"
#include "kcprobe/metrics.h"
#include "kcprobe/report.h"
#include "kcprobe/rng.h"
#include "kcprobe/simulated.h"
#include "kcprobe/text.h"

namespace kcp {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string ExperimentConfig::resolve(const std::string& path) const {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

std::string ExperimentConfig::out(const std::string& name) const {
  return (fs::path(resolve(output_dir)) / name).string();
}

namespace {

std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
    v = v.substr(1, v.size() - 2);
  }
  return v;
}

std::vector<std::string> list_value(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  for (const auto& part : split(v, ',')) {
    auto item = unquote(part);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Drops comment lines and trailing " #" comments outside quotes so the
// Boost INI reader sees plain key = value lines.
std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') {
      out += '\n';
      continue;
    }
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (!quoted && line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    out += line + '\n';
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigError, key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigError, key + ": expected an integer, got '" + v + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const auto n = to_int(key, v);
  if (n < 0) throw Error(ErrorCode::kConfigError, key + ": must be >= 0");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto l = to_lower_ascii(v);
  if (l == "true" || l == "yes" || l == "1") return true;
  if (l == "false" || l == "no" || l == "0") return false;
  throw Error(ErrorCode::kConfigError, key + ": expected true or false, got '" + v + "'");
}

Entity parse_root(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
    throw Error(ErrorCode::kConfigError, "root '" + spec + "' must be written as Surface:Type");
  }
  return Entity::make(trim(spec.substr(0, colon)), trim(spec.substr(colon + 1)));
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(strip_comments(text));
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::kConfigError, std::string("config syntax: ") + e.what());
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  bool saw_version = false;

  auto section = [&](const std::string& name, auto&& handle) {
    const auto child = tree.get_child_optional(name);
    if (!child) return;
    for (const auto& [key, node] : *child) {
      handle(name + "." + key, key, unquote(node.data()));
    }
  };
  auto unknown = [](const std::string& full) {
    throw Error(ErrorCode::kConfigError, "unknown config key '" + full + "'");
  };

  for (const auto& [key, node] : tree) {
    if (!node.empty()) {
      static const std::set<std::string> kSections{"backend", "pkg", "chains", "distractors", "generation", "probe"};
      if (!kSections.count(key)) throw Error(ErrorCode::kConfigError, "unknown section [" + key + "]");
      continue;
    }
    const auto v = unquote(node.data());
    if (key == "schema_version") {
      c.schema_version = static_cast<int>(to_int(key, v));
      saw_version = true;
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(to_int(key, v));
    } else if (key == "output_dir") {
      c.output_dir = v;
    } else if (key == "concurrency") {
      c.concurrency = static_cast<int>(to_int(key, v));
    } else {
      unknown(key);
    }
  }
  if (!saw_version) throw Error(ErrorCode::kConfigError, "missing schema_version");
  if (c.schema_version != kConfigSchemaVersion) {
    throw Error(ErrorCode::kConfigError, "unsupported schema_version " + std::to_string(c.schema_version));
  }
  if (c.concurrency < 1) throw Error(ErrorCode::kConfigError, "concurrency must be >= 1");

  section("backend", [&](const std::string& full, const std::string& k, const std::string& v) {
    auto& b = c.backend;
    if (k == "kind") {
      static const std::set<std::string> kKinds{"simulated", "http", "replay", "offline"};
      if (!kKinds.count(v)) throw Error(ErrorCode::kConfigError, full + ": unknown backend kind '" + v + "'");
      b.kind = v;
    } else if (k == "profile") {
      b.profile = v;
    } else if (k == "base_url") {
      b.http.base_url = v;
    } else if (k == "path") {
      b.http.path = v;
    } else if (k == "model") {
      b.model = v;
      b.http.model = v;
    } else if (k == "api_key_env") {
      b.http.api_key_env = v;
    } else if (k == "max_retries") {
      b.http.max_retries = static_cast<int>(to_int(full, v));
    } else if (k == "initial_backoff_ms") {
      b.http.initial_backoff_ms = static_cast<int>(to_int(full, v));
    } else if (k == "timeout_seconds") {
      b.http.timeout_seconds = static_cast<int>(to_int(full, v));
    } else if (k == "max_in_flight") {
      b.http.max_in_flight = static_cast<int>(to_int(full, v));
    } else if (k == "requests_per_second") {
      b.http.requests_per_second = to_double(full, v);
    } else if (k == "cache_dir") {
      b.cache_dir = v;
    } else {
      unknown(full);
    }
  });

  section("pkg", [&](const std::string& full, const std::string& k, const std::string& v) {
    if (k == "rules") {
      c.rules_path = v;
    } else if (k == "roots") {
      for (const auto& r : list_value(v)) c.roots.push_back(parse_root(r));
    } else if (k == "graph") {
      c.pkg_path = v;
    } else if (k == "max_depth") {
      c.limits.max_depth = static_cast<int>(to_int(full, v));
    } else if (k == "max_nodes") {
      c.limits.max_nodes = to_count(full, v);
    } else if (k == "max_edges") {
      c.limits.max_edges = to_count(full, v);
    } else if (k == "per_rule_fanout_cap") {
      c.limits.per_rule_fanout_cap = to_count(full, v);
    } else if (k == "request_budget") {
      c.limits.request_budget = to_count(full, v);
    } else {
      unknown(full);
    }
  });

  section("chains", [&](const std::string& full, const std::string& k, const std::string& v) {
    try {
      ChainKind::parse(k);
    } catch (const Error&) {
      throw Error(ErrorCode::kConfigError, full + ": unknown structure kind");
    }
    c.chain_plan.emplace_back(k, to_count(full, v));
  });

  section("distractors", [&](const std::string& full, const std::string& k, const std::string& v) {
    try {
      if (k == "methods") {
        c.methods.clear();
        for (const auto& m : list_value(v)) c.methods.push_back(parse_method(m));
      } else if (k == "degrees") {
        c.degrees.clear();
        for (const auto& d : list_value(v)) c.degrees.push_back(parse_degree(d));
      } else if (k == "formats") {
        c.formats.clear();
        for (const auto& f : list_value(v)) c.formats.push_back(parse_format(f));
      } else if (k == "mode") {
        if (v != "deterministic" && v != "llm") throw Error(ErrorCode::kConfigError, full + ": " + v);
        c.llm_distractors = v == "llm";
      } else if (k == "pool") {
        c.pool_path = v;
      } else {
        unknown(full);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfigError) throw;
      throw Error(ErrorCode::kConfigError, full + ": " + e.what());
    }
  });

  section("generation", [&](const std::string& full, const std::string& k, const std::string& v) {
    if (k == "temperature") {
      c.params.temperature = to_double(full, v);
    } else if (k == "top_p") {
      c.params.top_p = to_double(full, v);
    } else if (k == "max_tokens") {
      c.params.max_tokens = static_cast<int>(to_int(full, v));
    } else {
      unknown(full);
    }
  });

  section("probe", [&](const std::string& full, const std::string& k, const std::string& v) {
    if (k == "ablation") {
      try {
        c.ablation = parse_ablation(v);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfigError, full + ": " + e.what());
      }
    } else if (k == "baselines") {
      c.baselines = to_bool(full, v);
    } else if (k == "judge") {
      if (v != "deterministic" && v != "llm") throw Error(ErrorCode::kConfigError, full + ": " + v);
      c.judge_mode = v == "llm" ? JudgeMode::kLlm : JudgeMode::kDeterministic;
    } else if (k == "aliases") {
      c.aliases_path = v;
    } else if (k == "prompts") {
      c.prompts_dir = v;
    } else {
      unknown(full);
    }
  });

  if (c.methods.empty() || c.degrees.empty() || c.formats.empty()) {
    throw Error(ErrorCode::kConfigError, "distractor methods, degrees and formats must be non-empty");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::kConfigError, "cannot read config " + path);
  }
  auto dir = fs::path(path).parent_path().string();
  return parse_config(text, dir.empty() ? "." : dir);
}

// --- planning -----------------------------------------------------------------

namespace {

std::size_t queried_hops(std::size_t n, Ablation ablation) {
  return ablation == Ablation::kLastTwo ? std::min<std::size_t>(n, 2) : n;
}

std::size_t specs_per_hop(const ExperimentConfig& c) { return c.methods.size() * c.degrees.size(); }

void add_row(ExperimentPlan& plan, const ExperimentConfig& c, const ChainKind& kind, std::size_t chains) {
  PlanRow r;
  r.kind = kind.name();
  r.chains = chains;
  r.hops_per_chain = static_cast<std::size_t>(kind.hop_count());
  const std::size_t rounds_per_chain = specs_per_hop(c) * r.hops_per_chain * plan.formats;
  r.rounds = chains * rounds_per_chain;
  r.hops = r.rounds * queried_hops(r.hops_per_chain, c.ablation);
  plan.rounds += r.rounds;
  plan.hops += r.hops;
  if (kind.multi_dependent) {
    plan.multi_dependent_rounds += r.rounds;
    plan.multi_dependent_hops += r.hops;
  } else {
    plan.multi_hop_rounds += r.rounds;
    plan.multi_hop_hops += r.hops;
  }
  if (c.baselines) plan.baseline_hops += chains * queried_hops(r.hops_per_chain, c.ablation);
  plan.rows.push_back(std::move(r));
}

}  // namespace

ExperimentPlan plan_experiment(const ExperimentConfig& config, const std::vector<DataChain>& chains) {
  ExperimentPlan plan;
  plan.formats = config.formats.size();
  std::map<std::string, std::size_t> per_kind;
  std::map<std::string, ChainKind> kinds;
  for (const auto& ch : chains) {
    const auto name = ch.kind.name();
    const bool configured = std::any_of(config.chain_plan.begin(), config.chain_plan.end(),
                                        [&](const auto& p) { return ChainKind::parse(p.first) == ch.kind; });
    if (!configured) throw Error(ErrorCode::kConfigError, "chain kind " + name + " is not in the [chains] plan");
    ++per_kind[name];
    kinds.emplace(name, ch.kind);
  }
  for (const auto& [name, count] : config.chain_plan) {
    const auto kind = ChainKind::parse(name);
    const auto it = per_kind.find(kind.name());
    if (it == per_kind.end()) continue;
    add_row(plan, config, kind, it->second);
    per_kind.erase(it);
  }
  plan.probe_calls = plan.hops + plan.baseline_hops;
  return plan;
}

ExperimentPlan plan_from_counts(const ExperimentConfig& config) {
  ExperimentPlan plan;
  plan.formats = config.formats.size();
  for (const auto& [name, count] : config.chain_plan) add_row(plan, config, ChainKind::parse(name), count);
  plan.probe_calls = plan.hops + plan.baseline_hops;
  return plan;
}

std::string plan_text(const ExperimentPlan& plan) {
  std::ostringstream o;
  o << "kind       chains  hops/chain  rounds  hops\n";
  for (const auto& r : plan.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%-10s %6zu  %10zu  %6zu  %zu\n", r.kind.c_str(), r.chains, r.hops_per_chain,
                  r.rounds, r.hops);
    o << line;
  }
  o << "formats: " << plan.formats << "\n";
  o << "multi-hop total: " << plan.multi_hop_rounds << " rounds, " << plan.multi_hop_hops << " hops\n";
  o << "multi-dependent total: " << plan.multi_dependent_rounds << " rounds, " << plan.multi_dependent_hops
    << " hops\n";
  o << "total: " << plan.rounds << " rounds, " << plan.hops << " hops\n";
  o << "baseline hops: " << plan.baseline_hops << "\n";
  o << "probe backend calls: " << plan.probe_calls << "\n";
  return o.str();
}

nlohmann::json plan_json(const ExperimentPlan& plan) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : plan.rows) {
    rows.push_back({{"kind", r.kind}, {"chains", r.chains}, {"hops_per_chain", r.hops_per_chain},
                    {"rounds", r.rounds}, {"hops", r.hops}});
  }
  return {{"rows", rows},
          {"formats", plan.formats},
          {"rounds", plan.rounds},
          {"hops", plan.hops},
          {"multi_hop_rounds", plan.multi_hop_rounds},
          {"multi_hop_hops", plan.multi_hop_hops},
          {"multi_dependent_rounds", plan.multi_dependent_rounds},
          {"multi_dependent_hops", plan.multi_dependent_hops},
          {"baseline_hops", plan.baseline_hops},
          {"probe_calls", plan.probe_calls}};
}

// --- pipeline -------------------------------------------------------------------

RuleSet config_rules(const ExperimentConfig& config) {
  if (config.rules_path.empty()) return default_rule_set();
  return load_rule_set(config.resolve(config.rules_path));
}

BackendStack::BackendStack(const ExperimentConfig& config, const RuleSet& rules) {
  const auto& b = config.backend;
  std::string model_id = b.model;
  if (b.kind == "simulated") {
    if (b.profile.empty()) throw Error(ErrorCode::kConfigError, "simulated backend needs backend.profile");
    auto profile = load_profile(config.resolve(b.profile));
    model_id = profile.model_id;
    inner_ = std::make_unique<SimulatedBackend>(rules, std::move(profile));
  } else if (b.kind == "http") {
    inner_ = std::make_unique<HttpBackend>(b.http);
    model_id = b.http.model;
  } else if (b.kind == "offline") {
    inner_ = std::make_unique<OfflineBackend>(model_id.empty() ? "offline" : model_id);
    model_id = inner_->model_id();
  } else if (b.kind == "replay") {
    // A recorded simulated run is keyed by the profile's model id.
    if (model_id.empty() && !b.profile.empty()) model_id = load_profile(config.resolve(b.profile)).model_id;
    if (b.cache_dir.empty() || model_id.empty()) {
      throw Error(ErrorCode::kConfigError, "replay needs backend.cache_dir and backend.model");
    }
  }
  top_ = inner_.get();
  if (!b.cache_dir.empty()) {
    cache_ = std::make_unique<ResponseCache>(config.resolve(b.cache_dir));
    cached_ = std::make_unique<CachedBackend>(*cache_, inner_.get(), model_id);
    top_ = cached_.get();
  }
}

Judge make_judge(const ExperimentConfig& config, Backend* backend) {
  AliasTable aliases;
  if (!config.aliases_path.empty()) aliases = AliasTable::load(config.resolve(config.aliases_path));
  PromptSet prompts = PromptSet::defaults();
  if (!config.prompts_dir.empty()) prompts.load_overrides(config.resolve(config.prompts_dir));
  return Judge(std::move(aliases), config.judge_mode, config.judge_mode == JudgeMode::kLlm ? backend : nullptr,
               std::move(prompts));
}

BuildStageResult stage_build_pkg(const ExperimentConfig& config, const RuleSet& rules, Backend& backend) {
  if (config.roots.empty()) throw Error(ErrorCode::kConfigError, "pkg.roots is empty");
  PromptSet prompts = PromptSet::defaults();
  if (!config.prompts_dir.empty()) prompts.load_overrides(config.resolve(config.prompts_dir));
  const auto judge = make_judge(config, &backend);
  auto built = build_pkg(config.roots, rules, backend, config.limits, judge, prompts, config.seed);
  save_pkg(built.pkg, config.out("pkg.json"));
  nlohmann::json stats = count_structures(built.pkg);
  stats["exhausted"] = built.exhausted;
  stats["requests"] = built.requests;
  write_file(config.out("pkg_stats.json"), stats.dump(2) + "\n");
  return {std::move(built.pkg), built.exhausted, built.requests};
}

std::vector<DataChain> stage_extract_chains(const ExperimentConfig& config, const Pkg& pkg) {
  std::vector<DataChain> all;
  for (const auto& [name, count] : config.chain_plan) {
    const auto kind = ChainKind::parse(name);
    auto chains = enumerate_chains(pkg, kind, count, mix_seed(config.seed, fnv1a64(kind.name())));
    if (chains.size() < count) {
      std::cerr << "warning: only " << chains.size() << " " << kind.name() << " chains available (" << count
                << " requested)\n";
    }
    all.insert(all.end(), std::make_move_iterator(chains.begin()), std::make_move_iterator(chains.end()));
  }
  save_chains(all, config.out("chains.jsonl"));
  return all;
}

DistractorStageResult stage_make_distractors(const ExperimentConfig& config, const RuleSet& rules,
                                             const Pkg& pkg, const std::vector<DataChain>& chains,
                                             Backend* llm_backend) {
  auto pool = EntityPool::from_pkg(pkg);
  if (!config.pool_path.empty()) {
    const auto path = config.resolve(config.pool_path);
    pool.add_json(parse_json(read_file(path), path));
  }
  LlmDistractorOptions llm;
  const LlmDistractorOptions* llm_ptr = nullptr;
  if (config.llm_distractors) {
    if (!llm_backend) throw Error(ErrorCode::kConfigError, "LLM distractor mode needs a backend");
    llm.backend = llm_backend;
    if (!config.prompts_dir.empty()) llm.prompts.load_overrides(config.resolve(config.prompts_dir));
    llm_ptr = &llm;
  }
  DistractorStageResult result;
  for (const auto& chain : chains) {
    for (const auto& spec : plan_distractor_set(chain)) {
      if (std::find(config.methods.begin(), config.methods.end(), spec.method) == config.methods.end()) continue;
      if (std::find(config.degrees.begin(), config.degrees.end(), spec.degree) == config.degrees.end()) continue;
      try {
        const auto single =
            make_distractor(chain, spec.hop_index, spec.method, spec.degree, pool, rules, config.seed, llm_ptr);
        for (const auto format : config.formats) {
          if (format == Format::kSingleSentence) {
            result.distractors.push_back(single);
          } else {
            result.distractors.push_back(to_paragraph(single, rules, config.seed, llm_ptr));
          }
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kPoolExhausted && e.code() != ErrorCode::kGenerationRejected) throw;
        if (result.skipped < 3 * config.formats.size()) std::cerr << "warning: " << e.what() << "\n";
        result.skipped += config.formats.size();
      }
    }
  }
  if (result.skipped) {
    std::cerr << "warning: " << result.skipped << " distractors skipped (no eligible replacement)\n";
  }
  save_distractors(result.distractors, config.out("distractors.jsonl"));
  return result;
}

RunSummary stage_run_probe(const ExperimentConfig& config, const RuleSet& rules,
                           const std::vector<DataChain>& chains, const std::vector<Distractor>& distractors,
                           Backend& backend, bool resume, const std::atomic<bool>* stop) {
  const auto judge = make_judge(config, &backend);
  const auto tasks = make_tasks(chains, distractors, config.baselines);
  RunOptions options;
  options.concurrency = config.concurrency;
  options.ablation = config.ablation;
  options.params = config.params;
  options.params.seed = config.seed;
  options.output_path = config.out("sessions.jsonl");
  options.resume = resume;
  options.stop = stop;
  return run_probe(tasks, backend, rules, judge, options);
}

nlohmann::json stage_report(const ExperimentConfig& config, const std::vector<ProbeSession>& sessions,
                            const Pkg& pkg) {
  return write_reports(sessions, baseline_confidences(pkg), config.out("report"));
}

}  // namespace kcp
