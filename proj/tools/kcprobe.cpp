#include <atomic>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kcprobe/error.h"
#include "kcprobe/experiment.h"
#include "kcprobe/io.h"
#include "kcprobe/simulated.h"
#include "kcprobe/report.h"
#include "kcprobe/text.h"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Common {
  std::string config;
  std::string backend;
  std::optional<std::uint64_t> seed;
  std::optional<int> concurrency;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--backend", c.backend, "override backend kind")
      ->check(CLI::IsMember({"simulated", "http", "replay", "offline"}));
  cmd->add_option("--seed", c.seed, "override the seed");
  cmd->add_option("--concurrency", c.concurrency, "override the worker count")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "override the output directory");
}

kcp::ExperimentConfig load(const Common& c) {
  auto config = kcp::load_config(c.config);
  if (!c.backend.empty()) config.backend.kind = c.backend;
  if (c.seed) config.seed = *c.seed;
  if (c.concurrency) config.concurrency = *c.concurrency;
  if (!c.out.empty()) config.output_dir = std::filesystem::absolute(c.out).string();
  return config;
}

kcp::Pkg load_graph(const kcp::ExperimentConfig& config) {
  const auto path = config.pkg_path.empty() ? config.out("pkg.json") : config.resolve(config.pkg_path);
  return kcp::load_pkg(path);
}

void print_stats(const kcp::Pkg& pkg) { std::cout << nlohmann::json(kcp::count_structures(pkg)).dump(2) << "\n"; }

int finish_probe(const kcp::RunSummary& summary, const kcp::ExperimentConfig& config) {
  std::cout << "sessions: " << summary.sessions.size() << " (executed " << summary.executed << ", skipped "
            << summary.skipped << ")\n";
  std::cout << "written: " << config.out("sessions.jsonl") << "\n";
  if (summary.interrupted) {
    std::cerr << "interrupted: completed sessions are saved; rerun with --resume to continue\n";
    return 1;
  }
  return 0;
}

void write_grouped(const kcp::ExperimentConfig& config, const std::vector<kcp::ProbeSession>& sessions,
                   const std::vector<std::string>& group_by) {
  if (group_by.empty()) return;
  const auto table = kcp::aggregate_report(sessions, group_by);
  const auto stem = config.out("report/report_" + kcp::join(group_by, "_"));
  kcp::write_table(table, stem);
  std::cout << kcp::table_csv(table);
  std::cout << "written: " << stem << ".csv\n";
}

int make_world(const std::string& rules_path, const kcp::WorldParams& params, const std::string& dir) {
  const auto rules = rules_path.empty() ? kcp::default_rule_set() : kcp::load_rule_set(rules_path);
  const auto truth = kcp::make_synthetic_world(rules, params);
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  kcp::save_rule_set(rules, (fs::path(dir) / "rules.json").string());
  kcp::save_pkg(truth, (fs::path(dir) / "world.json").string());

  // Confidences spread evenly over [0.35, 0.95] in rule order.
  nlohmann::json confidences = nlohmann::json::object();
  const auto n = rules.rules().size();
  for (std::size_t i = 0; i < n; ++i) {
    const double c = n > 1 ? 0.35 + 0.6 * static_cast<double>(i) / static_cast<double>(n - 1) : 0.9;
    confidences[rules.rules()[i].id] = std::round(c * 1000.0) / 1000.0;
  }
  const nlohmann::json profile{{"model_id", "simulated-demo"},
                               {"ground_truth_path", "world.json"},
                               {"rule_confidence", confidences},
                               {"default_confidence", 0.9},
                               {"direct_threshold", 1.0},
                               {"indirect_threshold", 0.7},
                               {"shift_accept_below", 0.5},
                               {"abstain_below", 0.3},
                               {"attention_decay", 0.9},
                               {"length_boost", 0.1},
                               {"unstable_below", 0.4},
                               {"deviated_confidence_boost", 0.05},
                               {"conforming_confidence_shift", -0.02}};
  kcp::write_file((fs::path(dir) / "profile.json").string(), profile.dump(2) + "\n");
  const auto& root = truth.node(*truth.root());
  std::cout << "root: " << root.surface << ":" << root.type << "\n";
  std::cout << "written: " << dir << "/{rules,world,profile}.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kcprobe: knowledge-consistency probing harness"};
  app.require_subcommand(1);
  Common common;

  auto* build = app.add_subcommand("build-pkg", "elicit a knowledge graph from the backend");
  add_common(build, common);

  auto* extract = app.add_subcommand("extract-chains", "enumerate and sample data chains");
  add_common(extract, common);

  auto* make = app.add_subcommand("make-distractors", "build distractors for every chain");
  add_common(make, common);

  auto* plan = app.add_subcommand("plan", "print round and hop accounting");
  add_common(plan, common);
  std::string plan_chains;
  bool plan_as_json = false;
  plan->add_option("--chains", plan_chains, "count from a chains file instead of the [chains] plan")
      ->check(CLI::ExistingFile);
  plan->add_flag("--json", plan_as_json, "print JSON");

  auto* probe = app.add_subcommand("run-probe", "run probe sessions");
  add_common(probe, common);
  bool dry_run = false, resume = false;
  std::string ablation;
  probe->add_flag("--dry-run", dry_run, "print the plan and exit without backend calls");
  probe->add_flag("--resume", resume, "skip sessions already saved");
  probe->add_option("--ablation", ablation, "none or last2")->check(CLI::IsMember({"none", "last2"}));

  auto* report = app.add_subcommand("report", "compute tables and figure data");
  add_common(report, common);
  std::string group_by_arg;
  std::string sessions_path;
  report->add_option("--group-by", group_by_arg, "extra table grouped by these dimensions (comma separated)");
  report->add_option("--sessions", sessions_path, "sessions file (default: <out>/sessions.jsonl)");

  auto* replay = app.add_subcommand("replay", "re-run probe sessions from the response cache only");
  add_common(replay, common);
  replay->add_option("--ablation", ablation, "none or last2")->check(CLI::IsMember({"none", "last2"}));

  auto* run = app.add_subcommand("run", "build-pkg, extract-chains, make-distractors, run-probe and report");
  add_common(run, common);
  run->add_flag("--resume", resume, "skip sessions already saved");
  run->add_option("--ablation", ablation, "none or last2")->check(CLI::IsMember({"none", "last2"}));

  auto* world = app.add_subcommand("make-world", "write a synthetic ground-truth world and a simulated profile");
  std::string world_rules, world_dir;
  kcp::WorldParams world_params;
  world_params.entities_per_type = 6;
  world->add_option("--rules", world_rules, "rule set JSON (default: built-in)")->check(CLI::ExistingFile);
  world->add_option("--entities-per-type", world_params.entities_per_type, "entities per type")
      ->check(CLI::PositiveNumber);
  world->add_option("--pair-facts", world_params.pair_facts_per_rule, "facts per two-subject rule");
  world->add_option("--seed", world_params.seed, "world seed");
  world->add_option("--out", world_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (world->parsed()) return make_world(world_rules, world_params, world_dir);
    auto config = load(common);
    if (!ablation.empty()) config.ablation = kcp::parse_ablation(ablation);
    const auto rules = kcp::config_rules(config);

    if (build->parsed()) {
      kcp::BackendStack stack(config, rules);
      const auto built = kcp::stage_build_pkg(config, rules, stack.backend());
      print_stats(built.pkg);
      std::cout << "requests: " << built.requests << (built.exhausted ? " (limits reached)" : "") << "\n";
      std::cout << "written: " << config.out("pkg.json") << "\n";
      return 0;
    }
    if (extract->parsed()) {
      const auto pkg = load_graph(config);
      print_stats(pkg);
      const auto chains = kcp::stage_extract_chains(config, pkg);
      std::cout << "chains: " << chains.size() << "\nwritten: " << config.out("chains.jsonl") << "\n";
      return 0;
    }
    if (make->parsed()) {
      const auto pkg = load_graph(config);
      const auto chains = kcp::load_chains(config.out("chains.jsonl"));
      std::optional<kcp::BackendStack> stack;
      if (config.llm_distractors) stack.emplace(config, rules);
      const auto result =
          kcp::stage_make_distractors(config, rules, pkg, chains, stack ? &stack->backend() : nullptr);
      std::cout << "distractors: " << result.distractors.size() << " (skipped " << result.skipped << ")\n";
      std::cout << "written: " << config.out("distractors.jsonl") << "\n";
      return 0;
    }
    if (plan->parsed()) {
      const auto p = plan_chains.empty() ? kcp::plan_from_counts(config)
                                         : kcp::plan_experiment(config, kcp::load_chains(plan_chains));
      std::cout << (plan_as_json ? kcp::plan_json(p).dump(2) + "\n" : kcp::plan_text(p));
      return 0;
    }
    if (probe->parsed() || replay->parsed()) {
      if (replay->parsed()) config.backend.kind = "replay";
      const auto chains = kcp::load_chains(config.out("chains.jsonl"));
      const auto distractors = kcp::load_distractors(config.out("distractors.jsonl"));
      if (dry_run) {
        std::cout << kcp::plan_text(kcp::plan_experiment(config, chains));
        std::cout << "distractors on disk: " << distractors.size() << "\n";
        return 0;
      }
      kcp::BackendStack stack(config, rules);
      const auto summary =
          kcp::stage_run_probe(config, rules, chains, distractors, stack.backend(), resume, &g_stop);
      return finish_probe(summary, config);
    }
    if (report->parsed()) {
      const auto sessions = kcp::load_sessions(sessions_path.empty() ? config.out("sessions.jsonl") : sessions_path);
      const auto pkg = load_graph(config);
      const auto doc = kcp::stage_report(config, sessions, pkg);
      write_grouped(config, sessions, group_by_arg.empty() ? std::vector<std::string>{} : kcp::split(group_by_arg, ','));
      std::cout << "sessions: " << doc["sessions"] << " (baseline " << doc["baseline_sessions"] << ", failed "
                << doc["failed_sessions"] << ")\nwritten: " << config.out("report") << "\n";
      return 0;
    }
    if (run->parsed()) {
      kcp::BackendStack stack(config, rules);
      kcp::Pkg pkg;
      if (config.pkg_path.empty()) {
        pkg = kcp::stage_build_pkg(config, rules, stack.backend()).pkg;
      } else {
        pkg = load_graph(config);
      }
      const auto chains = kcp::stage_extract_chains(config, pkg);
      const auto made = kcp::stage_make_distractors(config, rules, pkg, chains,
                                                    config.llm_distractors ? &stack.backend() : nullptr);
      std::cout << kcp::plan_text(kcp::plan_experiment(config, chains));
      const auto summary = kcp::stage_run_probe(config, rules, chains, made.distractors, stack.backend(), resume, &g_stop);
      const int rc = finish_probe(summary, config);
      if (rc != 0) return rc;
      kcp::stage_report(config, summary.sessions, pkg);
      std::cout << "written: " << config.out("report") << "\n";
      return 0;
    }
  } catch (const kcp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case kcp::ErrorCode::kConfigError:
      case kcp::ErrorCode::kNotFound:
      case kcp::ErrorCode::kParseError:
      case kcp::ErrorCode::kInvalidArgument:
      case kcp::ErrorCode::kInvalidSpec:
        return 2;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
