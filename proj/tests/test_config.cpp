#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "fake_server.h"
#include "fixtures.h"
#include "kcprobe/error.h"
#include "kcprobe/experiment.h"

using namespace kcp;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(schema_version = 1
seed = 5
[chains]
2-hop = 3
)";

ErrorCode config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted:\n" << text;
  return ErrorCode::kInvalidArgument;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const auto log = (fs::temp_directory_path() / "kcp_cli_out.txt").string();
  const int status = std::system((std::string(KCPROBE_CLI) + " " + args + " > " + log + " 2>&1").c_str());
  if (output) {
    std::ifstream in(log);
    output->assign(std::istreambuf_iterator<char>(in), {});
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig counts(std::vector<std::pair<std::string, std::size_t>> plan, std::vector<Format> formats) {
  auto c = parse_config(kMinimal);
  c.chain_plan = std::move(plan);
  c.formats = std::move(formats);
  return c;
}

}  // namespace

TEST(ParseConfig, DemoConfigLoads) {
  const auto c = load_config("configs/demo.toml");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.backend.kind, "simulated");
  ASSERT_EQ(c.roots.size(), 1u);
  EXPECT_EQ(c.roots[0].type, "Country");
  EXPECT_EQ(c.chain_plan.size(), 6u);
  EXPECT_EQ(c.formats.size(), 2u);
  EXPECT_TRUE(fs::path(c.resolve(c.backend.profile)).is_absolute() ||
              fs::exists(c.resolve(c.backend.profile)));
}

TEST(ParseConfig, DefaultsFollowProbingSetup) {
  const auto c = parse_config(kMinimal);
  EXPECT_DOUBLE_EQ(c.params.temperature, 0.3);
  EXPECT_DOUBLE_EQ(c.params.top_p, 1.0);
  EXPECT_EQ(c.params.max_tokens, 512);
  EXPECT_EQ(c.methods.size(), 3u);
  EXPECT_EQ(c.degrees.size(), 2u);
}

TEST(ParseConfig, Errors) {
  EXPECT_EQ(config_error("seed = 1\n"), ErrorCode::kConfigError);  // no schema_version
  EXPECT_EQ(config_error("schema_version = 2\n"), ErrorCode::kConfigError);
  EXPECT_EQ(config_error("schema_version = 1\ncolour = 3\n"), ErrorCode::kConfigError);
  EXPECT_EQ(config_error("schema_version = 1\n[chains]\n2-hop = -4\n"), ErrorCode::kConfigError);
  EXPECT_EQ(config_error("schema_version = 1\n[chains]\nzigzag = 4\n"), ErrorCode::kConfigError);
  EXPECT_EQ(config_error("schema_version = 1\n[pkg]\nroots = [\"Canada\"]\n"), ErrorCode::kConfigError);
  EXPECT_EQ(config_error("schema_version = 1\n[backend]\nkind = \"telepathy\"\n"), ErrorCode::kConfigError);
  EXPECT_EQ(config_error("schema_version = 1\n[distractors]\nmethods = [\"Sideways\"]\n"), ErrorCode::kConfigError);
}

TEST(Plan, PaperScaleMultiHop) {
  const auto p = plan_from_counts(counts({{"2-hop", 200}, {"3-hop", 200}, {"4-hop", 200}}, {Format::kSingleSentence}));
  EXPECT_EQ(p.rounds, 10800u);
  EXPECT_EQ(p.hops, 34800u);
}

TEST(Plan, PaperScaleMultiDependent) {
  const auto p = plan_from_counts(counts({{"1-1-0", 100}, {"1-1-1", 100}, {"1-2-0", 100}}, {Format::kSingleSentence}));
  EXPECT_EQ(p.rounds, 6600u);
  EXPECT_EQ(p.hops, 24600u);
}

TEST(Plan, OneTwoHopChainBothFormats) {
  const auto config = counts({{"2-hop", 1}}, {Format::kSingleSentence, Format::kParagraph});
  const auto g = kcp::testing::world_facts();
  const auto chain = make_chain(ChainKind::multi_hop(2), {kcp::testing::jackie_chain(g).triplets[0],
                                                          kcp::testing::jackie_chain(g).triplets[1]});
  const auto p = plan_experiment(config, {chain});
  EXPECT_EQ(p.rounds, 24u);
  EXPECT_EQ(p.hops, 48u);
}

TEST(Plan, AblationQueriesTwoHopsPerRound) {
  auto config = counts({{"4-hop", 10}}, {Format::kSingleSentence});
  config.ablation = Ablation::kLastTwo;
  const auto p = plan_from_counts(config);
  EXPECT_EQ(p.rounds, 240u);
  EXPECT_EQ(p.hops, 480u);
}

TEST(Plan, UnplannedChainKindIsConfigError) {
  const auto config = counts({{"2-hop", 1}}, {Format::kSingleSentence});
  const auto g = kcp::testing::world_facts();
  try {
    plan_experiment(config, {kcp::testing::jackie_chain(g)});
    ADD_FAILURE() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
  }
}

TEST(Cli, PlanPrintsPaperScaleTotals) {
  std::string out;
  ASSERT_EQ(run_cli("plan --config configs/full_scale.toml", &out), 0) << out;
  EXPECT_NE(out.find("multi-hop total: 10800 rounds, 34800 hops"), std::string::npos) << out;
  EXPECT_NE(out.find("multi-dependent total: 6600 rounds, 24600 hops"), std::string::npos) << out;
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("plan --config does/not/exist.toml"), 2);
  EXPECT_EQ(run_cli("plan --config configs/demo.toml --concurrency zero"), 2);
  const auto bad = fs::temp_directory_path() / "kcp_bad.toml";
  std::ofstream(bad) << "schema_version = 1\nwhatever = 1\n";
  EXPECT_EQ(run_cli("plan --config " + bad.string()), 2);
}

TEST(Cli, MissingInputsExitTwo) {
  const auto dir = fs::temp_directory_path() / "kcp_missing_inputs";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg = dir / "c.toml";
  std::ofstream(cfg) << "schema_version = 1\noutput_dir = \"" << (dir / "out").string() << "\"\n[chains]\n2-hop = 1\n";
  std::string out;
  EXPECT_EQ(run_cli("report --config " + cfg.string(), &out), 2) << out;
  EXPECT_EQ(run_cli("run-probe --dry-run --config " + cfg.string(), &out), 2) << out;
}

TEST(Cli, DryRunMakesNoBackendCalls) {
  kcp::testing::FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const auto dir = fs::temp_directory_path() / "kcp_dry_run";
  fs::remove_all(dir);
  fs::create_directories(dir / "out");
  const auto g = kcp::testing::world_facts();
  const auto chain = kcp::testing::jackie_chain(g);
  save_chains({chain}, (dir / "out" / "chains.jsonl").string());
  EntityPool pool = EntityPool::from_pkg(g);
  save_distractors({make_distractor(chain, 1, Method::kObject, Degree::kTypeMatch, pool, default_rule_set(), 1)},
                   (dir / "out" / "distractors.jsonl").string());
  const auto cfg = dir / "c.toml";
  std::ofstream(cfg) << "schema_version = 1\noutput_dir = \"out\"\n[backend]\nkind = \"http\"\nbase_url = \""
                     << server.config().base_url << "\"\napi_key_env = \"\"\n[chains]\n3-hop = 1\n";
  std::string out;
  ASSERT_EQ(run_cli("run-probe --dry-run --config " + cfg.string(), &out), 0) << out;
  EXPECT_NE(out.find("total: 36 rounds, 108 hops"), std::string::npos) << out;
  EXPECT_EQ(server.hits.load(), 0);
  EXPECT_FALSE(fs::exists(dir / "out" / "sessions.jsonl"));
}
