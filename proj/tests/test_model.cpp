#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <thread>

#include "fake_server.h"
#include "fixtures.h"
#include "kcprobe/cache.h"
#include "kcprobe/error.h"
#include "kcprobe/http_backend.h"
#include "kcprobe/simulated.h"

using namespace kcp;
using kcp::testing::E;

namespace {

SimulatedBackend canada_model(double confidence, double abstain_below = 0.0) {
  Pkg truth(default_rule_set().id(), E("Canada", "Country"));
  kcp::testing::fact(truth, "Canada", "Country", "capital-is", "Ottawa", "City");
  kcp::testing::fact(truth, "Toronto", "City", "country-of-city", "Canada", "Country");
  auto profile = kcp::testing::profile_for(truth, confidence);
  profile.abstain_below = abstain_below;
  return SimulatedBackend(default_rule_set(), profile);
}

std::vector<ChatTurn> ask(const std::string& question, const std::string& context = "") {
  std::vector<ChatTurn> h;
  if (!context.empty()) h.push_back({Role::kUser, "Here is some information: " + context});
  h.push_back({Role::kUser, question + " Answer with a short entity."});
  return h;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Simulated, AnswersFromGroundTruthWithLogprob) {
  auto model = canada_model(0.9);
  const auto c = model.chat(ask("What is the capital of Canada?"), {});
  EXPECT_EQ(c.text, "Ottawa");
  ASSERT_FALSE(c.tokens.empty());
  EXPECT_NEAR(c.tokens[0].logprob, std::log(0.9), 1e-12);
}

TEST(Simulated, DirectStatementIsFollowed) {
  auto model = canada_model(0.9);
  const auto c = model.chat(ask("What is the capital of Canada?", "The capital of Canada is Toronto"), {});
  EXPECT_EQ(c.text, "Toronto");
}

TEST(Simulated, AbstainsBelowThreshold) {
  auto model = canada_model(0.3, 0.4);
  EXPECT_EQ(model.chat(ask("What is the capital of Canada?"), {}).text, std::string(kRefusal));
}

TEST(Simulated, UnknownFactIsRefused) {
  auto model = canada_model(0.9);
  EXPECT_EQ(model.chat(ask("What is the capital of Atlantis?"), {}).text, std::string(kRefusal));
}

TEST(Simulated, PureFunctionOfInputs) {
  auto model = canada_model(0.35);
  auto p = model.profile();
  p.unstable_below = 0.5;
  SimulatedBackend noisy(default_rule_set(), p);
  GenerationParams params;
  params.temperature = 0.7;
  params.seed = 4;
  const auto h = ask("What is the capital of Canada?");
  EXPECT_EQ(noisy.chat(h, params), noisy.chat(h, params));
}

TEST(Simulated, RejectsHistoryNotEndingInUserTurn) {
  auto model = canada_model(0.9);
  std::vector<ChatTurn> h{{Role::kUser, "hi"}, {Role::kAssistant, "hello"}};
  EXPECT_THROW(model.chat(h, {}), Error);
  EXPECT_THROW(model.chat(std::vector<ChatTurn>{}, {}), Error);
}

TEST(Cache, SecondIdenticalCallMakesNoRequest) {
  auto model = canada_model(0.9);
  CountingBackend counting(model);
  ResponseCache cache(fresh_dir("kcp_cache_hit"));
  CachedBackend cached(cache, &counting);
  const auto h = ask("What is the capital of Canada?");
  const auto a = cached.chat(h, {});
  const auto b = cached.chat(h, {});
  EXPECT_EQ(a, b);
  EXPECT_EQ(counting.calls(), 1u);
  EXPECT_EQ(cached.hits(), 1u);
}

TEST(Cache, DifferentTemperatureIsNewCall) {
  auto model = canada_model(0.9);
  CountingBackend counting(model);
  ResponseCache cache(fresh_dir("kcp_cache_temp"));
  CachedBackend cached(cache, &counting);
  const auto h = ask("What is the capital of Canada?");
  GenerationParams hot;
  hot.temperature = 0.7;
  cached.chat(h, {});
  cached.chat(h, hot);
  EXPECT_EQ(counting.calls(), 2u);
  EXPECT_NE(ResponseCache::key("m", h, {}), ResponseCache::key("m", h, hot));
}

TEST(Cache, ReplayWithoutBackend) {
  auto model = canada_model(0.9);
  const auto dir = fresh_dir("kcp_cache_replay");
  const auto h = ask("What is the capital of Canada?");
  Completion recorded;
  {
    ResponseCache cache(dir);
    CachedBackend cached(cache, &model);
    recorded = cached.chat(h, {});
  }
  ResponseCache cache(dir);
  CachedBackend replay(cache, nullptr, model.model_id());
  EXPECT_EQ(replay.chat(h, {}), recorded);
  try {
    replay.chat(ask("What is the capital of Atlantis?"), {});
    ADD_FAILURE() << "replay miss did not throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendError);
  }
}

TEST(Cache, CorruptedEntryIsBypassed) {
  auto model = canada_model(0.9);
  CountingBackend counting(model);
  const auto dir = fresh_dir("kcp_cache_corrupt");
  ResponseCache cache(dir);
  CachedBackend cached(cache, &counting);
  const auto h = ask("What is the capital of Canada?");
  cached.chat(h, {});
  for (const auto& f : std::filesystem::recursive_directory_iterator(dir)) {
    if (f.is_regular_file()) std::ofstream(f.path()) << "{not json";
  }
  EXPECT_EQ(cached.chat(h, {}).text, "Ottawa");
  EXPECT_EQ(counting.calls(), 2u);
  EXPECT_GE(cache.corrupted(), 1u);
}

TEST(Completion, SpanLogprobSumsTokens) {
  Completion c;
  c.text = "New York";
  c.tokens = {{"New", -0.1}, {" York", -0.2}};
  const auto lp = span_logprob(c, 0, c.text.size());
  ASSERT_TRUE(lp.has_value());
  EXPECT_NEAR(*lp, -0.3, 1e-12);
}

namespace {

const char* kReply = R"({
  "model": "fake-model-0613",
  "choices": [{"message": {"role": "assistant", "content": "Ottawa"},
               "logprobs": {"content": [{"token": "Ott", "logprob": -0.05}, {"token": "awa", "logprob": -0.01}]}}],
  "usage": {"prompt_tokens": 12, "completion_tokens": 2}
})";

}  // namespace

TEST(Http, SendsLogprobRequestAndParsesTokens) {
  nlohmann::json seen;
  kcp::testing::FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    res.set_content(kReply, "application/json");
  });
  HttpBackend backend(server.config());
  GenerationParams params;
  const auto c = backend.chat(ask("What is the capital of Canada?"), params);
  EXPECT_EQ(c.text, "Ottawa");
  ASSERT_EQ(c.tokens.size(), 2u);
  EXPECT_FALSE(c.degraded);
  EXPECT_EQ(c.usage.completion_tokens, 2);
  EXPECT_EQ(seen.at("logprobs"), true);
  EXPECT_EQ(seen.at("model"), "fake-model");
  EXPECT_DOUBLE_EQ(seen.at("temperature").get<double>(), 0.3);
  EXPECT_EQ(seen.at("max_tokens"), 512);
  EXPECT_EQ(seen.at("messages").back().at("role"), "user");
}

TEST(Http, MissingLogprobsIsDegraded) {
  kcp::testing::FakeServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": [{"message": {"content": "Ottawa"}}]})", "application/json");
  });
  HttpBackend backend(server.config());
  const auto c = backend.chat(ask("What is the capital of Canada?"), {});
  EXPECT_EQ(c.text, "Ottawa");
  EXPECT_TRUE(c.tokens.empty());
  EXPECT_TRUE(c.degraded);
}

TEST(Http, RetriesTransientFailures) {
  kcp::testing::FakeServer server([](const httplib::Request&, httplib::Response& res) {
    static std::atomic<int> n{0};
    if (n++ < 2) {
      res.status = 503;
      return;
    }
    res.set_content(kReply, "application/json");
  });
  HttpBackend backend(server.config());
  EXPECT_EQ(backend.chat(ask("What is the capital of Canada?"), {}).text, "Ottawa");
  EXPECT_EQ(server.hits.load(), 3);
}

TEST(Http, ClientErrorIsNotRetried) {
  kcp::testing::FakeServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error": {"message": "bad"}})", "application/json");
  });
  HttpBackend backend(server.config());
  try {
    backend.chat(ask("What is the capital of Canada?"), {});
    ADD_FAILURE() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendError);
  }
  EXPECT_EQ(server.hits.load(), 1);
}

TEST(Http, PersistentServerErrorGivesUpAfterRetries) {
  kcp::testing::FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  HttpBackend backend(server.config());
  EXPECT_THROW(backend.chat(ask("What is the capital of Canada?"), {}), Error);
  EXPECT_EQ(server.hits.load(), 1 + server.config().max_retries);
}
