#include <gtest/gtest.h>

#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>

#include "rationale/backend.hpp"
#include "rationale/http_backend.hpp"
#include "rationale/mock_backend.hpp"
#include "support/harness.hpp"

using namespace rationale;
using nlohmann::json;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::IoError;
}

GenerationRequest req(std::string prompt, int n = 1) {
  GenerationRequest r;
  r.prompt = std::move(prompt);
  r.num_samples = n;
  return r;
}

}  // namespace

TEST(Mock, ScriptedTableEchoes) {
  Gateway gw;
  harness::bind_mock(gw, {{"completions", {{{"prompt", "Q1"}, {"outputs", {"A", "B", "C"}}}}}});
  EXPECT_EQ(gw.generate(req("Q1", 3), Role::Agent), (std::vector<std::string>{"A", "B", "C"}));
}

TEST(Mock, ExactlyNCompletionsForEveryN) {
  Gateway gw;
  harness::bind_mock(gw, {{"completions", {{{"prompt_contains", "x"}, {"outputs", {"one", "two"}}}}}});
  for (int n = 1; n <= 16; ++n) {
    auto out = gw.generate(req("xyz", n), Role::Agent);
    ASSERT_EQ(out.size(), static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) EXPECT_EQ(out[static_cast<std::size_t>(k)], k % 2 ? "two" : "one");
  }
}

TEST(Mock, DeterministicAcrossRepeats) {
  json fx = {{"shuffle_completions", true},
             {"completions", {{{"prompt", "P"}, {"outputs", {"a", "b", "c", "d", "e"}}}}},
             {"distribution", {{"rules", {{{"context_contains", "P"}, {"token", "a"}, {"prob", 0.25}}}}}}};
  Gateway gw;
  harness::bind_mock(gw, fx);
  auto r = req("P", 5);
  r.seed = 42;
  auto first = gw.generate(r, Role::Agent);
  auto first_scores = gw.score_continuation("P", " a b", Role::Scorer);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(gw.generate(r, Role::Agent), first);
    auto s = gw.score_continuation("P", " a b", Role::Scorer);
    ASSERT_EQ(s.size(), first_scores.size());
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(s[k].logprob, first_scores[k].logprob);
  }
  auto sorted = first;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::string>{"a", "b", "c", "d", "e"}));
}

TEST(Mock, ScoreIsAdditiveOverSplits) {
  std::mt19937_64 rng(7);
  json rules = json::array();
  std::uniform_real_distribution<double> p(0.05, 1.0);
  for (std::string tok : {"the", "cat", "sat", "on", "mat"}) rules.push_back({{"token", tok}, {"prob", p(rng)}});
  rules.push_back({{"context_suffix", "cat"}, {"prob", 0.5}});
  Gateway gw;
  harness::bind_mock(gw, {{"distribution", {{"rules", rules}, {"vocab_size", 50}}}});
  std::vector<std::string> words = {"the", "cat", "sat", "on", "the", "mat", "again"};
  for (std::size_t split = 1; split < words.size(); ++split) {
    std::string a, b;
    for (std::size_t i = 0; i < words.size(); ++i) (i < split ? a : b) += " " + words[i];
    auto sum = [](const std::vector<TokenScore>& xs) {
      double s = 0;
      for (const auto& x : xs) s += x.logprob;
      return s;
    };
    double whole = sum(gw.score_continuation("Start:", a + b, Role::Scorer));
    double parts = sum(gw.score_continuation("Start:", a, Role::Scorer)) +
                   sum(gw.score_continuation("Start:" + a, b, Role::Scorer));
    EXPECT_NEAR(whole, parts, 1e-9);
  }
}

TEST(Mock, WordTokensConcatenateBack) {
  MockBackend m(json::object());
  std::string s = "  Hello, world.\n\nNext line  ";
  auto toks = m.tokenize(s);
  std::string joined;
  for (const auto& t : toks) joined += t;
  EXPECT_EQ(joined, s);
  EXPECT_EQ(m.count_tokens(s, ""), toks.size());
}

TEST(Mock, PerModelOverridesInheritBase) {
  json fx = {{"default_outputs", {"base"}},
             {"distribution", {{"default_prob", 0.5}}},
             {"models", {{"special", {{"default_outputs", {"special"}}}}}}};
  auto m = std::make_shared<MockBackend>(fx);
  Gateway gw;
  gw.bind({Role::Agent, "mock", "special"}, m);
  gw.bind({Role::Rationalyst, "mock", "other"}, m);
  EXPECT_EQ(gw.generate(req("x"), Role::Agent).front(), "special");
  EXPECT_EQ(gw.generate(req("x"), Role::Rationalyst).front(), "base");
  EXPECT_NEAR(gw.score_continuation("", "w", Role::Agent).front().logprob, std::log(0.5), 1e-15);
}

TEST(Gateway, StopStringsAndEmptyCompletion) {
  Gateway gw;
  harness::bind_mock(gw, {{"completions", {{{"prompt", "s"}, {"outputs", {"keep\nSTOP drop", "x STOP"}}}}},
                          {"default_outputs", {""}}});
  auto r = req("s", 2);
  r.stop_strings = {"STOP", "\n"};
  EXPECT_EQ(gw.generate(r, Role::Agent), (std::vector<std::string>{"keep", "x "}));
  EXPECT_EQ(code_of([&] { gw.generate(req("nothing"), Role::Agent); }), ErrorCode::EmptyCompletion);
}

TEST(Gateway, Preconditions) {
  Gateway gw;
  EXPECT_EQ(code_of([&] { gw.generate(req("p"), Role::Agent); }), ErrorCode::PreconditionViolation);
  harness::bind_mock(gw, json::object());
  EXPECT_EQ(code_of([&] { gw.generate(req(""), Role::Agent); }), ErrorCode::PreconditionViolation);
  EXPECT_EQ(code_of([&] { gw.generate(req("p", 0), Role::Agent); }), ErrorCode::PreconditionViolation);
  auto bad = req("p");
  bad.temperature = -1;
  EXPECT_EQ(code_of([&] { gw.generate(bad, Role::Agent); }), ErrorCode::PreconditionViolation);
  EXPECT_EQ(code_of([&] { gw.score_continuation("p", "", Role::Scorer); }), ErrorCode::PreconditionViolation);
}

TEST(Gateway, CapabilityMissingWithoutLogprobs) {
  Gateway gw;
  harness::bind_mock(gw, {{"logprobs", false}});
  EXPECT_EQ(code_of([&] { gw.score_continuation("a", "b", Role::Scorer); }), ErrorCode::CapabilityMissing);
}

TEST(Gateway, EmbeddingDimensionFixedPerRun) {
  json fx = {{"embedding", {{"table", {{"a", {1.0, 0.0}}, {"b", {0.0, 1.0, 0.0}}}}}}};
  Gateway gw;
  harness::bind_mock(gw, fx);
  EXPECT_EQ(gw.embed("a").dim(), 2u);
  EXPECT_EQ(code_of([&] { gw.embed("b"); }), ErrorCode::DimensionMismatch);
}

TEST(Gateway, EmbeddingTruncationWarns) {
  json fx = {{"embedding", {{"dim", 2}, {"max_tokens", 2}, {"table", {{"one two", {1.0, 2.0}}}}}}};
  Gateway gw;
  harness::bind_mock(gw, fx);
  auto v = gw.embed("one two three four");
  EXPECT_EQ(v.values, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(gw.diagnostics().count_containing("TruncationWarning"), 1u);
  auto u = gw.embed("free text never scripted");
  EXPECT_EQ(u.dim(), 2u);
  EXPECT_EQ(gw.embed("free text never scripted"), u);
}

TEST(Gateway, RequestLogRecordsSampling) {
  Gateway gw;
  auto m = harness::bind_mock(gw, {{"default_outputs", {"hi"}}});
  auto r = req("hello", 3);
  r.seed = 9;
  gw.generate(r, Role::Agent);
  auto log = m->request_log();
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].model, "agent");
  EXPECT_EQ(log[0].num_samples, 3);
  EXPECT_DOUBLE_EQ(log[0].temperature, 0.7);
  EXPECT_EQ(log[0].top_k, 3);
  EXPECT_EQ(log[0].seed, 9u);
}

TEST(Backend, BadFixtureIsSchemaError) {
  EXPECT_EQ(code_of([] { MockBackend m(json::array()); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { MockBackend m(json{{"tokenizer", "bpe"}}); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { MockBackend m(json{{"distribution", {{"rules", {{{"prob", 2.0}}}}}}}); }), ErrorCode::SchemaError);
}

// --- HTTP -------------------------------------------------------------------

namespace {

class FakeServer {
 public:
  FakeServer() {
    srv_.Post("/v1/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
      auto body = json::parse(rq.body);
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(body);
        auth_ = rq.get_header_value("Authorization");
      }
      if (body["prompt"] == "refuse") {
        rs.status = 503;
        rs.set_content("overloaded", "text/plain");
        return;
      }
      json resp;
      if (body["echo"] == true) {
        // Echo tokens of "The cat" + " sat." with offsets.
        std::string p = body["prompt"];
        std::vector<std::string> toks;
        std::vector<std::size_t> offs;
        std::size_t i = 0;
        while (i < p.size()) {
          std::size_t b = i;
          while (i < p.size() && p[i] == ' ') ++i;
          while (i < p.size() && p[i] != ' ') ++i;
          toks.push_back(p.substr(b, i - b));
          offs.push_back(b);
        }
        json lps = json::array();
        for (std::size_t k = 0; k < toks.size(); ++k) lps.push_back(k == 0 ? json(nullptr) : json(-0.5 * k));
        resp = {{"choices", {{{"index", 0}, {"text", p}, {"logprobs", {{"tokens", toks}, {"token_logprobs", lps}, {"text_offset", offs}}}}}}};
      } else {
        int n = body["n"];
        json choices = json::array();
        for (int k = n - 1; k >= 0; --k) choices.push_back({{"index", k}, {"text", "completion " + std::to_string(k)}});
        resp = {{"choices", choices}};
      }
      rs.set_content(resp.dump(), "application/json");
    });
    srv_.Post("/v1/embeddings", [](const httplib::Request& rq, httplib::Response& rs) {
      auto body = json::parse(rq.body);
      std::string in = body["input"];
      rs.set_content(json({{"data", {{{"embedding", {static_cast<double>(in.size()), 1.0, 0.0}}}}}}).dump(),
                     "application/json");
    });
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~FakeServer() {
    srv_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::vector<json> bodies() {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::string auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server srv_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::vector<json> bodies_;
  std::string auth_;
};

}  // namespace

TEST(Http, CompletionBodyShape) {
  GenerationRequest r = req("Q", 3);
  r.stop_strings = {"\n"};
  r.seed = 5;
  auto b = HttpBackend::completion_body(r, "agent-model");
  EXPECT_EQ(b["model"], "agent-model");
  EXPECT_EQ(b["prompt"], "Q");
  EXPECT_EQ(b["n"], 3);
  EXPECT_DOUBLE_EQ(b["temperature"].get<double>(), 0.7);
  EXPECT_EQ(b["top_k"], 3);
  EXPECT_EQ(b["max_tokens"], 256);
  EXPECT_EQ(b["stop"], json::array({"\n"}));
  EXPECT_EQ(b["echo"], false);
  EXPECT_TRUE(b.contains("logprobs"));
  EXPECT_EQ(b["seed"], 5);
}

TEST(Http, RejectsNonHttpEndpoint) {
  HttpBackendOptions o;
  o.endpoint = "https://example.com";
  EXPECT_EQ(code_of([&] { HttpBackend b(o); }), ErrorCode::ConfigInvalid);
}

TEST(Http, RoundTripAgainstLocalServer) {
  FakeServer srv;
  HttpBackendOptions o;
  o.endpoint = srv.endpoint();
  o.api_key = "k123";
  auto b = std::make_shared<HttpBackend>(o);
  Gateway gw;
  gw.bind({Role::Agent, o.endpoint, "m-agent"}, b);
  gw.bind({Role::Scorer, o.endpoint, "m-scorer"}, b);
  gw.bind({Role::Embedder, o.endpoint, "m-embed"}, b);

  auto outs = gw.generate(req("Question?", 3), Role::Agent);
  EXPECT_EQ(outs, (std::vector<std::string>{"completion 0", "completion 1", "completion 2"}));
  auto sent = srv.bodies().back();
  EXPECT_EQ(sent["model"], "m-agent");
  EXPECT_DOUBLE_EQ(sent["temperature"].get<double>(), 0.7);
  EXPECT_EQ(sent["top_k"], 3);
  EXPECT_EQ(srv.auth(), "Bearer k123");

  auto scores = gw.score_continuation("The cat", " sat down.", Role::Scorer);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].token, " sat");
  EXPECT_DOUBLE_EQ(scores[0].logprob, -1.0);
  EXPECT_DOUBLE_EQ(scores[1].logprob, -1.5);
  auto echo = srv.bodies().back();
  EXPECT_EQ(echo["echo"], true);
  EXPECT_EQ(echo["max_tokens"], 0);
  EXPECT_EQ(echo["prompt"], "The cat sat down.");

  auto v = gw.embed("abcd");
  EXPECT_EQ(v.values, (std::vector<double>{4.0, 1.0, 0.0}));

  EXPECT_EQ(code_of([&] { gw.generate(req("refuse"), Role::Agent); }), ErrorCode::BackendRefusal);
}

TEST(Http, TransportErrorWhenUnreachable) {
  int port;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  HttpBackendOptions o;
  o.endpoint = "http://127.0.0.1:" + std::to_string(port);
  o.timeout = std::chrono::milliseconds(2000);
  HttpBackend b(o);
  EXPECT_EQ(code_of([&] { b.generate(req("x"), "m"); }), ErrorCode::TransportError);
}

TEST(Http, CapabilityMissingWhenConfiguredWithoutLogprobs) {
  HttpBackendOptions o;
  o.endpoint = "http://127.0.0.1:9";
  o.logprobs = false;
  Gateway gw;
  gw.bind({Role::Scorer, o.endpoint, "m"}, std::make_shared<HttpBackend>(o));
  EXPECT_EQ(code_of([&] { gw.score_continuation("a", "b", Role::Scorer); }), ErrorCode::CapabilityMissing);
}
