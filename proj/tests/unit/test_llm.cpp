#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "pace/errors.hpp"
#include "pace/llm.hpp"
#include "support.hpp"

using namespace pace;
using namespace std::chrono_literals;

namespace {

ChatRequest simple_request(std::map<std::string, std::string> metadata = {}) {
  ChatRequest r;
  r.messages = {{Role::system, "sys"}, {Role::user, "hello there"}};
  r.metadata = std::move(metadata);
  return r;
}

std::shared_ptr<ScriptedProvider> faulty(std::vector<ScriptEntry> entries, std::shared_ptr<VirtualClock> clock) {
  auto p = std::make_shared<ScriptedProvider>(std::move(entries));
  p->set_clock(clock);
  p->set_jitter_seed(11);
  return p;
}

}  // namespace

TEST_CASE("request validation") {
  auto r = simple_request();
  CHECK_NOTHROW(r.validate());
  auto bad = r;
  bad.messages.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.messages.front().role = Role::assistant;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.top_p = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.temperature = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.max_tokens = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("transient failures are retried with bounded jittered backoff") {
  auto clock = std::make_shared<VirtualClock>();
  auto p = faulty({ScriptEntry::failure(ScriptFault::transport), ScriptEntry::failure(ScriptFault::rate_limited),
                   ScriptEntry::failure(ScriptFault::transport), ScriptEntry::text("ok")},
                  clock);
  auto resp = p->complete(simple_request());
  CHECK(resp.content == "ok");
  CHECK(p->call_count() == 4);
  const auto sleeps = clock->sleeps();
  REQUIRE(sleeps.size() == 3);
  const auto& policy = p->retry_policy();
  for (std::size_t k = 0; k < sleeps.size(); ++k) {
    const double ceiling = std::min<double>(policy.max_delay.count(), policy.base.count() * std::pow(policy.factor, k));
    CHECK(sleeps[k].count() >= 0);
    CHECK(sleeps[k].count() <= ceiling);
  }
}

TEST_CASE("retries stop at max_attempts and the last error surfaces") {
  auto clock = std::make_shared<VirtualClock>();
  auto p = std::make_shared<ScriptedProvider>(pace::test::always(ScriptEntry::failure(ScriptFault::transport)));
  p->set_clock(clock);
  RetryPolicy policy;
  policy.max_attempts = 3;
  p->set_retry_policy(policy);
  CHECK_THROWS_AS(p->complete(simple_request()), TransportError);
  CHECK(p->call_count() == 3);
  CHECK(clock->sleeps().size() == 2);
}

TEST_CASE("total backoff never exceeds max_total_delay") {
  auto clock = std::make_shared<VirtualClock>();
  auto p = std::make_shared<ScriptedProvider>(pace::test::always(ScriptEntry::failure(ScriptFault::rate_limited)));
  p->set_clock(clock);
  RetryPolicy policy;
  policy.max_attempts = 30;
  policy.base = 1000ms;
  policy.max_delay = 10000ms;
  policy.max_total_delay = 15000ms;
  p->set_retry_policy(policy);
  CHECK_THROWS_AS(p->complete(simple_request()), RateLimited);
  CHECK(clock->total_slept() <= 15000ms);
}

TEST_CASE("non-transient failures surface immediately") {
  auto clock = std::make_shared<VirtualClock>();
  auto p = faulty({ScriptEntry::failure(ScriptFault::malformed)}, clock);
  CHECK_THROWS_AS(p->complete(simple_request()), MalformedResponse);
  CHECK(p->call_count() == 1);
  auto q = faulty({ScriptEntry{"", FinishReason::content_filter, std::nullopt}}, clock);
  CHECK_THROWS_AS(q->complete(simple_request()), ContentFiltered);
  auto e = faulty({ScriptEntry::text("")}, clock);
  CHECK_THROWS_AS(e->complete(simple_request()), MalformedResponse);
  CHECK(clock->sleeps().empty());
}

TEST_CASE("same jitter seed gives the same backoff schedule") {
  auto run = [] {
    auto clock = std::make_shared<VirtualClock>();
    auto p = faulty({ScriptEntry::failure(ScriptFault::transport), ScriptEntry::failure(ScriptFault::transport),
                     ScriptEntry::text("ok")},
                    clock);
    p->complete(simple_request());
    return clock->sleeps();
  };
  CHECK(run() == run());
}

TEST_CASE("rate limiter spaces requests beyond the burst") {
  auto clock = std::make_shared<VirtualClock>();
  RateLimiter limiter(60, 2, clock);  // one per second, burst of two
  limiter.acquire();
  limiter.acquire();
  CHECK(clock->now() == 0ms);
  limiter.acquire();
  CHECK(clock->now() == 1000ms);
  clock->advance(5000ms);  // refills to capacity only
  limiter.acquire();
  limiter.acquire();
  const auto before = clock->now();
  limiter.acquire();
  CHECK(clock->now() - before == 1000ms);
  CHECK_THROWS_AS(RateLimiter(0, 1, clock), std::invalid_argument);
}

TEST_CASE("scripted rules match metadata and substrings, then the queue") {
  ScriptedProvider p({{"", {{"stage", "a"}}, {ScriptEntry::text("A1"), ScriptEntry::text("A2")}},
                      {"hello", {}, {ScriptEntry::text("greeting")}}},
                     {ScriptEntry::text("q1")});
  CHECK(p.complete(simple_request({{"stage", "a"}})).content == "A1");
  CHECK(p.complete(simple_request({{"stage", "a"}})).content == "A2");
  CHECK(p.complete(simple_request({{"stage", "a"}})).content == "A2");
  CHECK(p.complete(simple_request({{"stage", "b"}})).content == "greeting");
  auto other = simple_request();
  other.messages.back().content = "something else";
  CHECK(p.complete(other).content == "q1");
  CHECK_THROWS_AS(p.complete(other), MalformedResponse);
  CHECK(p.requests().size() == 6);
  CHECK(p.requests()[0].metadata.at("stage") == "a");
}

TEST_CASE("scripted provider loads from json") {
  auto p = ScriptedProvider::from_json(nlohmann::json::parse(R"({
    "rules": [{"metadata": {"stage": "x"}, "responses": ["rx", {"fault": "malformed"}]}],
    "queue": [{"content": "cut", "finish_reason": "length"}]
  })"));
  CHECK(p->complete(simple_request({{"stage", "x"}})).content == "rx");
  CHECK_THROWS_AS(p->complete(simple_request({{"stage", "x"}})), MalformedResponse);
  auto r = p->complete(simple_request());
  CHECK(r.finish_reason == FinishReason::length);
  CHECK(r.usage.completion_tokens == 1);
  CHECK_THROWS_AS(ScriptedProvider::from_json(nlohmann::json::parse(R"({"queue": [{"fault": "nope"}]})")),
                  ParseError);
}

TEST_CASE("http provider request and response bodies") {
  auto req = simple_request();
  req.temperature = 0.2;
  auto body = HttpProvider::request_body(req, "dflt");
  CHECK(body["model"] == "dflt");
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["temperature"] == 0.2);
  CHECK(body["max_tokens"] == 512);
  req.model_id = "m2";
  CHECK(HttpProvider::request_body(req, "dflt")["model"] == "m2");

  auto resp = HttpProvider::parse_response_body(
      R"({"choices":[{"message":{"role":"assistant","content":"hi"},"finish_reason":"length"}],
          "usage":{"prompt_tokens":7,"completion_tokens":2}})");
  CHECK(resp.content == "hi");
  CHECK(resp.finish_reason == FinishReason::length);
  CHECK(resp.usage.prompt_tokens == 7);
  CHECK_THROWS_AS(HttpProvider::parse_response_body("not json"), MalformedResponse);
  CHECK_THROWS_AS(HttpProvider::parse_response_body(R"({"choices":[]})"), MalformedResponse);
}

TEST_CASE("http provider against a local server maps status codes") {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = calls++;
    auto body = nlohmann::json::parse(req.body);
    if (body["messages"].back()["content"] == "bad") {
      res.status = 400;
      res.set_content(R"({"error":"bad request"})", "application/json");
      return;
    }
    if (n == 0) {
      res.status = 429;
      return;
    }
    CHECK(req.get_header_value("Authorization") == "Bearer secret");
    res.set_content(R"({"choices":[{"message":{"content":"pong"},"finish_reason":"stop"}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpProviderConfig cfg;
  cfg.api_base = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key = "secret";
  cfg.timeout_seconds = 5;
  HttpProvider provider(cfg);
  auto clock = std::make_shared<VirtualClock>();
  provider.set_clock(clock);
  CHECK(provider.complete(simple_request()).content == "pong");
  CHECK(calls == 2);
  CHECK(clock->sleeps().size() == 1);
  auto bad = simple_request();
  bad.messages.back().content = "bad";
  CHECK_THROWS_AS(provider.complete(bad), MalformedResponse);

  server.stop();
  th.join();
  CHECK_THROWS_AS(HttpProvider(HttpProviderConfig{"no-scheme", "", "m", 1}), std::invalid_argument);
}
