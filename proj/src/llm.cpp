#include "pace/llm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pace/errors.hpp"
#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> role_from(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  return std::nullopt;
}

std::string_view to_string(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::content_filter: return "content_filter";
  }
  return "stop";
}

std::optional<FinishReason> finish_reason_from(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  if (s == "content_filter") return FinishReason::content_filter;
  return std::nullopt;
}

void ChatRequest::validate() const {
  if (messages.empty()) throw std::invalid_argument("chat request has no messages");
  if (messages.front().role == Role::assistant)
    throw std::invalid_argument("first message must be system or user");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

// --- clocks ---------------------------------------------------------------

std::chrono::milliseconds SystemClock::now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(std::chrono::milliseconds d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

std::chrono::milliseconds VirtualClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep_for(std::chrono::milliseconds d) {
  std::lock_guard lock(mu_);
  sleeps_.push_back(d);
  now_ += d;
}

void VirtualClock::advance(std::chrono::milliseconds d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

std::vector<std::chrono::milliseconds> VirtualClock::sleeps() const {
  std::lock_guard lock(mu_);
  return sleeps_;
}

std::chrono::milliseconds VirtualClock::total_slept() const {
  std::lock_guard lock(mu_);
  std::chrono::milliseconds total{0};
  for (auto d : sleeps_) total += d;
  return total;
}

std::shared_ptr<Clock> system_clock() {
  static auto clock = std::make_shared<SystemClock>();
  return clock;
}

// --- rate limiter ---------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_minute, double burst, std::shared_ptr<Clock> clock)
    : rate_per_ms_(requests_per_minute / 60000.0),
      capacity_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      clock_(std::move(clock)) {
  if (!(requests_per_minute > 0)) throw std::invalid_argument("requests_per_minute must be positive");
  last_ = clock_->now();
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    const auto now = clock_->now();
    tokens_ = std::min(capacity_, tokens_ + static_cast<double>((now - last_).count()) * rate_per_ms_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::milliseconds(static_cast<long long>(std::ceil((1.0 - tokens_) / rate_per_ms_)));
    // Holding the lock keeps waiters in arrival order.
    clock_->sleep_for(wait);
  }
}

// --- provider base ----------------------------------------------------------

Provider::Provider() : clock_(system_clock()), rng_(0x5eedULL) {}

void Provider::set_jitter_seed(std::uint64_t seed) {
  std::lock_guard lock(rng_mu_);
  rng_.seed(seed);
}

std::chrono::milliseconds Provider::jittered_delay(int retry_index) {
  const double ceiling = std::min(static_cast<double>(retry_.max_delay.count()),
                                  static_cast<double>(retry_.base.count()) * std::pow(retry_.factor, retry_index - 1));
  std::lock_guard lock(rng_mu_);
  // 53-bit uniform in [0, 1].
  const double u = static_cast<double>(rng_() >> 11) / static_cast<double>((1ULL << 53) - 1);
  return std::chrono::milliseconds(static_cast<long long>(std::floor(u * ceiling)));
}

ChatResponse Provider::complete(const ChatRequest& req) {
  req.validate();
  std::chrono::milliseconds slept{0};
  const int attempts = std::max(1, retry_.max_attempts);
  for (int attempt_no = 1;; ++attempt_no) {
    try {
      if (limiter_) limiter_->acquire();
      const auto start = clock_->now();
      ChatResponse resp = attempt(req);
      resp.latency_ms = std::max<std::int64_t>(resp.latency_ms, (clock_->now() - start).count());
      if (resp.finish_reason == FinishReason::content_filter)
        throw ContentFiltered("response blocked by content filter");
      if (resp.finish_reason == FinishReason::stop && resp.content.empty())
        throw MalformedResponse("empty content with finish_reason stop");
      return resp;
    } catch (const TransportError&) {
      if (attempt_no >= attempts) throw;
    } catch (const RateLimited&) {
      if (attempt_no >= attempts) throw;
    }
    auto delay = jittered_delay(attempt_no);
    delay = std::min(delay, retry_.max_total_delay - slept);
    if (delay.count() < 0) delay = std::chrono::milliseconds(0);
    clock_->sleep_for(delay);
    slept += delay;
  }
}

// --- scripted provider ----------------------------------------------------

ScriptedProvider::ScriptedProvider(std::vector<ScriptEntry> queue) : queue_(std::move(queue)) {}

ScriptedProvider::ScriptedProvider(std::vector<ScriptRule> rules, std::vector<ScriptEntry> queue)
    : queue_(std::move(queue)) {
  for (auto& r : rules) rules_.push_back({std::move(r), 0});
}

ScriptedProvider::ScriptedProvider(Responder responder) : responder_(std::move(responder)) {}

std::vector<ChatRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t ScriptedProvider::call_count() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

ChatResponse ScriptedProvider::attempt(const ChatRequest& req) {
  ScriptEntry entry;
  if (responder_) {
    {
      std::lock_guard lock(mu_);
      log_.push_back(req);
    }
    entry = responder_(req);
  } else {
    std::lock_guard lock(mu_);
    log_.push_back(req);
    bool found = false;
    const std::string& last = req.messages.back().content;
    for (auto& rs : rules_) {
      if (found) break;
      if (!rs.rule.contains.empty() && !contains_ci(last, rs.rule.contains)) continue;
      bool meta_ok = true;
      for (const auto& [k, v] : rs.rule.metadata) {
        auto it = req.metadata.find(k);
        if (it == req.metadata.end() || it->second != v) {
          meta_ok = false;
          break;
        }
      }
      if (!meta_ok || rs.rule.responses.empty()) continue;
      entry = rs.rule.responses[std::min(rs.cursor, rs.rule.responses.size() - 1)];
      ++rs.cursor;
      found = true;
    }
    if (!found) {
      if (queue_pos_ >= queue_.size()) throw MalformedResponse("scripted provider: script exhausted");
      entry = queue_[queue_pos_++];
    }
  }
  if (entry.fault) {
    switch (*entry.fault) {
      case ScriptFault::transport: throw TransportError("scripted transport failure");
      case ScriptFault::rate_limited: throw RateLimited("scripted rate limit");
      case ScriptFault::malformed: throw MalformedResponse("scripted malformed response");
      case ScriptFault::content_filtered: throw ContentFiltered("scripted content filter");
    }
  }
  ChatResponse resp;
  resp.content = entry.content;
  resp.finish_reason = entry.finish_reason;
  std::size_t prompt_words = 0;
  for (const auto& m : req.messages) prompt_words += split_whitespace(m.content).size();
  resp.usage.prompt_tokens = static_cast<int>(prompt_words);
  resp.usage.completion_tokens = static_cast<int>(split_whitespace(resp.content).size());
  return resp;
}

namespace {

ScriptEntry entry_from_json(const json& j) {
  if (j.is_string()) return ScriptEntry::text(j.get<std::string>());
  if (!j.is_object()) throw ParseError("script entry must be a string or object");
  ScriptEntry e;
  e.content = j.value("content", "");
  if (j.contains("finish_reason")) {
    auto f = finish_reason_from(j.at("finish_reason").get<std::string>());
    if (!f) throw ParseError("script entry: unknown finish_reason");
    e.finish_reason = *f;
  }
  if (j.contains("fault")) {
    const auto f = j.at("fault").get<std::string>();
    if (f == "transport") e.fault = ScriptFault::transport;
    else if (f == "rate_limited") e.fault = ScriptFault::rate_limited;
    else if (f == "malformed") e.fault = ScriptFault::malformed;
    else if (f == "content_filtered") e.fault = ScriptFault::content_filtered;
    else throw ParseError("script entry: unknown fault '" + f + "'");
  }
  return e;
}

}  // namespace

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_json(const json& script) {
  try {
    std::vector<ScriptEntry> queue;
    if (script.is_array()) {
      for (const auto& e : script) queue.push_back(entry_from_json(e));
      return std::make_shared<ScriptedProvider>(std::move(queue));
    }
    if (!script.is_object()) throw ParseError("script must be an object or array");
    for (const auto& e : script.value("queue", json::array())) queue.push_back(entry_from_json(e));
    std::vector<ScriptRule> rules;
    for (const auto& r : script.value("rules", json::array())) {
      ScriptRule rule;
      rule.contains = r.value("contains", "");
      rule.metadata = r.value("metadata", std::map<std::string, std::string>{});
      for (const auto& e : r.at("responses")) rule.responses.push_back(entry_from_json(e));
      rules.push_back(std::move(rule));
    }
    return std::make_shared<ScriptedProvider>(std::move(rules), std::move(queue));
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid provider script: ") + e.what());
  }
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read provider script: " + path.string());
  json script;
  try {
    script = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("provider script " + path.string() + ": " + e.what());
  }
  return from_json(script);
}

}  // namespace pace
