#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pace {

enum class Role { system, user, assistant };

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 512;
  std::map<std::string, std::string> metadata;

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
};

enum class FinishReason { stop, length, content_filter };

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  std::int64_t latency_ms = 0;
};

std::string_view to_string(Role r);
std::optional<Role> role_from(std::string_view s);
std::string_view to_string(FinishReason f);
std::optional<FinishReason> finish_reason_from(std::string_view s);

// Time source used for backoff sleeps, rate limiting, and latency.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds d) override;
};

// Sleeping advances time instantly; every sleep is recorded.
class VirtualClock : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds d) override;
  void advance(std::chrono::milliseconds d);
  std::vector<std::chrono::milliseconds> sleeps() const;
  std::chrono::milliseconds total_slept() const;

 private:
  mutable std::mutex mu_;
  std::chrono::milliseconds now_{0};
  std::vector<std::chrono::milliseconds> sleeps_;
};

std::shared_ptr<Clock> system_clock();

// Exponential backoff with full jitter: before retry k (k = 1, 2, ...) the
// provider sleeps a uniform draw from [0, min(max_delay, base * factor^(k-1))],
// clamped so the sum of all sleeps never exceeds max_total_delay.
struct RetryPolicy {
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
  int max_attempts = 5;
  std::chrono::milliseconds max_delay{30000};
  std::chrono::milliseconds max_total_delay{60000};
};

// Token bucket shared between workers. acquire() blocks (via the clock) until a
// token is available.
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, double burst, std::shared_ptr<Clock> clock);
  void acquire();

 private:
  std::mutex mu_;
  double rate_per_ms_;
  double capacity_;
  double tokens_;
  std::chrono::milliseconds last_;
  std::shared_ptr<Clock> clock_;
};

// Uniform chat-completion contract. complete() is safe to call concurrently.
class Provider {
 public:
  Provider();
  virtual ~Provider() = default;
  Provider(const Provider&) = delete;
  Provider& operator=(const Provider&) = delete;

  // Validates the request, takes a rate-limiter token, and retries transient
  // failures (TransportError, RateLimited) per the retry policy. Non-transient
  // failures (MalformedResponse, ContentFiltered) surface immediately.
  ChatResponse complete(const ChatRequest& req);

  virtual std::string name() const = 0;

  void set_retry_policy(const RetryPolicy& p) { retry_ = p; }
  const RetryPolicy& retry_policy() const { return retry_; }
  void set_clock(std::shared_ptr<Clock> clock) { clock_ = std::move(clock); }
  void set_rate_limiter(std::shared_ptr<RateLimiter> limiter) { limiter_ = std::move(limiter); }
  void set_jitter_seed(std::uint64_t seed);

 protected:
  // A single attempt. Implementations throw the ProviderError subclasses.
  virtual ChatResponse attempt(const ChatRequest& req) = 0;

 private:
  std::chrono::milliseconds jittered_delay(int retry_index);

  RetryPolicy retry_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<RateLimiter> limiter_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

inline ChatResponse complete(Provider& provider, const ChatRequest& req) { return provider.complete(req); }

enum class ScriptFault { transport, rate_limited, malformed, content_filtered };

struct ScriptEntry {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  std::optional<ScriptFault> fault;

  static ScriptEntry text(std::string s) { return ScriptEntry{std::move(s), FinishReason::stop, std::nullopt}; }
  static ScriptEntry failure(ScriptFault f) { return ScriptEntry{{}, FinishReason::stop, f}; }
};

// Matches when the last message contains `contains` (case-insensitive, empty
// matches anything) and every metadata pair equals the request's. Responses are
// consumed in order; the last one repeats once the list is exhausted.
struct ScriptRule {
  std::string contains;
  std::map<std::string, std::string> metadata;
  std::vector<ScriptEntry> responses;
};

using Responder = std::function<ScriptEntry(const ChatRequest&)>;

// Deterministic test double. Rules are tried in order, then the FIFO queue;
// a request nothing answers yields MalformedResponse. Every request is recorded.
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(std::vector<ScriptEntry> queue);
  explicit ScriptedProvider(std::vector<ScriptRule> rules, std::vector<ScriptEntry> queue = {});
  explicit ScriptedProvider(Responder responder);

  // JSON script: {"queue": [...], "rules": [{"contains", "metadata", "responses"}]}.
  // Entries are strings or {"content", "finish_reason", "fault"} objects.
  static std::shared_ptr<ScriptedProvider> from_json(const nlohmann::json& script);
  static std::shared_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

  std::string name() const override { return "scripted"; }
  std::vector<ChatRequest> requests() const;
  std::size_t call_count() const;

 protected:
  ChatResponse attempt(const ChatRequest& req) override;

 private:
  struct RuleState {
    ScriptRule rule;
    std::size_t cursor = 0;
  };
  mutable std::mutex mu_;
  std::vector<RuleState> rules_;
  std::vector<ScriptEntry> queue_;
  std::size_t queue_pos_ = 0;
  Responder responder_;
  std::vector<ChatRequest> log_;
};

struct HttpProviderConfig {
  std::string api_base = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-4-turbo";
  int timeout_seconds = 120;

  // Fills unset fields from PACE_API_BASE, PACE_API_KEY, PACE_MODEL.
  static HttpProviderConfig from_env();
};

// OpenAI-compatible POST {api_base}/chat/completions.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  std::string name() const override { return "http:" + config_.api_base; }
  const HttpProviderConfig& config() const { return config_; }

  static nlohmann::json request_body(const ChatRequest& req, const std::string& default_model);
  // Maps a chat-completion response body to ChatResponse; throws MalformedResponse.
  static ChatResponse parse_response_body(const std::string& body);

 protected:
  ChatResponse attempt(const ChatRequest& req) override;

 private:
  HttpProviderConfig config_;
};

}  // namespace pace
