#include <cstdlib>

#include "http_client.hpp"
#include "pace/errors.hpp"
#include "pace/llm.hpp"
#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

namespace detail {

BaseUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("api base must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  BaseUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) out.path = url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::unique_ptr<httplib::Client> make_client(const BaseUrl& base, const std::string& api_key, int timeout_seconds) {
  auto cli = std::make_unique<httplib::Client>(base.origin);
  cli->set_connection_timeout(timeout_seconds, 0);
  cli->set_read_timeout(timeout_seconds, 0);
  cli->set_write_timeout(timeout_seconds, 0);
  if (!api_key.empty()) cli->set_bearer_token_auth(api_key);
  return cli;
}

void raise_for_status(int status, const std::string& body) {
  const std::string detail = "HTTP " + std::to_string(status) + ": " + body.substr(0, 300);
  if (status == 429) throw RateLimited(detail);
  if (status >= 500 || status == 408) throw TransportError(detail);
  if (body.find("content_filter") != std::string::npos || body.find("content_policy") != std::string::npos)
    throw ContentFiltered(detail);
  throw MalformedResponse(detail);
}

}  // namespace detail

HttpProviderConfig HttpProviderConfig::from_env() {
  HttpProviderConfig c;
  if (const char* v = std::getenv("PACE_API_BASE"); v && *v) c.api_base = v;
  if (const char* v = std::getenv("PACE_API_KEY"); v && *v) c.api_key = v;
  if (const char* v = std::getenv("PACE_MODEL"); v && *v) c.model = v;
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  detail::split_base_url(config_.api_base);  // fail fast on a bad URL
}

json HttpProvider::request_body(const ChatRequest& req, const std::string& default_model) {
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return json{{"model", req.model_id.empty() ? default_model : req.model_id},
              {"messages", std::move(messages)},
              {"temperature", req.temperature},
              {"top_p", req.top_p},
              {"max_tokens", req.max_tokens},
              {"stream", false}};
}

ChatResponse HttpProvider::parse_response_body(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& choice = doc.at("choices").at(0);
    ChatResponse resp;
    const auto& content = choice.at("message").at("content");
    resp.content = content.is_null() ? std::string() : content.get<std::string>();
    const auto reason = choice.value("finish_reason", std::string("stop"));
    const auto parsed = finish_reason_from(reason.empty() ? "stop" : reason);
    // Providers add reasons such as "tool_calls"; anything unknown is treated as a stop.
    resp.finish_reason = parsed.value_or(FinishReason::stop);
    if (doc.contains("usage") && doc["usage"].is_object()) {
      resp.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
      resp.usage.completion_tokens = doc["usage"].value("completion_tokens", 0);
    }
    return resp;
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("unexpected chat-completion schema: ") + e.what());
  }
}

ChatResponse HttpProvider::attempt(const ChatRequest& req) {
  const auto base = detail::split_base_url(config_.api_base);
  auto cli = detail::make_client(base, config_.api_key, config_.timeout_seconds);
  const auto body = request_body(req, config_.model).dump();
  auto res = cli->Post(base.path + "/chat/completions", body, "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) detail::raise_for_status(res->status, res->body);
  return parse_response_body(res->body);
}

}  // namespace pace
