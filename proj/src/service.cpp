#include "pace/service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "httplib.h"
#include "pace/errors.hpp"
#include "pace/synthesis.hpp"
#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

namespace {

ApiResponse error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return {status, std::move(extra)};
}

json state_enum() {
  json values = json::array();
  for (auto s : {SessionState::init, SessionState::style_simulated, SessionState::strategy_ready, SessionState::teaching,
                 SessionState::resolved, SessionState::max_turns_reached, SessionState::aborted})
    values.push_back(to_string(s));
  return values;
}

json problem_summary(const Problem& p) { return {{"id", p.id}, {"question", p.question}}; }

}  // namespace

TutoringService::TutoringService(const Tutor& tutor, Provider& provider, std::vector<PersonaProfile> personas,
                                 std::vector<Problem> problems, ServiceConfig config)
    : tutor_(tutor), provider_(provider), config_(std::move(config)), personas_(std::move(personas)) {
  for (auto& p : problems) {
    if (!problems_.count(p.id)) problem_order_.push_back(p.id);
    problems_[p.id] = std::move(p);
  }
}

TutoringService::~TutoringService() { stop(); }

std::shared_ptr<TutoringService::Entry> TutoringService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

json TutoringService::handle(const Session& s, const std::string& teacher_text) const {
  const std::string self = "/sessions/" + s.id();
  return {{"session_id", s.id()},
          {"state", to_string(s.state())},
          {"turn_count", s.turn_count()},
          {"teacher_text", teacher_text},
          {"history", s.history()},
          {"style", s.style() ? json(*s.style()) : json(nullptr)},
          {"strategy", s.strategy() ? json(*s.strategy()) : json(nullptr)},
          {"links", {{"self", self}, {"messages", self + "/messages"}}}};
}

ApiResponse TutoringService::list_personas() const {
  std::shared_lock lock(catalog_mu_);
  return {200, {{"personas", personas_}}};
}

ApiResponse TutoringService::add_persona(const json& body) {
  PersonaProfile p;
  try {
    p = body.get<PersonaProfile>();
  } catch (const std::exception& e) {
    return error(400, std::string("invalid persona: ") + e.what());
  }
  if (auto v = validate_profile(p); !v.ok()) return error(400, "invalid persona: " + join(v.violations, "; "));
  std::unique_lock lock(catalog_mu_);
  for (const auto& existing : personas_)
    if (existing.id == p.id) return error(409, "persona already exists: " + p.id);
  personas_.push_back(std::move(p));
  return {201, {{"personas", personas_}}};
}

ApiResponse TutoringService::list_problems() const {
  std::shared_lock lock(catalog_mu_);
  json list = json::array();
  for (const auto& id : problem_order_) list.push_back(problem_summary(problems_.at(id)));
  return {200, {{"problems", std::move(list)}}};
}

ApiResponse TutoringService::create_session(const json& body) {
  if (!body.is_object()) return error(400, "request body must be a JSON object");
  if (!body.contains("persona_id") || !body["persona_id"].is_string()) return error(400, "persona_id is required");
  const auto persona_id = body["persona_id"].get<std::string>();

  PersonaProfile persona;
  Problem problem;
  {
    std::shared_lock lock(catalog_mu_);
    auto pit = std::find_if(personas_.begin(), personas_.end(), [&](const auto& p) { return p.id == persona_id; });
    if (pit == personas_.end()) return error(404, "unknown persona: " + persona_id);
    persona = *pit;

    if (body.contains("problem_id")) {
      if (!body["problem_id"].is_string()) return error(400, "problem_id must be a string");
      const auto problem_id = body["problem_id"].get<std::string>();
      auto it = problems_.find(problem_id);
      if (it == problems_.end()) return error(404, "unknown problem: " + problem_id);
      problem = it->second;
    } else if (body.contains("problem")) {
      const auto& p = body["problem"];
      if (!p.is_object() || !p.contains("question") || !p["question"].is_string() || !p.contains("gold_answer") ||
          !p["gold_answer"].is_string())
        return error(400, "inline problem needs question and gold_answer strings");
      problem.question = p["question"].get<std::string>();
      problem.gold_answer = p["gold_answer"].get<std::string>();
      if (trim(problem.question).empty() || trim(problem.gold_answer).empty())
        return error(400, "inline problem needs a nonempty question and gold_answer");
      try {
        problem.solution_steps = p.value("solution_steps", std::vector<std::string>{});
      } catch (const json::exception&) {
        return error(400, "solution_steps must be an array of strings");
      }
      problem.id = p.value("id", std::string("inline-") + std::to_string(next_inline_++));
    } else {
      return error(400, "problem_id or problem is required");
    }
  }

  char id[32];
  std::snprintf(id, sizeof(id), "session-%06llu", static_cast<unsigned long long>(next_id_++));
  auto entry = std::make_shared<Entry>(tutor_.create_session(id, problem, persona, config_.session));
  std::lock_guard turn(entry->turn_mu);
  {
    std::unique_lock lock(sessions_mu_);
    sessions_[id] = entry;
  }

  Session work = entry->session;
  std::string teacher_text;
  std::string failure;
  try {
    tutor_.prepare(work, provider_);
    teacher_text = tutor_.teacher_turn(work, std::nullopt, provider_).text;
  } catch (const std::exception& e) {
    failure = e.what();
  }
  {
    std::lock_guard data(entry->data_mu);
    entry->session = work;
  }
  if (!failure.empty())
    return error(502, "provider failure: " + failure, {{"session_id", work.id()}, {"state", to_string(work.state())}});
  return {201, handle(work, teacher_text)};
}

ApiResponse TutoringService::post_message(const std::string& session_id, const json& body) {
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session: " + session_id);
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
    return error(400, "text is required");
  const auto text = body["text"].get<std::string>();
  if (trim(text).empty()) return error(400, "text must not be empty");

  std::unique_lock turn(entry->turn_mu, std::try_to_lock);
  if (!turn.owns_lock()) return error(409, "a message is already in flight for this session");

  Session work = [&] {
    std::lock_guard data(entry->data_mu);
    return entry->session;
  }();
  if (is_terminal(work.state()))
    return error(410, "session has ended", {{"session_id", work.id()}, {"state", to_string(work.state())}});
  if (work.state() != SessionState::teaching)
    return error(409, "session is not ready for messages", {{"state", to_string(work.state())}});

  TeacherReply reply;
  std::string failure;
  try {
    reply = tutor_.teacher_turn(work, text, provider_);
  } catch (const std::exception& e) {
    failure = e.what();
  }
  {
    std::lock_guard data(entry->data_mu);
    entry->session = work;
  }
  if (!failure.empty())
    return error(502, "provider failure: " + failure, {{"session_id", work.id()}, {"state", to_string(work.state())}});
  if (work.state() == SessionState::resolved || work.state() == SessionState::max_turns_reached) persist(work);
  return {200, {{"teacher_text", reply.text}, {"state", to_string(work.state())}, {"turn_count", work.turn_count()}}};
}

ApiResponse TutoringService::get_session(const std::string& session_id) const {
  auto entry = find(session_id);
  if (!entry) return error(404, "unknown session: " + session_id);
  std::lock_guard data(entry->data_mu);
  return {200, session_to_json(entry->session)};
}

void TutoringService::persist(const Session& s) {
  if (!config_.persist_path) return;
  Provenance prov;
  prov.teacher_model = provider_.name();
  prov.student_model = "human";
  prov.temperature = s.config().sampling.temperature;
  prov.top_p = s.config().sampling.top_p;
  prov.max_tokens = s.config().sampling.max_tokens;
  prov.template_versions = tutor_.prompts().versions();
  const auto termination =
      s.state() == SessionState::resolved ? Termination::resolved : Termination::max_turns_reached;
  const auto line = json(transcript_from_session(s, termination, prov)).dump();
  std::lock_guard lock(persist_mu_);
  std::ofstream out(*config_.persist_path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + config_.persist_path->string());
  out << line << '\n';
}

void TutoringService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse_body = [](const httplib::Request& req) -> std::optional<json> {
    try {
      return req.body.empty() ? json::object() : json::parse(req.body);
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };

  server.Get("/personas", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, list_personas()); });
  server.Post("/personas", [this, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    reply(res, body ? add_persona(*body) : error(400, "malformed JSON body"));
  });
  server.Get("/problems", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, list_problems()); });
  server.Post("/sessions", [this, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    reply(res, body ? create_session(*body) : error(400, "malformed JSON body"));
  });
  server.Post(R"(/sessions/([^/]+)/messages)", [this, reply, parse_body](const httplib::Request& req,
                                                                          httplib::Response& res) {
    auto body = parse_body(req);
    reply(res, body ? post_message(req.matches[1], *body) : error(400, "malformed JSON body"));
  });
  server.Get(R"(/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_session(req.matches[1]));
  });
  server.Get("/schemas", [reply](const httplib::Request&, httplib::Response& res) {
    reply(res, {200, response_schemas()});
  });

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json");
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  });

  if (config_.cors) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }
}

int TutoringService::start() {
  if (server_) throw InvalidState("service already started");
  server_ = std::make_unique<httplib::Server>();
  mount(*server_);
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    throw IoError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  server_thread_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void TutoringService::run() {
  if (server_) throw InvalidState("service already started");
  server_ = std::make_unique<httplib::Server>();
  mount(*server_);
  if (!server_->listen(config_.host, config_.port))
    throw IoError("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
}

void TutoringService::stop() {
  if (server_) server_->stop();
  if (server_thread_ && server_thread_->joinable()) server_thread_->join();
  server_thread_.reset();
  server_.reset();
}

// --- schemas --------------------------------------------------------------

const json& response_schemas() {
  static const json schemas = [] {
    const json str{{"type", "string"}};
    const json strings{{"type", "array"}, {"items", str}};
    const json error_schema{{"type", "object"},
                            {"required", {"error"}},
                            {"properties", {{"error", str}, {"session_id", str}, {"state", {{"enum", state_enum()}}}}}};
    const json persona{
        {"type", "object"},
        {"required", {"id", "name", "gender", "age_years", "interests", "traits", "experiences", "knowledge_level"}},
        {"properties",
         {{"id", {{"type", "string"}, {"minLength", 1}}},
          {"name", str},
          {"gender", str},
          {"age_years", {{"type", "integer"}, {"minimum", 0}}},
          {"interests", strings},
          {"traits", strings},
          {"experiences", strings},
          {"knowledge_level", {{"enum", {"low", "medium", "high"}}}}}}};
    const json utterance{{"type", "object"},
                         {"required", {"role", "text", "turn_index", "timestamp"}},
                         {"properties",
                          {{"role", {{"enum", {"student", "teacher"}}}},
                           {"text", str},
                           {"turn_index", {{"type", "integer"}, {"minimum", 0}}},
                           {"timestamp", str}}}};
    const json style_obj{{"type", "object"},
                         {"required", {"perception", "processing", "understanding"}},
                         {"properties",
                          {{"perception", {{"enum", {"sensory", "intuitive"}}}},
                           {"processing", {{"enum", {"active", "reflective"}}}},
                           {"understanding", {{"enum", {"sequential", "global"}}}},
                           {"rationale", {{"type", "object"}}}}}};
    json style = style_obj;
    style["type"] = {"object", "null"};
    json strategy{{"type", {"object", "null"}},
                  {"required", {"persona_id", "style", "guidelines", "created_at"}},
                  {"properties",
                   {{"persona_id", str},
                    {"style", style_obj},
                    {"guidelines", {{"type", "array"}, {"items", str}, {"minItems", 1}}},
                    {"created_at", str}}}};
    const json history{{"type", "array"}, {"items", utterance}};
    const json state{{"enum", state_enum()}};
    const json turns{{"type", "integer"}, {"minimum", 0}};
    const json problem{{"type", "object"},
                       {"required", {"id", "question", "gold_answer", "solution_steps"}},
                       {"properties", {{"id", str}, {"question", str}, {"gold_answer", str}, {"solution_steps", strings}}}};

    json out;
    out["error"] = error_schema;
    out["persona_list"] = {{"type", "object"},
                           {"required", {"personas"}},
                           {"properties", {{"personas", {{"type", "array"}, {"items", persona}}}}}};
    out["problem_list"] = {
        {"type", "object"},
        {"required", {"problems"}},
        {"properties",
         {{"problems",
           {{"type", "array"},
            {"items", {{"type", "object"}, {"required", {"id", "question"}}, {"properties", {{"id", str}, {"question", str}}}}}}}}}};
    out["session_handle"] = {
        {"type", "object"},
        {"required", {"session_id", "state", "turn_count", "teacher_text", "history", "style", "strategy", "links"}},
        {"properties",
         {{"session_id", str},
          {"state", state},
          {"turn_count", turns},
          {"teacher_text", str},
          {"history", history},
          {"style", style},
          {"strategy", strategy},
          {"links", {{"type", "object"}, {"required", {"self", "messages"}}}}}}};
    out["message_reply"] = {{"type", "object"},
                            {"required", {"teacher_text", "state", "turn_count"}},
                            {"properties", {{"teacher_text", str}, {"state", state}, {"turn_count", turns}}}};
    out["session"] = {
        {"type", "object"},
        {"required", {"id", "problem", "profile", "style", "strategy", "history", "state", "turn_count", "config"}},
        {"properties",
         {{"id", str},
          {"problem", problem},
          {"profile", persona},
          {"style", style},
          {"strategy", strategy},
          {"history", history},
          {"state", state},
          {"turn_count", turns},
          {"abort_reason", str},
          {"config",
           {{"type", "object"},
            {"required", {"max_turns", "judge_resolution"}},
            {"properties", {{"max_turns", {{"type", "integer"}, {"minimum", 1}}}, {"judge_resolution", {{"type", "boolean"}}}}}}}}}};
    return out;
  }();
  return schemas;
}

namespace {

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

void validate_at(const json& schema, const json& v, const std::string& path, std::vector<std::string>& out) {
  const std::string where = path.empty() ? "$" : path;
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = has_type(v, t.get<std::string>());
    } else {
      for (const auto& alt : t) ok = ok || has_type(v, alt.get<std::string>());
    }
    if (!ok) {
      out.push_back(where + ": expected type " + t.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    const auto& values = schema["enum"];
    if (std::find(values.begin(), values.end(), v) == values.end())
      out.push_back(where + ": value " + v.dump() + " not in " + values.dump());
  }
  if (v.is_number()) {
    if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>())
      out.push_back(where + ": below minimum");
    if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>())
      out.push_back(where + ": above maximum");
  }
  if (v.is_string() && schema.contains("minLength") && v.get<std::string>().size() < schema["minLength"].get<std::size_t>())
    out.push_back(where + ": shorter than minLength");
  if (v.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!v.contains(key.get<std::string>())) out.push_back(where + ": missing " + key.get<std::string>());
    const json props = schema.value("properties", json::object());
    for (const auto& [key, sub] : props.items())
      if (v.contains(key)) validate_at(sub, v[key], where + "." + key, out);
    if (schema.contains("additionalProperties") && schema["additionalProperties"] == false)
      for (const auto& [key, _] : v.items())
        if (!props.contains(key)) out.push_back(where + ": unexpected property " + key);
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>())
      out.push_back(where + ": fewer than minItems");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) validate_at(schema["items"], v[i], where + "[" + std::to_string(i) + "]", out);
  }
}

}  // namespace

std::vector<std::string> validate_json(const json& schema, const json& value) {
  std::vector<std::string> out;
  validate_at(schema, value, "", out);
  return out;
}

}  // namespace pace
