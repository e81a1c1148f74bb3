#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pace/llm.hpp"
#include "pace/persona.hpp"
#include "pace/tutoring.hpp"

namespace httplib {
class Server;
}

namespace pace {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  bool cors = false;  // permissive cross-origin headers for a dev UI
  SessionConfig session;
  // Completed sessions (resolved or capped) are appended here as dataset records.
  std::optional<std::filesystem::path> persist_path;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Session facade over the tutoring engine. The handlers are plain methods so
// they can be exercised without a socket; mount() wires them to HTTP routes.
//
//   GET  /personas                 list profiles
//   POST /personas                 register a profile
//   GET  /problems                 problem catalog
//   POST /sessions                 {persona_id, problem_id | problem} -> 201
//   GET  /sessions/{id}            full session
//   POST /sessions/{id}/messages   {text} -> {teacher_text, state, turn_count}
//   GET  /schemas                  response schemas
class TutoringService {
 public:
  TutoringService(const Tutor& tutor, Provider& provider, std::vector<PersonaProfile> personas,
                  std::vector<Problem> problems, ServiceConfig config = {});
  ~TutoringService();

  ApiResponse list_personas() const;
  ApiResponse add_persona(const nlohmann::json& body);
  ApiResponse list_problems() const;
  ApiResponse create_session(const nlohmann::json& body);
  ApiResponse post_message(const std::string& session_id, const nlohmann::json& body);
  ApiResponse get_session(const std::string& session_id) const;

  void mount(httplib::Server& server);

  // Binds (port 0 picks a free port), serves on a background thread, and
  // returns the bound port.
  int start();
  // Blocks serving on config().host:config().port.
  void run();
  void stop();

  const ServiceConfig& config() const { return config_; }

 private:
  struct Entry {
    std::mutex turn_mu;  // held for the whole of a turn
    mutable std::mutex data_mu;
    Session session;
    explicit Entry(Session s) : session(std::move(s)) {}
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void persist(const Session& s);
  nlohmann::json handle(const Session& s, const std::string& teacher_text) const;

  const Tutor& tutor_;
  Provider& provider_;
  ServiceConfig config_;

  mutable std::shared_mutex catalog_mu_;
  std::vector<PersonaProfile> personas_;
  std::map<std::string, Problem> problems_;
  std::vector<std::string> problem_order_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::atomic<std::uint64_t> next_id_{1};
  std::atomic<std::uint64_t> next_inline_{1};

  std::mutex persist_mu_;

  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<std::thread> server_thread_;
};

// Published response schemas keyed by name: persona_list, problem_list,
// session_handle, message_reply, session, error.
const nlohmann::json& response_schemas();

// Subset of JSON Schema: type, required, properties, additionalProperties
// (boolean), items, enum, minItems, minimum, maximum, minLength. Returns one
// message per violation, empty when valid.
std::vector<std::string> validate_json(const nlohmann::json& schema, const nlohmann::json& value);

}  // namespace pace
