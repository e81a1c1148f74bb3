#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pace/llm.hpp"
#include "pace/persona.hpp"
#include "pace/prompts.hpp"
#include "pace/util.hpp"

namespace pace {

struct Problem {
  std::string id;
  std::string question;
  std::string gold_answer;
  std::vector<std::string> solution_steps;

  bool operator==(const Problem&) const = default;
};

enum class Speaker { student, teacher };

// turn_index follows the dialogue notation: the teacher's opening rephrase is
// r0 (index 0); the t-th student utterance u_t and the reply r_t share index t.
struct Utterance {
  Speaker role = Speaker::teacher;
  std::string text;
  int turn_index = 0;
  Timestamp timestamp{};

  bool operator==(const Utterance&) const = default;
};

enum class SessionState { init, style_simulated, strategy_ready, teaching, resolved, max_turns_reached, aborted };
enum class Resolution { resolved, ongoing };

bool is_terminal(SessionState s);

struct SamplingParams {
  std::string model_id;
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 512;
};

struct SessionConfig {
  int max_turns = 10;
  // Ask the resolution judge (TutorOptions::resolution_judge) instead of the
  // numeric-match heuristic.
  bool judge_resolution = false;
  SamplingParams sampling;
};

// Tutoring state for one problem and one student. Only Tutor mutates it, so the
// ordering invariants (style before strategy before teaching, no backward
// transitions, strategy fixed once set) hold by construction.
class Session {
 public:
  Session(std::string id, Problem problem, PersonaProfile profile, SessionConfig config);
  Session(const Session& other);
  Session& operator=(const Session& other);

  const std::string& id() const { return id_; }
  const Problem& problem() const { return problem_; }
  const PersonaProfile& profile() const { return profile_; }
  const std::optional<LearningStyle>& style() const { return style_; }
  const std::optional<TeachingStrategy>& strategy() const { return strategy_; }
  const std::vector<Utterance>& history() const { return history_; }
  SessionState state() const { return state_; }
  const SessionConfig& config() const { return config_; }
  const std::string& abort_reason() const { return abort_reason_; }
  // Number of student utterances; the opening rephrase belongs to turn 1.
  int turn_count() const;

 private:
  friend class Tutor;

  std::string id_;
  Problem problem_;
  PersonaProfile profile_;
  std::optional<LearningStyle> style_;
  std::optional<TeachingStrategy> strategy_;
  std::vector<Utterance> history_;
  SessionState state_ = SessionState::init;
  SessionConfig config_;
  std::string abort_reason_;
  std::atomic<bool> in_flight_{false};
};

struct TeacherReply {
  std::string text;
  SessionState state = SessionState::teaching;
};

struct TutorOptions {
  NowFn now = [] { return std::chrono::system_clock::now(); };
  // Used when SessionConfig::judge_resolution is set.
  Provider* resolution_judge = nullptr;
  // A teacher reply containing any of these (case-insensitive) counts as a
  // correction of the preceding student answer.
  std::vector<std::string> correction_markers = {"not quite", "not correct", "incorrect", "isn't right",
                                                 "is not right", "not right", "mistake", "try again",
                                                 "double-check", "double check", "wrong", "let's check",
                                                 "not the answer", "recheck", "re-check"};
};

class Tutor {
 public:
  explicit Tutor(const PromptLibrary& prompts, TutorOptions options = {});

  // Renders the style prompt, parses the reply, and re-prompts with a format
  // reminder up to twice. Throws StyleSimulationFailed after three unparsable
  // replies; provider errors pass through.
  LearningStyle simulate_learning_style(const PersonaProfile& profile, const Problem& problem, Provider& provider,
                                        const SamplingParams& sampling = {},
                                        const std::string& session_id = {}) const;

  // Throws StrategyFailed when the reply contains no guideline.
  TeachingStrategy conceptualize_strategy(const LearningStyle& style, const PersonaProfile& profile,
                                          Provider& provider, const SamplingParams& sampling = {},
                                          const std::string& session_id = {}) const;

  Session create_session(std::string id, Problem problem, PersonaProfile profile, SessionConfig config = {}) const;

  // init -> style_simulated -> strategy_ready. On failure the session is left
  // aborted and the error is rethrown.
  void prepare(Session& session, Provider& provider) const;

  // create_session + prepare. An empty id is derived from problem and profile.
  Session open_session(Problem problem, PersonaProfile profile, Provider& provider, SessionConfig config = {},
                       std::string id = {}) const;

  // First call (strategy_ready, no utterance) produces the rephrased problem.
  // Later calls (teaching) take the student's utterance, query the teacher with
  // the full history, and apply check_resolution. A turn is atomic: if the
  // provider fails, the student utterance is not committed and the session is
  // aborted. Calls once the turn cap is reached return max_turns_reached with
  // no provider call. Concurrent calls on one session throw InvalidState.
  TeacherReply teacher_turn(Session& session, const std::optional<std::string>& student_utterance,
                            Provider& provider) const;

  Resolution check_resolution(const Session& session) const;

  std::string teacher_system_prompt(const Session& session) const;
  // System prompt, the opening student message, then the history with teacher
  // turns as assistant messages and student turns as user messages.
  std::vector<Message> teacher_messages(const Session& session) const;

  const PromptLibrary& prompts() const { return prompts_; }
  const TutorOptions& options() const { return options_; }

 private:
  ChatRequest make_request(std::vector<Message> messages, const SamplingParams& sampling,
                           std::map<std::string, std::string> metadata) const;
  void abort(Session& s, const std::string& reason) const;

  const PromptLibrary& prompts_;
  TutorOptions options_;
};

// Numeric tokens in `text`, canonicalised: currency symbols and thousands
// separators removed, insignificant zeros dropped ("$1,200.50" -> "1200.5").
std::vector<std::string> extract_numbers(std::string_view text);
// Canonical number when `text` holds exactly one numeric token, else nullopt.
std::optional<std::string> canonical_number(std::string_view text);
// Whether the utterance states `gold` (numeric tokens compared whole; a
// non-numeric gold answer matches as a case-insensitive whole word).
bool states_answer(std::string_view utterance, std::string_view gold);

// Numbered, bulleted, or plain lines; list markers are stripped. When the text
// mixes list items with prose, only the list items are kept.
std::vector<std::string> parse_guidelines(std::string_view text);

std::string format_guidelines(const std::vector<std::string>& guidelines);

std::string_view to_string(Speaker s);
std::optional<Speaker> speaker_from(std::string_view s);
std::string_view to_string(SessionState s);
std::optional<SessionState> session_state_from(std::string_view s);

void to_json(nlohmann::json& j, const Problem& p);
void from_json(const nlohmann::json& j, Problem& p);
void to_json(nlohmann::json& j, const Utterance& u);
void from_json(const nlohmann::json& j, Utterance& u);
nlohmann::json session_to_json(const Session& s);

}  // namespace pace
