#include "pace/tutoring.hpp"

#include <cctype>
#include <sstream>

#include "pace/errors.hpp"

namespace pace {

using nlohmann::json;

bool is_terminal(SessionState s) {
  return s == SessionState::resolved || s == SessionState::max_turns_reached || s == SessionState::aborted;
}

std::string_view to_string(Speaker s) { return s == Speaker::student ? "student" : "teacher"; }

std::optional<Speaker> speaker_from(std::string_view s) {
  if (s == "student") return Speaker::student;
  if (s == "teacher") return Speaker::teacher;
  return std::nullopt;
}

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::init: return "init";
    case SessionState::style_simulated: return "style_simulated";
    case SessionState::strategy_ready: return "strategy_ready";
    case SessionState::teaching: return "teaching";
    case SessionState::resolved: return "resolved";
    case SessionState::max_turns_reached: return "max_turns_reached";
    case SessionState::aborted: return "aborted";
  }
  return "init";
}

std::optional<SessionState> session_state_from(std::string_view s) {
  for (auto st : {SessionState::init, SessionState::style_simulated, SessionState::strategy_ready,
                  SessionState::teaching, SessionState::resolved, SessionState::max_turns_reached,
                  SessionState::aborted})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

// --- session ----------------------------------------------------------------

Session::Session(std::string id, Problem problem, PersonaProfile profile, SessionConfig config)
    : id_(std::move(id)), problem_(std::move(problem)), profile_(std::move(profile)), config_(std::move(config)) {}

Session::Session(const Session& o)
    : id_(o.id_),
      problem_(o.problem_),
      profile_(o.profile_),
      style_(o.style_),
      strategy_(o.strategy_),
      history_(o.history_),
      state_(o.state_),
      config_(o.config_),
      abort_reason_(o.abort_reason_) {}

Session& Session::operator=(const Session& o) {
  if (this == &o) return *this;
  id_ = o.id_;
  problem_ = o.problem_;
  profile_ = o.profile_;
  style_ = o.style_;
  strategy_ = o.strategy_;
  history_ = o.history_;
  state_ = o.state_;
  config_ = o.config_;
  abort_reason_ = o.abort_reason_;
  return *this;
}

int Session::turn_count() const {
  int n = 0;
  for (const auto& u : history_)
    if (u.role == Speaker::student) ++n;
  return n;
}

// --- answer extraction ------------------------------------------------------

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string canonicalize(std::string integer, std::string fraction, bool negative) {
  std::size_t nz = 0;
  while (nz + 1 < integer.size() && integer[nz] == '0') ++nz;
  integer.erase(0, nz);
  while (!fraction.empty() && fraction.back() == '0') fraction.pop_back();
  std::string out = integer;
  if (!fraction.empty()) out += "." + fraction;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace

std::vector<std::string> extract_numbers(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    // A leading '-' counts as a sign unless it joins two words ("x-2").
    bool negative = false;
    if (i > 0) {
      std::size_t k = i - 1;
      if (k > 0 && (text[k] == '$')) --k;
      if (text[k] == '-' && (k == 0 || !std::isalnum(static_cast<unsigned char>(text[k - 1])))) negative = true;
    }
    std::string integer;
    std::size_t j = i;
    while (j < n && is_digit(text[j])) integer += text[j++];
    // Thousands groups: ",ddd" not followed by a further digit.
    while (j + 3 < n && text[j] == ',' && is_digit(text[j + 1]) && is_digit(text[j + 2]) &&
           is_digit(text[j + 3]) && (j + 4 >= n || !is_digit(text[j + 4]))) {
      integer.append(text.substr(j + 1, 3));
      j += 4;
    }
    std::string fraction;
    if (j + 1 < n && text[j] == '.' && is_digit(text[j + 1])) {
      ++j;
      while (j < n && is_digit(text[j])) fraction += text[j++];
    }
    out.push_back(canonicalize(std::move(integer), std::move(fraction), negative));
    i = j;
  }
  return out;
}

std::optional<std::string> canonical_number(std::string_view text) {
  auto nums = extract_numbers(text);
  if (nums.size() != 1) return std::nullopt;
  return nums.front();
}

bool states_answer(std::string_view utterance, std::string_view gold) {
  if (const auto g = canonical_number(gold)) {
    for (const auto& n : extract_numbers(utterance))
      if (n == *g) return true;
    return false;
  }
  const std::string needle = to_lower(trim(gold));
  if (needle.empty()) return false;
  const std::string hay = to_lower(utterance);
  std::size_t pos = 0;
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    const std::size_t end = pos + needle.size();
    if ((pos == 0 || !word(hay[pos - 1])) && (end >= hay.size() || !word(hay[end]))) return true;
    ++pos;
  }
  return false;
}

// --- guidelines ---------------------------------------------------------------

namespace {

// Length of a leading list marker ("1.", "2)", "-", "*", "•") plus following
// spaces, or 0 when the line is not a list item.
std::size_t list_marker(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && is_digit(line[i])) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    ++i;
  } else if (i == 0 && (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0)) {
    i = 1;
  } else if (i == 0 && line.rfind("\xE2\x80\xA2", 0) == 0) {
    i = 3;
  } else {
    return 0;
  }
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  return i;
}

}  // namespace

std::vector<std::string> parse_guidelines(std::string_view text) {
  std::vector<std::string> items, plain;
  for (const auto& raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (const auto m = list_marker(line); m > 0) {
      std::string item = trim(line.substr(m));
      if (!item.empty()) items.push_back(std::move(item));
    } else {
      plain.push_back(line);
    }
  }
  return items.empty() ? plain : items;
}

std::string format_guidelines(const std::vector<std::string>& guidelines) {
  std::ostringstream out;
  for (std::size_t i = 0; i < guidelines.size(); ++i) {
    if (i) out << '\n';
    out << (i + 1) << ". " << guidelines[i];
  }
  return out.str();
}

// --- tutor ----------------------------------------------------------------------

namespace {

std::string describe_style(const LearningStyle& s) {
  std::ostringstream out;
  auto line = [&](std::string_view label, std::string_view axis, std::string_view value) {
    out << label << ": " << value;
    if (auto it = s.rationale.find(std::string(axis)); it != s.rationale.end() && !it->second.empty())
      out << " (" << it->second << ")";
    out << '\n';
  };
  line("Perception", "perception", to_string(s.perception));
  line("Processing", "processing", to_string(s.processing));
  line("Understanding", "understanding", to_string(s.understanding));
  std::string text = out.str();
  text.pop_back();
  return text;
}

std::string describe_problem(const Problem& p) { return p.question; }

std::string numbered_steps(const std::vector<std::string>& steps) {
  if (steps.empty()) return "(no worked steps provided)";
  return format_guidelines(steps);
}

// Clears the in-flight flag on scope exit.
class InFlight {
 public:
  explicit InFlight(std::atomic<bool>& flag) : flag_(flag) {
    bool expected = false;
    if (!flag_.compare_exchange_strong(expected, true)) throw InvalidState("a turn is already in flight");
  }
  ~InFlight() { flag_.store(false); }
  InFlight(const InFlight&) = delete;
  InFlight& operator=(const InFlight&) = delete;

 private:
  std::atomic<bool>& flag_;
};

}  // namespace

Tutor::Tutor(const PromptLibrary& prompts, TutorOptions options) : prompts_(prompts), options_(std::move(options)) {}

ChatRequest Tutor::make_request(std::vector<Message> messages, const SamplingParams& sampling,
                                std::map<std::string, std::string> metadata) const {
  ChatRequest req;
  req.model_id = sampling.model_id;
  req.temperature = sampling.temperature;
  req.top_p = sampling.top_p;
  req.max_tokens = sampling.max_tokens;
  req.messages = std::move(messages);
  req.metadata = std::move(metadata);
  return req;
}

LearningStyle Tutor::simulate_learning_style(const PersonaProfile& profile, const Problem& problem,
                                             Provider& provider, const SamplingParams& sampling,
                                             const std::string& session_id) const {
  const auto prompt = prompts_.render(template_ids::style_simulation,
                                      {{"persona", describe_persona(profile)}, {"problem", describe_problem(problem)}});
  std::vector<Message> messages{{Role::user, prompt}};
  constexpr int kAttempts = 3;
  std::string last_error;
  for (int attempt = 1; attempt <= kAttempts; ++attempt) {
    auto req = make_request(messages, sampling,
                            {{"stage", "style"},
                             {"attempt", std::to_string(attempt)},
                             {"session_id", session_id},
                             {"problem_id", problem.id},
                             {"persona_id", profile.id}});
    const auto resp = provider.complete(req);
    try {
      return parse_learning_style(resp.content);
    } catch (const ParseError& e) {
      last_error = e.what();
      messages.push_back({Role::assistant, resp.content});
      messages.push_back({Role::user, prompts_.render(template_ids::style_format_reminder, {})});
    }
  }
  throw StyleSimulationFailed("no parsable learning style after " + std::to_string(kAttempts) +
                              " attempts: " + last_error);
}

TeachingStrategy Tutor::conceptualize_strategy(const LearningStyle& style, const PersonaProfile& profile,
                                               Provider& provider, const SamplingParams& sampling,
                                               const std::string& session_id) const {
  const auto prompt = prompts_.render(template_ids::strategy_conceptualization,
                                      {{"persona", describe_persona(profile)}, {"style", describe_style(style)}});
  auto req = make_request({{Role::user, prompt}}, sampling,
                          {{"stage", "strategy"}, {"session_id", session_id}, {"persona_id", profile.id}});
  const auto resp = provider.complete(req);
  auto guidelines = parse_guidelines(resp.content);
  if (guidelines.empty()) throw StrategyFailed("strategy response contained no guidelines");
  return TeachingStrategy{profile.id, style, std::move(guidelines), options_.now()};
}

Session Tutor::create_session(std::string id, Problem problem, PersonaProfile profile, SessionConfig config) const {
  if (config.max_turns <= 0) throw std::invalid_argument("max_turns must be positive");
  if (trim(problem.question).empty() || trim(problem.gold_answer).empty())
    throw std::invalid_argument("problem needs a question and a gold answer");
  if (id.empty()) id = "session-" + problem.id + "-" + profile.id;
  return Session(std::move(id), std::move(problem), std::move(profile), std::move(config));
}

void Tutor::abort(Session& s, const std::string& reason) const {
  s.state_ = SessionState::aborted;
  s.abort_reason_ = reason;
}

void Tutor::prepare(Session& s, Provider& provider) const {
  if (s.state_ != SessionState::init) throw InvalidState("prepare requires state init");
  InFlight guard(s.in_flight_);
  try {
    s.style_ = simulate_learning_style(s.profile_, s.problem_, provider, s.config_.sampling, s.id_);
    s.state_ = SessionState::style_simulated;
    s.strategy_ = conceptualize_strategy(*s.style_, s.profile_, provider, s.config_.sampling, s.id_);
    s.state_ = SessionState::strategy_ready;
  } catch (const std::exception& e) {
    abort(s, e.what());
    throw;
  }
}

Session Tutor::open_session(Problem problem, PersonaProfile profile, Provider& provider, SessionConfig config,
                            std::string id) const {
  Session s = create_session(std::move(id), std::move(problem), std::move(profile), std::move(config));
  prepare(s, provider);
  return s;
}

std::string Tutor::teacher_system_prompt(const Session& s) const {
  if (!s.strategy_) throw InvalidState("teacher prompt requires a strategy");
  return prompts_.render(template_ids::socratic_teacher_system,
                         {{"persona_name", s.profile_.name},
                          {"strategy", format_guidelines(s.strategy_->guidelines)},
                          {"question", s.problem_.question},
                          {"gold_answer", s.problem_.gold_answer},
                          {"solution_steps", numbered_steps(s.problem_.solution_steps)}});
}

std::vector<Message> Tutor::teacher_messages(const Session& s) const {
  std::vector<Message> messages;
  messages.push_back({Role::system, teacher_system_prompt(s)});
  messages.push_back({Role::user, prompts_.render(template_ids::teacher_opening, {{"question", s.problem_.question}})});
  for (const auto& u : s.history_)
    messages.push_back({u.role == Speaker::teacher ? Role::assistant : Role::user, u.text});
  return messages;
}

TeacherReply Tutor::teacher_turn(Session& s, const std::optional<std::string>& student_utterance,
                                 Provider& provider) const {
  InFlight guard(s.in_flight_);

  if (s.state_ == SessionState::strategy_ready) {
    if (student_utterance) throw InvalidState("the opening teacher turn takes no student utterance");
    auto req = make_request(teacher_messages(s), s.config_.sampling,
                            {{"stage", "teacher"}, {"turn", "0"}, {"session_id", s.id_}, {"problem_id", s.problem_.id},
                             {"persona_id", s.profile_.id}});
    ChatResponse resp;
    try {
      resp = provider.complete(req);
    } catch (const std::exception& e) {
      abort(s, e.what());
      throw;
    }
    s.history_.push_back({Speaker::teacher, resp.content, 0, options_.now()});
    s.state_ = SessionState::teaching;
    return {resp.content, s.state_};
  }

  if ((s.state_ == SessionState::teaching || s.state_ == SessionState::max_turns_reached) &&
      s.turn_count() >= s.config_.max_turns) {
    s.state_ = SessionState::max_turns_reached;
    return {{}, s.state_};
  }
  if (s.state_ != SessionState::teaching)
    throw InvalidState("teacher_turn not allowed in state " + std::string(to_string(s.state_)));
  if (!student_utterance || trim(*student_utterance).empty())
    throw InvalidState("a student utterance is required while teaching");

  const int turn = s.turn_count() + 1;
  auto messages = teacher_messages(s);
  messages.push_back({Role::user, *student_utterance});
  auto req = make_request(std::move(messages), s.config_.sampling,
                          {{"stage", "teacher"},
                           {"turn", std::to_string(turn)},
                           {"session_id", s.id_},
                           {"problem_id", s.problem_.id},
                           {"persona_id", s.profile_.id}});
  ChatResponse resp;
  try {
    resp = provider.complete(req);
  } catch (const std::exception& e) {
    abort(s, e.what());
    throw;
  }
  const auto now = options_.now();
  s.history_.push_back({Speaker::student, *student_utterance, turn, now});
  s.history_.push_back({Speaker::teacher, resp.content, turn, now});

  if (check_resolution(s) == Resolution::resolved)
    s.state_ = SessionState::resolved;
  else if (s.turn_count() >= s.config_.max_turns)
    s.state_ = SessionState::max_turns_reached;
  return {resp.content, s.state_};
}

Resolution Tutor::check_resolution(const Session& s) const {
  std::optional<std::size_t> last_student;
  for (std::size_t i = s.history_.size(); i-- > 0;)
    if (s.history_[i].role == Speaker::student) {
      last_student = i;
      break;
    }
  if (!last_student) return Resolution::ongoing;
  const std::string& said = s.history_[*last_student].text;
  std::string reply;
  for (std::size_t i = *last_student + 1; i < s.history_.size(); ++i)
    if (s.history_[i].role == Speaker::teacher) {
      reply = s.history_[i].text;
      break;
    }

  if (s.config_.judge_resolution && options_.resolution_judge) {
    const auto prompt = prompts_.render(template_ids::resolution_judge, {{"question", s.problem_.question},
                                                                         {"gold_answer", s.problem_.gold_answer},
                                                                         {"student_utterance", said},
                                                                         {"teacher_reply", reply}});
    auto req = make_request({{Role::user, prompt}}, s.config_.sampling,
                            {{"stage", "resolution_judge"}, {"session_id", s.id_}});
    const auto verdict = to_lower(options_.resolution_judge->complete(req).content);
    if (verdict.find("ongoing") != std::string::npos || verdict.find("unresolved") != std::string::npos)
      return Resolution::ongoing;
    if (verdict.find("resolved") != std::string::npos) return Resolution::resolved;
    // Unreadable verdicts fall through to the heuristic.
  }

  if (!states_answer(said, s.problem_.gold_answer)) return Resolution::ongoing;
  for (const auto& marker : options_.correction_markers)
    if (contains_ci(reply, marker)) return Resolution::ongoing;
  return Resolution::resolved;
}

// --- json -------------------------------------------------------------------------

void to_json(json& j, const Problem& p) {
  j = json{{"id", p.id}, {"question", p.question}, {"gold_answer", p.gold_answer}, {"solution_steps", p.solution_steps}};
}

void from_json(const json& j, Problem& p) {
  p.id = j.at("id").get<std::string>();
  p.question = j.at("question").get<std::string>();
  p.gold_answer = j.at("gold_answer").get<std::string>();
  p.solution_steps = j.value("solution_steps", std::vector<std::string>{});
}

void to_json(json& j, const Utterance& u) {
  j = json{{"role", to_string(u.role)},
           {"text", u.text},
           {"turn_index", u.turn_index},
           {"timestamp", format_timestamp(u.timestamp)}};
}

void from_json(const json& j, Utterance& u) {
  const auto role = speaker_from(j.at("role").get<std::string>());
  if (!role) throw std::invalid_argument("utterance role must be student or teacher");
  u.role = *role;
  u.text = j.at("text").get<std::string>();
  u.turn_index = j.at("turn_index").get<int>();
  u.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
}

json session_to_json(const Session& s) {
  json j{{"id", s.id()},
         {"problem", s.problem()},
         {"profile", s.profile()},
         {"style", s.style() ? json(*s.style()) : json(nullptr)},
         {"strategy", s.strategy() ? json(*s.strategy()) : json(nullptr)},
         {"history", s.history()},
         {"state", to_string(s.state())},
         {"turn_count", s.turn_count()},
         {"config", {{"max_turns", s.config().max_turns}, {"judge_resolution", s.config().judge_resolution}}}};
  if (!s.abort_reason().empty()) j["abort_reason"] = s.abort_reason();
  return j;
}

}  // namespace pace
