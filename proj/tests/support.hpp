#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "pace/llm.hpp"
#include "pace/persona.hpp"
#include "pace/prompts.hpp"
#include "pace/synthesis.hpp"
#include "pace/tutoring.hpp"

namespace pace::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(PACE_FIXTURE_DIR) / name; }
inline std::filesystem::path oracle(const std::string& name) { return std::filesystem::path(PACE_ORACLE_DIR) / name; }

inline const PromptLibrary& templates() {
  static const PromptLibrary lib = PromptLibrary::load_directory(PACE_TEMPLATE_DIR);
  return lib;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pace-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline PersonaProfile sample_profile(const std::string& id = "maya") {
  PersonaProfile p;
  p.id = id;
  p.name = "Maya";
  p.gender = "female";
  p.age_years = 11;
  p.interests = {"soccer", "drawing"};
  p.traits = {"curious", "impatient"};
  p.experiences = {"plays on a school team"};
  p.knowledge_level = KnowledgeLevel::medium;
  return p;
}

inline Problem sample_problem(const std::string& id = "p1") {
  return Problem{id, "A team has 18 players and each needs 2 bottles. How many bottles?", "36",
                 {"18 * 2 = 36"}};
}

inline const char* style_reply() {
  return "<learning_style>\nperception = sensory | concrete examples\nprocessing = active | tries things\n"
         "understanding = sequential | step by step\n</learning_style>";
}

inline const char* strategy_reply() {
  return "1. Use soccer examples.\n2. Let the student try each step.\n3. Recap after every step.";
}

// Style and strategy rules followed by a per-turn teacher reply. The teacher
// never uses a correction marker, so a student stating the gold answer resolves.
inline std::vector<ScriptRule> tutor_rules() {
  std::vector<ScriptRule> rules;
  rules.push_back({"", {{"stage", "style"}}, {ScriptEntry::text(style_reply())}});
  rules.push_back({"", {{"stage", "strategy"}}, {ScriptEntry::text(strategy_reply())}});
  rules.push_back({"", {{"stage", "teacher"}, {"turn", "0"}}, {ScriptEntry::text("Let's restate the problem.")}});
  for (int t = 1; t <= 20; ++t)
    rules.push_back({"", {{"stage", "teacher"}, {"turn", std::to_string(t)}},
                     {ScriptEntry::text("Teacher reply " + std::to_string(t) + ". What comes next?")}});
  return rules;
}

// A script whose single entry answers every request.
inline std::vector<ScriptRule> always(ScriptEntry entry) { return {ScriptRule{"", {}, {std::move(entry)}}}; }

inline std::shared_ptr<ScriptedProvider> tutor_provider() { return std::make_shared<ScriptedProvider>(tutor_rules()); }

// Student rules answering correctly at `answer_turn` (0: never).
inline std::shared_ptr<ScriptedProvider> student_provider(int answer_turn, const std::string& gold = "36") {
  std::vector<ScriptRule> rules;
  if (answer_turn > 0)
    rules.push_back({"", {{"stage", "student"}, {"turn", std::to_string(answer_turn)}},
                     {ScriptEntry::text("I think the answer is " + gold + ".")}});
  rules.push_back({"", {{"stage", "student"}}, {ScriptEntry::text("I am not sure yet, can you help?")}});
  return std::make_shared<ScriptedProvider>(rules);
}

inline Timestamp fixed_time() { return Timestamp{} + std::chrono::hours(24 * 365 * 54); }

inline TeachingStrategy sample_strategy(const std::string& persona_id = "maya") {
  TeachingStrategy s;
  s.persona_id = persona_id;
  s.style.rationale = {{"perception", "concrete"}};
  s.guidelines = {"Use soccer examples.", "Check each step."};
  s.created_at = fixed_time();
  return s;
}

// Well-formed transcript with `turns` student utterances.
inline DialogueTranscript make_transcript(int turns, Termination termination, const std::string& id = "t",
                                          std::mt19937_64* rng = nullptr) {
  DialogueTranscript t;
  t.id = id;
  t.problem = sample_problem();
  t.profile_id = "maya";
  t.strategy = sample_strategy();
  t.style = t.strategy->style;
  t.termination = termination;
  t.provenance.teacher_model = "teacher";
  t.provenance.student_model = "student";
  auto words = [&](const std::string& head) {
    std::string s = head;
    const int extra = rng ? static_cast<int>((*rng)() % 12) : 3;
    for (int i = 0; i < extra; ++i) s += " w" + std::to_string(i);
    return s;
  };
  t.utterances.push_back({Speaker::teacher, words("opening"), 0, fixed_time()});
  for (int k = 1; k <= turns; ++k) {
    t.utterances.push_back({Speaker::student, words("student " + std::to_string(k)), k, fixed_time()});
    t.utterances.push_back({Speaker::teacher, words("teacher " + std::to_string(k)), k, fixed_time()});
  }
  return t;
}

// Tutor replies from tutor_rules(), except that teacher turn `gate_turn`
// blocks until release() so tests can overlap requests deterministically.
class GatedTutor {
 public:
  explicit GatedTutor(int gate_turn) : gate_turn_(std::to_string(gate_turn)), rules_(tutor_rules()) {
    provider_ = std::make_shared<ScriptedProvider>([this](const ChatRequest& req) {
      auto it = req.metadata.find("turn");
      if (req.metadata.at("stage") == "teacher" && it != req.metadata.end() && it->second == gate_turn_) {
        entered_ = true;
        while (!released_) std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
      for (const auto& r : rules_) {
        bool ok = true;
        for (const auto& [k, v] : r.metadata) {
          auto m = req.metadata.find(k);
          if (m == req.metadata.end() || m->second != v) ok = false;
        }
        if (ok) return r.responses.front();
      }
      return ScriptEntry::failure(ScriptFault::malformed);
    });
  }
  ScriptedProvider& provider() { return *provider_; }
  void wait_entered() const {
    while (!entered_) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  void release() { released_ = true; }

 private:
  std::string gate_turn_;
  std::vector<ScriptRule> rules_;
  std::shared_ptr<ScriptedProvider> provider_;
  std::atomic<bool> entered_{false}, released_{false};
};

// Two dialogues with hand-counted words: tutor 3+4+1+2+5 over 5 utterances,
// student 2+4+1 over 3, turns 1+2.
inline std::vector<DialogueTranscript> stats_fixture() {
  auto a = make_transcript(0, Termination::resolved, "a");
  a.utterances = {{Speaker::teacher, "a b c", 0, fixed_time()},
                  {Speaker::student, "x  y", 1, fixed_time()},
                  {Speaker::teacher, "d e\nf g", 1, fixed_time()}};
  auto b = make_transcript(0, Termination::max_turns_reached, "b");
  b.utterances = {{Speaker::teacher, "one", 0, fixed_time()},
                  {Speaker::student, "s1 s2 s3 s4", 1, fixed_time()},
                  {Speaker::teacher, "t t", 1, fixed_time()},
                  {Speaker::student, "u", 2, fixed_time()},
                  {Speaker::teacher, " v v v v v ", 2, fixed_time()}};
  return {a, b};
}

}  // namespace pace::test
