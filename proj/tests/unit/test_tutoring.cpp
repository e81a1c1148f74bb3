#include <thread>

#include "doctest.h"
#include "pace/errors.hpp"
#include "pace/tutoring.hpp"
#include "support.hpp"

using namespace pace;
namespace t = pace::test;

namespace {

Tutor make_tutor() {
  TutorOptions o;
  o.now = t::fixed_time;
  return Tutor(t::templates(), o);
}

std::vector<std::string> stages(const ScriptedProvider& p) {
  std::vector<std::string> out;
  for (const auto& r : p.requests()) out.push_back(r.metadata.at("stage"));
  return out;
}

}  // namespace

TEST_CASE("number extraction canonicalizes") {
  CHECK(extract_numbers("I got $1,200.50 and -3 apples, then 007 and 2.0") ==
        std::vector<std::string>{"1200.5", "-3", "7", "2"});
  CHECK(extract_numbers("x-2 is not negative") == std::vector<std::string>{"2"});
  CHECK(canonical_number("#### 1,800") == "1800");
  CHECK_FALSE(canonical_number("3 and 4"));
}

TEST_CASE("states_answer compares whole numbers and words") {
  CHECK(states_answer("So the answer is 1800 centimeters", "1,800"));
  CHECK(states_answer("it is $30.00", "30"));
  CHECK_FALSE(states_answer("I think 360", "36"));
  CHECK_FALSE(states_answer("maybe 3.6", "36"));
  CHECK(states_answer("The shape is a Triangle.", "triangle"));
  CHECK_FALSE(states_answer("triangles everywhere", "triangle"));
}

TEST_CASE("guideline parsing keeps list items") {
  CHECK(parse_guidelines("Here is the plan:\n1. First\n2) Second\n- Third\n\nThanks") ==
        std::vector<std::string>{"First", "Second", "Third"});
  CHECK(parse_guidelines("Use examples.\nGo slowly.") == std::vector<std::string>{"Use examples.", "Go slowly."});
  CHECK(parse_guidelines("  \n").empty());
  CHECK(format_guidelines({"a", "b"}) == "1. a\n2. b");
}

TEST_CASE("style simulation re-prompts with a format reminder") {
  ScriptedProvider p({ScriptEntry::text("no idea"), ScriptEntry::text("still vague"), ScriptEntry::text(t::style_reply())});
  auto tutor = make_tutor();
  auto style = tutor.simulate_learning_style(t::sample_profile(), t::sample_problem(), p);
  CHECK(style.perception == Perception::sensory);
  auto reqs = p.requests();
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[2].messages.size() == 5);
  CHECK(reqs[2].messages[1].role == Role::assistant);
  CHECK(reqs[2].metadata.at("attempt") == "3");

  ScriptedProvider never(t::always(ScriptEntry::text("no")));
  CHECK_THROWS_AS(tutor.simulate_learning_style(t::sample_profile(), t::sample_problem(), never),
                  StyleSimulationFailed);
  CHECK(never.call_count() == 3);
}

TEST_CASE("strategy needs at least one guideline") {
  auto tutor = make_tutor();
  ScriptedProvider q({ScriptEntry::text("1.  \n2. ")});
  CHECK_THROWS_AS(tutor.conceptualize_strategy(LearningStyle{}, t::sample_profile(), q), StrategyFailed);
  ScriptedProvider ok({ScriptEntry::text(t::strategy_reply())});
  auto s = tutor.conceptualize_strategy(LearningStyle{}, t::sample_profile(), ok);
  CHECK(s.guidelines.size() == 3);
  CHECK(s.persona_id == "maya");
  CHECK(s.created_at == t::fixed_time());
}

TEST_CASE("session lifecycle and request ordering") {
  auto tutor = make_tutor();
  auto provider = t::tutor_provider();
  auto s = tutor.create_session("s1", t::sample_problem(), t::sample_profile(), SessionConfig{});
  CHECK(s.state() == SessionState::init);
  CHECK_THROWS_AS(tutor.teacher_turn(s, std::nullopt, *provider), InvalidState);
  tutor.prepare(s, *provider);
  CHECK(s.state() == SessionState::strategy_ready);
  const auto strategy = *s.strategy();

  auto r0 = tutor.teacher_turn(s, std::nullopt, *provider);
  CHECK(r0.state == SessionState::teaching);
  CHECK(s.turn_count() == 0);
  CHECK(s.history().size() == 1);
  CHECK_THROWS_AS(tutor.teacher_turn(s, std::nullopt, *provider), InvalidState);
  CHECK_THROWS_AS(tutor.teacher_turn(s, std::string("  "), *provider), InvalidState);

  auto r1 = tutor.teacher_turn(s, std::string("I am not sure"), *provider);
  CHECK(r1.state == SessionState::teaching);
  CHECK(r1.text.find("Teacher reply 1") == 0);
  auto r2 = tutor.teacher_turn(s, std::string("Is it 36?"), *provider);
  CHECK(r2.state == SessionState::resolved);
  CHECK(s.turn_count() == 2);
  CHECK(s.history().size() == 5);
  CHECK(*s.strategy() == strategy);
  CHECK(stages(*provider) == std::vector<std::string>{"style", "strategy", "teacher", "teacher", "teacher"});
  CHECK_THROWS_AS(tutor.teacher_turn(s, std::string("more"), *provider), InvalidState);

  for (std::size_t i = 0; i < s.history().size(); ++i) {
    CHECK(s.history()[i].role == (i % 2 == 0 ? Speaker::teacher : Speaker::student));
    CHECK(s.history()[i].turn_index == static_cast<int>((i + 1) / 2));
  }
}

TEST_CASE("teacher messages carry the full history") {
  auto tutor = make_tutor();
  auto provider = t::tutor_provider();
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), *provider);
  CHECK(s.id() == "session-p1-maya");
  tutor.teacher_turn(s, std::nullopt, *provider);
  tutor.teacher_turn(s, std::string("first try"), *provider);
  auto last = provider->requests().back();
  REQUIRE(last.messages.size() == 4);
  CHECK(last.messages[0].role == Role::system);
  CHECK(last.messages[0].content.find("Use soccer examples.") != std::string::npos);
  CHECK(last.messages[1].role == Role::user);
  CHECK(last.messages[1].content.find(t::sample_problem().question) != std::string::npos);
  CHECK(last.messages[2].role == Role::assistant);
  CHECK(last.messages[3].content == "first try");
  CHECK(last.metadata.at("turn") == "1");
}

TEST_CASE("a correction keeps the session open") {
  auto rules = t::tutor_rules();
  rules.insert(rules.begin(), ScriptRule{"", {{"stage", "teacher"}, {"turn", "1"}},
                                         {ScriptEntry::text("Not quite, let's check the multiplication.")}});
  ScriptedProvider p(rules);
  auto tutor = make_tutor();
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), p);
  tutor.teacher_turn(s, std::nullopt, p);
  CHECK(tutor.teacher_turn(s, std::string("It's 36"), p).state == SessionState::teaching);
}

TEST_CASE("turn cap: max_turns_reached without a provider call") {
  auto tutor = make_tutor();
  auto provider = t::tutor_provider();
  SessionConfig cfg;
  cfg.max_turns = 2;
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), *provider, cfg);
  tutor.teacher_turn(s, std::nullopt, *provider);
  CHECK(tutor.teacher_turn(s, std::string("hmm"), *provider).state == SessionState::teaching);
  CHECK(tutor.teacher_turn(s, std::string("hmm again"), *provider).state == SessionState::max_turns_reached);
  const auto calls = provider->call_count();
  auto r = tutor.teacher_turn(s, std::string("one more"), *provider);
  CHECK(r.state == SessionState::max_turns_reached);
  CHECK(r.text.empty());
  CHECK(provider->call_count() == calls);
  CHECK(s.turn_count() == 2);
}

TEST_CASE("provider failure aborts without committing the utterance") {
  auto rules = t::tutor_rules();
  rules.insert(rules.begin(), ScriptRule{"", {{"stage", "teacher"}, {"turn", "1"}},
                                         {ScriptEntry::failure(ScriptFault::malformed)}});
  ScriptedProvider p(rules);
  auto tutor = make_tutor();
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), p);
  tutor.teacher_turn(s, std::nullopt, p);
  CHECK_THROWS_AS(tutor.teacher_turn(s, std::string("hello"), p), MalformedResponse);
  CHECK(s.state() == SessionState::aborted);
  CHECK(s.history().size() == 1);
  CHECK(!s.abort_reason().empty());
}

TEST_CASE("prepare failure aborts the session") {
  ScriptedProvider p(t::always(ScriptEntry::text("unparseable")));
  auto tutor = make_tutor();
  auto s = tutor.create_session("s", t::sample_problem(), t::sample_profile());
  CHECK_THROWS_AS(tutor.prepare(s, p), StyleSimulationFailed);
  CHECK(s.state() == SessionState::aborted);
  CHECK_FALSE(s.strategy());
}

TEST_CASE("create_session validates input") {
  auto tutor = make_tutor();
  SessionConfig cfg;
  cfg.max_turns = 0;
  CHECK_THROWS_AS(tutor.create_session("s", t::sample_problem(), t::sample_profile(), cfg), std::invalid_argument);
  auto p = t::sample_problem();
  p.gold_answer = "";
  CHECK_THROWS_AS(tutor.create_session("s", p, t::sample_profile()), std::invalid_argument);
}

TEST_CASE("concurrent turns on one session are rejected") {
  std::atomic<bool> entered{false}, release{false};
  auto base = t::tutor_provider();
  ScriptedProvider slow([&](const ChatRequest& req) {
    if (req.metadata.at("stage") == "teacher" && req.metadata.at("turn") == "1") {
      entered = true;
      while (!release) std::this_thread::yield();
    }
    return ScriptEntry::text(req.metadata.at("stage") == "style"      ? t::style_reply()
                             : req.metadata.at("stage") == "strategy" ? t::strategy_reply()
                                                                      : "Keep going.");
  });
  auto tutor = make_tutor();
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), slow);
  tutor.teacher_turn(s, std::nullopt, slow);
  std::thread first([&] { tutor.teacher_turn(s, std::string("a"), slow); });
  while (!entered) std::this_thread::yield();
  CHECK_THROWS_AS(tutor.teacher_turn(s, std::string("b"), slow), InvalidState);
  release = true;
  first.join();
  CHECK(s.turn_count() == 1);
}

TEST_CASE("resolution judge overrides the heuristic") {
  ScriptedProvider judge({{"", {{"stage", "resolution_judge"}}, {ScriptEntry::text("RESOLVED")}}});
  TutorOptions o;
  o.now = t::fixed_time;
  o.resolution_judge = &judge;
  Tutor tutor(t::templates(), o);
  auto provider = t::tutor_provider();
  SessionConfig cfg;
  cfg.judge_resolution = true;
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), *provider, cfg);
  tutor.teacher_turn(s, std::nullopt, *provider);
  CHECK(tutor.teacher_turn(s, std::string("no numbers here"), *provider).state == SessionState::resolved);
  CHECK(judge.call_count() == 1);
}

TEST_CASE("session json") {
  auto tutor = make_tutor();
  auto provider = t::tutor_provider();
  auto s = tutor.open_session(t::sample_problem(), t::sample_profile(), *provider);
  tutor.teacher_turn(s, std::nullopt, *provider);
  auto j = session_to_json(s);
  CHECK(j["state"] == "teaching");
  CHECK(j["turn_count"] == 0);
  CHECK(j["history"].size() == 1);
  Utterance u{Speaker::student, "hi", 3, t::fixed_time()};
  CHECK(nlohmann::json(u).get<Utterance>() == u);
  CHECK(nlohmann::json(t::sample_problem()).get<Problem>() == t::sample_problem());
}
