#include "pace/synthesis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::resolved: return "resolved";
    case Termination::max_turns_reached: return "max_turns_reached";
    case Termination::aborted: return "aborted";
  }
  return "aborted";
}

std::optional<Termination> termination_from(std::string_view s) {
  if (s == "resolved") return Termination::resolved;
  if (s == "max_turns_reached") return Termination::max_turns_reached;
  if (s == "aborted") return Termination::aborted;
  return std::nullopt;
}

int DialogueTranscript::turn_count() const {
  return static_cast<int>(std::count_if(utterances.begin(), utterances.end(),
                                        [](const Utterance& u) { return u.role == Speaker::student; }));
}

namespace {

const char* const kSynthesisTemplates[] = {template_ids::style_simulation, template_ids::style_format_reminder,
                                           template_ids::strategy_conceptualization,
                                           template_ids::socratic_teacher_system, template_ids::teacher_opening,
                                           template_ids::student_system};

Provenance make_provenance(const PromptLibrary& prompts, const SynthesisConfig& config) {
  Provenance p;
  p.teacher_model = config.session.sampling.model_id.empty() ? config.teacher_model : config.session.sampling.model_id;
  p.student_model = config.student_sampling.model_id.empty() ? config.student_model : config.student_sampling.model_id;
  p.temperature = config.session.sampling.temperature;
  p.top_p = config.session.sampling.top_p;
  p.max_tokens = config.session.sampling.max_tokens;
  for (const char* id : kSynthesisTemplates)
    if (prompts.contains(id)) p.template_versions[id] = prompts.get(id).version;
  return p;
}

Termination termination_for(SessionState s) {
  switch (s) {
    case SessionState::resolved: return Termination::resolved;
    case SessionState::max_turns_reached: return Termination::max_turns_reached;
    default: return Termination::aborted;
  }
}

}  // namespace

DialogueTranscript transcript_from_session(const Session& session, Termination termination, Provenance provenance,
                                           std::string id) {
  DialogueTranscript t;
  t.id = id.empty() ? session.id() : std::move(id);
  t.problem = session.problem();
  t.profile_id = session.profile().id;
  t.style = session.style();
  t.strategy = session.strategy();
  t.utterances = session.history();
  t.termination = termination;
  t.provenance = std::move(provenance);
  return t;
}

ChatRequest student_request(const PromptLibrary& prompts, const Session& session, const SamplingParams& sampling) {
  const auto& p = session.profile();
  const auto system = prompts.render(template_ids::student_system,
                                     {{"name", p.name},
                                      {"gender", p.gender},
                                      {"age", std::to_string(p.age_years)},
                                      {"interests", join(p.interests, ", ")},
                                      {"traits", join(p.traits, ", ")},
                                      {"experiences", p.experiences.empty() ? "none in particular" : join(p.experiences, "; ")},
                                      {"knowledge_level", std::string(to_string(p.knowledge_level))},
                                      {"question", session.problem().question}});
  ChatRequest req;
  req.model_id = sampling.model_id;
  req.temperature = sampling.temperature;
  req.top_p = sampling.top_p;
  req.max_tokens = sampling.max_tokens;
  req.messages.push_back({Role::system, system});
  // From the student's side the tutor is the interlocutor.
  for (const auto& u : session.history())
    req.messages.push_back({u.role == Speaker::teacher ? Role::user : Role::assistant, u.text});
  req.metadata = {{"stage", "student"},
                  {"turn", std::to_string(session.turn_count() + 1)},
                  {"session_id", session.id()},
                  {"problem_id", session.problem().id},
                  {"persona_id", p.id}};
  return req;
}

DialogueTranscript synthesize_dialogue(const Tutor& tutor, const Problem& problem, const PersonaProfile& profile,
                                       Provider& teacher, Provider& student, const SynthesisConfig& config) {
  const auto provenance = make_provenance(tutor.prompts(), config);
  Session session = tutor.create_session(config.transcript_id, problem, profile, config.session);
  auto fail = [&](const std::string& stage, const std::exception& e) -> SynthesisAborted {
    return SynthesisAborted(stage + ": " + e.what(),
                            transcript_from_session(session, Termination::aborted, provenance, config.transcript_id));
  };

  try {
    tutor.prepare(session, teacher);
    tutor.teacher_turn(session, std::nullopt, teacher);
  } catch (const std::exception& e) {
    throw fail("teacher setup failed", e);
  }

  while (session.state() == SessionState::teaching) {
    std::string utterance;
    try {
      utterance = student.complete(student_request(tutor.prompts(), session, config.student_sampling)).content;
    } catch (const std::exception& e) {
      throw fail("student agent failed at turn " + std::to_string(session.turn_count() + 1), e);
    }
    try {
      tutor.teacher_turn(session, utterance, teacher);
    } catch (const std::exception& e) {
      throw fail("teacher agent failed at turn " + std::to_string(session.turn_count() + 1), e);
    }
  }
  return transcript_from_session(session, termination_for(session.state()), provenance, config.transcript_id);
}

std::vector<std::string> structural_violations(const DialogueTranscript& t) {
  std::vector<std::string> out;
  if (t.utterances.empty()) {
    out.emplace_back("no utterances");
  } else {
    for (std::size_t k = 0; k < t.utterances.size(); ++k) {
      const auto& u = t.utterances[k];
      const Speaker expected = (k % 2 == 0) ? Speaker::teacher : Speaker::student;
      if (u.role != expected) {
        out.push_back("utterance " + std::to_string(k) + ": roles do not alternate");
        break;
      }
      if (u.turn_index != static_cast<int>((k + 1) / 2)) {
        out.push_back("utterance " + std::to_string(k) + ": unexpected turn_index");
        break;
      }
      if (trim(u.text).empty()) {
        out.push_back("utterance " + std::to_string(k) + ": empty text");
        break;
      }
    }
    if (t.utterances.back().role != Speaker::teacher) out.emplace_back("dialogue ends on a student utterance");
  }
  if (!t.style) out.emplace_back("missing learning style");
  if (!t.strategy || t.strategy->guidelines.empty()) out.emplace_back("missing teaching strategy");
  if (t.provenance.teacher_model.empty() || t.provenance.student_model.empty()) out.emplace_back("incomplete provenance");
  return out;
}

std::pair<std::vector<DialogueTranscript>, FilterReport> filter_transcripts(
    const std::vector<DialogueTranscript>& transcripts, const FilterRules& rules) {
  std::vector<DialogueTranscript> kept;
  FilterReport report;
  for (const auto& t : transcripts) {
    if (t.termination == Termination::aborted) {
      ++report.dropped_malformed;
    } else if (t.turn_count() <= rules.min_turns_exclusive) {
      ++report.dropped_short;
    } else if (rules.require_resolved && t.termination != Termination::resolved) {
      ++report.dropped_unresolved;
    } else if (!structural_violations(t).empty()) {
      ++report.dropped_malformed;
    } else {
      ++report.kept;
      kept.push_back(t);
    }
  }
  return {std::move(kept), report};
}

std::vector<std::size_t> assign_profiles(std::size_t problem_count, std::size_t profile_count, std::uint64_t seed) {
  if (profile_count == 0) throw std::invalid_argument("at least one profile is required");
  const auto order = seeded_permutation(profile_count, seed);
  std::vector<std::size_t> out(problem_count);
  for (std::size_t i = 0; i < problem_count; ++i) out[i] = order[i % profile_count];
  return out;
}

BatchResult run_batch(const Tutor& tutor, const std::vector<Problem>& problems,
                      const std::vector<PersonaProfile>& profiles, Provider& teacher, Provider& student,
                      std::size_t parallelism, std::uint64_t seed, const SynthesisConfig& config) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  const auto assignment = assign_profiles(problems.size(), profiles.size(), seed);

  std::vector<std::optional<DialogueTranscript>> done(problems.size());
  std::vector<std::optional<BatchFailure>> failed(problems.size());
  parallel_for(problems.size(), parallelism, [&](std::size_t i) {
    const auto& problem = problems[i];
    const auto& profile = profiles[assignment[i]];
    SynthesisConfig item = config;
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "dlg-%05zu-", i);
    item.transcript_id = prefix + problem.id;
    try {
      done[i] = synthesize_dialogue(tutor, problem, profile, teacher, student, item);
    } catch (const SynthesisAborted& e) {
      failed[i] = BatchFailure{i, problem.id, profile.id, e.what(), e.partial()};
    } catch (const std::exception& e) {
      failed[i] = BatchFailure{i, problem.id, profile.id, e.what(), std::nullopt};
    }
  });

  BatchResult result;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (done[i]) result.transcripts.push_back(std::move(*done[i]));
    if (failed[i]) result.failures.push_back(std::move(*failed[i]));
  }
  if (!problems.empty() && result.transcripts.empty())
    throw BatchError("all " + std::to_string(problems.size()) + " syntheses failed; first: " +
                     result.failures.front().message);
  return result;
}

std::vector<DialogueTranscript> sample_for_review(const std::vector<DialogueTranscript>& transcripts, std::size_t n,
                                                  std::uint64_t seed) {
  auto order = seeded_permutation(transcripts.size(), seed);
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  std::vector<DialogueTranscript> out;
  for (auto i : order) out.push_back(transcripts[i]);
  return out;
}

// --- GSM8K ----------------------------------------------------------------------

namespace {

std::string strip_calculator_annotations(const std::string& line) {
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto open = line.find("<<", pos);
    if (open == std::string::npos) break;
    const auto close = line.find(">>", open + 2);
    if (close == std::string::npos) break;
    out.append(line, pos, open - pos);
    pos = close + 2;
  }
  out.append(line, pos, std::string::npos);
  return out;
}

}  // namespace

Problem parse_gsm8k_record(const json& record, std::size_t index) {
  if (!record.is_object()) throw SchemaError(index, "GSM8K record must be an object");
  if (!record.contains("question") || !record["question"].is_string())
    throw SchemaError(index, "missing string field 'question'");
  if (!record.contains("answer") || !record["answer"].is_string())
    throw SchemaError(index, "missing string field 'answer'");
  const auto answer = record["answer"].get<std::string>();
  const auto marker = answer.rfind("####");
  if (marker == std::string::npos) throw SchemaError(index, "answer lacks the '#### <final>' terminator");

  Problem p;
  p.id = record.contains("id") && record["id"].is_string() ? record["id"].get<std::string>()
                                                           : "gsm8k-" + std::to_string(index);
  p.question = trim(record["question"].get<std::string>());
  const std::string final_answer = trim(answer.substr(marker + 4));
  p.gold_answer = canonical_number(final_answer).value_or(final_answer);
  for (const auto& line : split_lines(answer.substr(0, marker))) {
    auto step = trim(strip_calculator_annotations(line));
    if (!step.empty()) p.solution_steps.push_back(std::move(step));
  }
  if (p.question.empty() || p.gold_answer.empty()) throw SchemaError(index, "empty question or final answer");
  return p;
}

std::vector<Problem> load_gsm8k(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read problem file: " + path.string());
  std::vector<Problem> out;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(index, std::string("invalid JSON: ") + e.what());
    }
    out.push_back(parse_gsm8k_record(record, index));
    ++index;
  }
  return out;
}

// --- json -------------------------------------------------------------------------

void to_json(json& j, const Provenance& p) {
  j = json{{"teacher_model", p.teacher_model},
           {"student_model", p.student_model},
           {"temperature", p.temperature},
           {"top_p", p.top_p},
           {"max_tokens", p.max_tokens},
           {"template_versions", p.template_versions}};
}

void from_json(const json& j, Provenance& p) {
  p.teacher_model = j.at("teacher_model").get<std::string>();
  p.student_model = j.at("student_model").get<std::string>();
  p.temperature = j.at("temperature").get<double>();
  p.top_p = j.at("top_p").get<double>();
  p.max_tokens = j.at("max_tokens").get<int>();
  p.template_versions = j.at("template_versions").get<std::map<std::string, std::string>>();
}

void to_json(json& j, const DialogueTranscript& t) {
  j = json{{"id", t.id},
           {"problem", t.problem},
           {"profile_id", t.profile_id},
           {"style", t.style ? json(*t.style) : json(nullptr)},
           {"strategy", t.strategy ? json(*t.strategy) : json(nullptr)},
           {"utterances", t.utterances},
           {"termination", to_string(t.termination)},
           {"provenance", t.provenance}};
}

void from_json(const json& j, DialogueTranscript& t) {
  t.id = j.at("id").get<std::string>();
  t.problem = j.at("problem").get<Problem>();
  t.profile_id = j.at("profile_id").get<std::string>();
  const auto& style = j.at("style");
  t.style = style.is_null() ? std::nullopt : std::optional<LearningStyle>(style.get<LearningStyle>());
  const auto& strategy = j.at("strategy");
  t.strategy = strategy.is_null() ? std::nullopt : std::optional<TeachingStrategy>(strategy.get<TeachingStrategy>());
  t.utterances = j.at("utterances").get<std::vector<Utterance>>();
  const auto term = termination_from(j.at("termination").get<std::string>());
  if (!term) throw std::invalid_argument("unknown termination");
  t.termination = *term;
  t.provenance = j.at("provenance").get<Provenance>();
}

void to_json(json& j, const FilterReport& r) {
  j = json{{"kept", r.kept},
           {"dropped_short", r.dropped_short},
           {"dropped_unresolved", r.dropped_unresolved},
           {"dropped_malformed", r.dropped_malformed}};
}

}  // namespace pace
