#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pace/errors.hpp"
#include "pace/llm.hpp"
#include "pace/persona.hpp"
#include "pace/tutoring.hpp"

namespace pace {

enum class Termination { resolved, max_turns_reached, aborted };

struct Provenance {
  std::string teacher_model;
  std::string student_model;
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 512;
  std::map<std::string, std::string> template_versions;

  bool operator==(const Provenance&) const = default;
};

// A finished (or aborted) teacher-student trajectory. style and strategy are
// absent only for transcripts aborted before the strategy stage.
struct DialogueTranscript {
  std::string id;
  Problem problem;
  std::string profile_id;
  std::optional<LearningStyle> style;
  std::optional<TeachingStrategy> strategy;
  std::vector<Utterance> utterances;
  Termination termination = Termination::aborted;
  Provenance provenance;

  // Turns are counted as student utterances: the opening rephrase shares
  // turn 1 with the first student reply, so a t-turn dialogue has 2t + 1
  // utterances when it ends on a teacher reply.
  int turn_count() const;
  bool operator==(const DialogueTranscript&) const = default;
};

class SynthesisAborted : public Error {
 public:
  SynthesisAborted(const std::string& what, DialogueTranscript partial)
      : Error(what), partial_(std::move(partial)) {}
  const DialogueTranscript& partial() const { return partial_; }

 private:
  DialogueTranscript partial_;
};

struct SynthesisConfig {
  SessionConfig session;                 // teacher sampling and turn cap
  SamplingParams student_sampling;
  std::string transcript_id;             // defaults to the session id
  std::string teacher_model = "teacher";  // provenance labels
  std::string student_model = "student";
};

// Teacher rephrase, then (student, teacher) exchanges until the session
// resolves or hits the turn cap. Failures raise SynthesisAborted carrying the
// partial transcript.
DialogueTranscript synthesize_dialogue(const Tutor& tutor, const Problem& problem, const PersonaProfile& profile,
                                       Provider& teacher, Provider& student, const SynthesisConfig& config);

DialogueTranscript transcript_from_session(const Session& session, Termination termination, Provenance provenance,
                                           std::string id = {});

// Student agent request for the next utterance given the session so far.
ChatRequest student_request(const PromptLibrary& prompts, const Session& session, const SamplingParams& sampling);

struct FilterRules {
  int min_turns_exclusive = 5;  // keep only dialogues with more turns than this
  bool require_resolved = true;
};

struct FilterReport {
  std::size_t kept = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_unresolved = 0;
  std::size_t dropped_malformed = 0;

  std::size_t total() const { return kept + dropped_short + dropped_unresolved + dropped_malformed; }
  bool operator==(const FilterReport&) const = default;
};

// Structural problems: role alternation, turn indices, empty text, missing
// style or strategy. Empty result means well-formed.
std::vector<std::string> structural_violations(const DialogueTranscript& t);

// Each transcript lands in exactly one bucket, checked in this order: aborted
// -> malformed; too few turns -> short; not resolved -> unresolved; any other
// structural violation -> malformed; otherwise kept.
std::pair<std::vector<DialogueTranscript>, FilterReport> filter_transcripts(
    const std::vector<DialogueTranscript>& transcripts, const FilterRules& rules = {});

struct BatchFailure {
  std::size_t index = 0;
  std::string problem_id;
  std::string profile_id;
  std::string message;
  std::optional<DialogueTranscript> partial;
};

struct BatchResult {
  std::vector<DialogueTranscript> transcripts;  // input order, failures skipped
  std::vector<BatchFailure> failures;           // input order
};

// Profile index for each problem: round-robin over a seeded shuffle.
std::vector<std::size_t> assign_profiles(std::size_t problem_count, std::size_t profile_count, std::uint64_t seed);

// Synthesizes one dialogue per problem with up to `parallelism` workers.
// Output is ordered by input regardless of completion order. Throws BatchError
// only when every item fails.
BatchResult run_batch(const Tutor& tutor, const std::vector<Problem>& problems,
                      const std::vector<PersonaProfile>& profiles, Provider& teacher, Provider& student,
                      std::size_t parallelism, std::uint64_t seed, const SynthesisConfig& config = {});

// Seeded sample without replacement, for manual quality review.
std::vector<DialogueTranscript> sample_for_review(const std::vector<DialogueTranscript>& transcripts, std::size_t n,
                                                  std::uint64_t seed);

// GSM8K JSONL: {"question", "answer"} with the final answer after "####".
// Calculator annotations (<<a*b=c>>) are removed from the solution steps.
Problem parse_gsm8k_record(const nlohmann::json& record, std::size_t index);
std::vector<Problem> load_gsm8k(const std::filesystem::path& path);

std::string_view to_string(Termination t);
std::optional<Termination> termination_from(std::string_view s);

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);
void to_json(nlohmann::json& j, const DialogueTranscript& t);
void from_json(const nlohmann::json& j, DialogueTranscript& t);
void to_json(nlohmann::json& j, const FilterReport& r);

}  // namespace pace
