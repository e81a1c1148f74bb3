#include "pace/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pace/errors.hpp"
#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset: " + path.string());
  for (const auto& t : dataset) out << json(t).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset: " + path.string());
  Dataset out;
  std::string line;
  for (std::size_t index = 0; std::getline(in, line); ++index) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<DialogueTranscript>());
    } catch (const std::exception& e) {
      throw SchemaError(index, e.what());
    }
  }
  return out;
}

SplitCounts parse_split_counts(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("split counts must be three non-negative integers, got '" + text + "'");
    parts.push_back(std::stoull(t));
  }
  if (parts.size() != 3) throw std::invalid_argument("split counts must be train,valid,test");
  return {parts[0], parts[1], parts[2]};
}

DatasetSplit split_dataset(const Dataset& dataset, const SplitCounts& counts, std::uint64_t seed) {
  if (counts.total() > dataset.size())
    throw InsufficientData("split needs " + std::to_string(counts.total()) + " records, dataset has " +
                           std::to_string(dataset.size()));
  const auto order = seeded_permutation(dataset.size(), seed);
  DatasetSplit out;
  std::size_t k = 0;
  for (; k < counts.train; ++k) out.train.push_back(dataset[order[k]]);
  for (; k < counts.train + counts.valid; ++k) out.valid.push_back(dataset[order[k]]);
  for (; k < counts.total(); ++k) out.test.push_back(dataset[order[k]]);
  return out;
}

DatasetStats compute_stats(const Dataset& dataset) {
  DatasetStats s;
  s.dialogues = dataset.size();
  std::size_t tutor_words = 0, tutor_utts = 0, student_words = 0, student_utts = 0;
  for (const auto& t : dataset) {
    s.turns += static_cast<std::size_t>(t.turn_count());
    for (const auto& u : t.utterances) {
      const auto words = split_whitespace(u.text).size();
      if (u.role == Speaker::teacher) {
        tutor_words += words;
        ++tutor_utts;
      } else {
        student_words += words;
        ++student_utts;
      }
    }
  }
  if (s.dialogues) s.avg_turns_per_dialogue = static_cast<double>(s.turns) / static_cast<double>(s.dialogues);
  if (tutor_utts) s.avg_words_per_utterance_tutor = static_cast<double>(tutor_words) / static_cast<double>(tutor_utts);
  if (student_utts)
    s.avg_words_per_utterance_student = static_cast<double>(student_words) / static_cast<double>(student_utts);
  return s;
}

std::string format_stats_table(const DatasetStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%-36s %s\n"
                "%-36s %zu\n"
                "%-36s %zu\n"
                "%-36s %.2f\n"
                "%-36s %.2f\n"
                "%-36s %.2f\n",
                "Dataset Summary", "Counts", "Dialogues", s.dialogues, "Turns", s.turns, "Avg. Turns per dialogue",
                s.avg_turns_per_dialogue, "Avg. Words per utterance (Tutor)", s.avg_words_per_utterance_tutor,
                "Avg. Words per utterance (Student)", s.avg_words_per_utterance_student);
  return buf;
}

TrainingExample make_training_example(const DialogueTranscript& t, const PromptLibrary& prompts) {
  if (!t.strategy) throw std::invalid_argument("transcript " + t.id + " has no teaching strategy");
  TrainingExample ex;
  ex.instruction = prompts.render(template_ids::training_instruction,
                                  {{"question", t.problem.question}, {"strategy", format_guidelines(t.strategy->guidelines)}});
  ex.source_transcript_id = t.id;
  ex.segments.reserve(t.utterances.size());
  for (const auto& u : t.utterances) ex.segments.push_back({u.role, u.text, u.role == Speaker::teacher});
  return ex;
}

std::size_t export_training(const Dataset& dataset, const std::filesystem::path& path, const PromptLibrary& prompts) {
  if (dataset.empty()) throw InsufficientData("cannot export an empty dataset");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write training export: " + path.string());
  std::size_t n = 0;
  for (const auto& t : dataset) {
    out << json(make_training_example(t, prompts)).dump() << '\n';
    ++n;
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
  return n;
}

void to_json(json& j, const DatasetStats& s) {
  j = json{{"dialogues", s.dialogues},
           {"turns", s.turns},
           {"avg_turns_per_dialogue", s.avg_turns_per_dialogue},
           {"avg_words_per_utterance_tutor", s.avg_words_per_utterance_tutor},
           {"avg_words_per_utterance_student", s.avg_words_per_utterance_student}};
}

void to_json(json& j, const TrainingExample& e) {
  json segments = json::array();
  for (const auto& s : e.segments) segments.push_back({{"role", to_string(s.role)}, {"text", s.text}, {"loss", s.loss}});
  j = json{{"instruction", e.instruction}, {"segments", std::move(segments)}, {"source_transcript_id", e.source_transcript_id}};
}

void from_json(const json& j, TrainingExample& e) {
  e.instruction = j.at("instruction").get<std::string>();
  e.source_transcript_id = j.at("source_transcript_id").get<std::string>();
  e.segments.clear();
  for (const auto& s : j.at("segments")) {
    const auto role = speaker_from(s.at("role").get<std::string>());
    if (!role) throw std::invalid_argument("segment role must be student or teacher");
    e.segments.push_back({*role, s.at("text").get<std::string>(), s.at("loss").get<bool>()});
  }
}

}  // namespace pace
