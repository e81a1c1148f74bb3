#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pace/prompts.hpp"
#include "pace/synthesis.hpp"

namespace pace {

using Dataset = std::vector<DialogueTranscript>;

// JSONL, one transcript per line. load() reports the zero-based line of the
// first malformed record in SchemaError.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + valid + test; }
};

struct DatasetSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// "1200,60,150" -> {1200, 60, 150}. Throws std::invalid_argument.
SplitCounts parse_split_counts(const std::string& text);

// Seeded shuffle, then consecutive slices. Throws InsufficientData when the
// counts exceed the dataset size.
DatasetSplit split_dataset(const Dataset& dataset, const SplitCounts& counts, std::uint64_t seed);

struct DatasetStats {
  std::size_t dialogues = 0;
  std::size_t turns = 0;
  double avg_turns_per_dialogue = 0.0;
  double avg_words_per_utterance_tutor = 0.0;
  double avg_words_per_utterance_student = 0.0;
};

DatasetStats compute_stats(const Dataset& dataset);
// Two-column summary with the five dataset-summary rows.
std::string format_stats_table(const DatasetStats& stats);

struct Segment {
  Speaker role = Speaker::teacher;
  std::string text;
  bool loss = false;  // true exactly for teacher segments
};

// One trainer-ready record. Only teacher segments carry loss; trainers expand
// the per-segment flag to the tokens of that segment.
struct TrainingExample {
  std::string instruction;  // problem plus teaching strategy
  std::vector<Segment> segments;
  std::string source_transcript_id;
};

TrainingExample make_training_example(const DialogueTranscript& transcript, const PromptLibrary& prompts);

// Writes one JSONL record per transcript and returns the count. Throws
// InsufficientData on an empty dataset and IoError when the file cannot be written.
std::size_t export_training(const Dataset& dataset, const std::filesystem::path& path, const PromptLibrary& prompts);

void to_json(nlohmann::json& j, const DatasetStats& s);
void to_json(nlohmann::json& j, const TrainingExample& e);
void from_json(const nlohmann::json& j, TrainingExample& e);

}  // namespace pace
