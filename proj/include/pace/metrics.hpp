#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pace/dataset.hpp"
#include "pace/llm.hpp"
#include "pace/prompts.hpp"

namespace pace {

using Tokens = std::vector<std::string>;

// Lowercase, drop ASCII punctuation, split on whitespace.
Tokens tokenize(const std::string& text);

// Sentence-level BLEU with clipped precisions for orders 1..n, uniform
// weights, brevity penalty min(1, exp(1 - r/c)). A zero precision is replaced
// by 1e-9. When neither side has any k-grams (both shorter than k) that order
// counts as a full match. Throws EmptyInput on an empty side.
double bleu_n(const Tokens& candidate, const Tokens& reference, int n);

enum class RougeMode { recall, f1 };

double rouge_n(const Tokens& candidate, const Tokens& reference, int n, RougeMode mode = RougeMode::recall);
double rouge_l(const Tokens& candidate, const Tokens& reference, RougeMode mode = RougeMode::recall);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct MeteorParams {
  double alpha = 0.9;  // F_mean = PR / (alpha P + (1 - alpha) R)
  double gamma = 0.5;
  double beta = 3.0;
};

// Exact-match METEOR: leftmost-greedy unigram alignment, fragmentation penalty
// gamma * (chunks / m)^beta.
double meteor(const Tokens& candidate, const Tokens& reference, const MeteorParams& params = {});

// Maps a token sequence to one unit-norm vector per token. Only vectors
// returned by the same call need to be comparable; embed_f1 sends candidate
// and reference together.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(const Tokens& tokens) = 0;
  virtual std::string name() const = 0;
};

// Distinct tokens of one call get orthogonal basis vectors, so embed_f1
// reduces to exact token matching.
class OneHotEmbedder : public Embedder {
 public:
  std::vector<std::vector<double>> embed(const Tokens& tokens) override;
  std::string name() const override { return "one-hot"; }
};

// Character trigram feature hashing. Deterministic and offline; gives partial
// credit to tokens sharing substrings.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256);
  std::vector<std::vector<double>> embed(const Tokens& tokens) override;
  std::string name() const override { return "hashing"; }

 private:
  std::size_t dimension_;
};

struct HttpEmbedderConfig {
  std::string api_base = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "text-embedding-3-small";
  int timeout_seconds = 60;
};

// OpenAI-compatible POST {api_base}/embeddings, one input per token.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(HttpEmbedderConfig config);
  std::vector<std::vector<double>> embed(const Tokens& tokens) override;
  std::string name() const override { return "http:" + config_.model; }

 private:
  HttpEmbedderConfig config_;
};

// Greedy max-cosine matching: recall averages over reference tokens, precision
// over candidate tokens, negative cosines count as zero.
double embed_f1(const Tokens& candidate, const Tokens& reference, Embedder& embedder);

struct MetricScores {
  double bleu_1 = 0, bleu_2 = 0, bleu_3 = 0, bleu_4 = 0;
  double meteor = 0;
  double rouge_1 = 0, rouge_2 = 0, rouge_l = 0;
  double embed_f1 = 0;

  // Mean of the nine metrics.
  double average() const;
  std::vector<double> values() const;  // table column order
};

struct MetricConfig {
  RougeMode rouge_mode = RougeMode::recall;
  MeteorParams meteor;
  Embedder* embedder = nullptr;  // nullptr: a private OneHotEmbedder
  std::size_t parallelism = 1;
};

MetricScores score_pair(const std::string& candidate, const std::string& reference, const MetricConfig& config = {});

struct EvalUnit {
  std::string id;
  std::vector<Utterance> context;  // gold history before the reference turn
  std::string candidate;
  std::string reference;
  std::string profile_id;  // optional slice key
};

struct MetricSlice {
  MetricScores scores;  // macro-averaged over units
  double average = 0;
  std::size_t sample_count = 0;
};

struct MetricReport {
  MetricSlice overall;
  std::map<std::string, MetricSlice> by_persona;  // only units carrying a profile id
  std::vector<MetricScores> per_unit;             // input order
};

// Throws EmptyInput on no units or an empty candidate/reference after tokenizing.
MetricReport evaluate_corpus(const std::vector<EvalUnit>& units, const MetricConfig& config = {});

// Table columns: BL-1 BL-2 BL-3 BL-4 METEOR RG-1 RG-2 RG-L BERTScore Avg, scaled by 100.
std::string format_metric_table(const MetricReport& report);

// Teacher forcing: for every teacher utterance in the dataset, ask `model` for
// a reply conditioned on the training instruction and the gold history before
// it. The gold utterance becomes the reference.
std::vector<EvalUnit> teacher_forced_units(const Dataset& dataset, const PromptLibrary& prompts, Provider& model,
                                           const SamplingParams& sampling = {}, std::size_t parallelism = 1);

std::vector<EvalUnit> load_eval_units(const std::filesystem::path& path);
void save_eval_units(const std::filesystem::path& path, const std::vector<EvalUnit>& units);

void to_json(nlohmann::json& j, const MetricScores& s);
void to_json(nlohmann::json& j, const MetricSlice& s);
void to_json(nlohmann::json& j, const MetricReport& r);
void to_json(nlohmann::json& j, const EvalUnit& u);
void from_json(const nlohmann::json& j, EvalUnit& u);

}  // namespace pace
