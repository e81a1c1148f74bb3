#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pace/llm.hpp"
#include "pace/prompts.hpp"
#include "pace/tutoring.hpp"

namespace pace {

enum class Criterion { coherence, relevance, personalization, engagement, consistency, inspiration };
enum class Verdict { win, lose, tie };

const std::vector<Criterion>& all_criteria();
std::string_view to_string(Criterion c);
std::optional<Criterion> criterion_from(std::string_view s);
std::string_view to_string(Verdict v);
std::optional<Verdict> verdict_from(std::string_view s);
// One-sentence description handed to the pairwise judge.
std::string criterion_guidance(Criterion c);
std::string rank_template_id(Criterion c);

// A ranked example shown to the judge before the real query.
struct JudgeDemo {
  std::string context;
  std::vector<std::string> responses;  // shown as Model 1..K
  std::string ranking;                 // e.g. "Model 2 < Model 1 < Model 3"
};

std::vector<JudgeDemo> load_demos(const std::filesystem::path& path);
std::string format_demos(const std::vector<JudgeDemo>& demos);

// One evaluation context: the shared dialogue prefix and every model's reply.
struct JudgeItem {
  std::string id;
  std::string persona;  // rendered profile shown to the judge
  std::string context;
  std::map<std::string, std::string> responses;  // model id -> text
};

std::vector<JudgeItem> load_judge_items(const std::filesystem::path& path);

struct JudgeOptions {
  bool shuffle = true;  // randomize which model is shown as "Model k"
  int max_requeries = 2;
  std::uint64_t seed = 0;
  SamplingParams sampling{"", 0.0, 1.0, 256};
};

struct RankingResult {
  std::string context_id;
  Criterion criterion = Criterion::coherence;
  std::vector<std::string> ranking;       // model ids, lowest to highest
  std::vector<std::string> presentation;  // model id shown as Model k+1
  std::string raw_judge_text;             // reply that was parsed
  int attempts = 0;
};

struct PairwiseResult {
  std::string context_id;
  Criterion criterion = Criterion::coherence;
  std::string model_a;
  std::string model_b;
  std::vector<Verdict> verdicts;       // from A's perspective, one per query
  std::vector<bool> position_swapped;  // true when B was shown first
  std::vector<std::string> raw_judge_texts;
  Verdict outcome = Verdict::tie;
};

// Ordering of anonymous labels 1..k (lowest to highest), or nullopt when the
// text holds no valid permutation. Accepts "Model 2 < Model 3 < Model 1",
// ">" chains (read as highest first), comma lists, and numbered lists. Lines
// are scanned from the end so a trailing answer wins over restated prompts.
std::optional<std::vector<int>> parse_ranking(std::string_view text, std::size_t k);

// 1 or 2 for the preferred response, 0 for a tie.
std::optional<int> parse_pairwise(std::string_view text);

// Throws std::invalid_argument with fewer than two models, JudgeParseFailed
// after max_requeries unparseable replies. Provider errors pass through.
RankingResult rank_responses(const JudgeItem& item, Criterion criterion, Provider& judge, const PromptLibrary& prompts,
                             const std::vector<JudgeDemo>& demos, const JudgeOptions& options = {});

// With debias the pair is judged twice with positions swapped; the outcome is
// the shared verdict when both agree and tie otherwise.
PairwiseResult pairwise_compare(const std::string& context_id, const std::string& persona, const std::string& context,
                                const std::pair<std::string, std::string>& a,
                                const std::pair<std::string, std::string>& b, Criterion criterion, Provider& judge,
                                const PromptLibrary& prompts, bool debias, const JudgeOptions& options = {});

// Combines verdicts per the debias rule.
Verdict combine_verdicts(const std::vector<Verdict>& verdicts);

template <class Result>
struct JudgeBatch {
  std::vector<Result> results;                               // input order, failures skipped
  std::vector<std::pair<std::size_t, std::string>> failures;  // job index, message
};

struct RankingJob {
  const JudgeItem* item = nullptr;
  Criterion criterion = Criterion::coherence;
};

struct PairwiseJob {
  const JudgeItem* item = nullptr;
  Criterion criterion = Criterion::coherence;
  std::string model_a;
  std::string model_b;
};

JudgeBatch<RankingResult> run_rankings(const std::vector<RankingJob>& jobs, Provider& judge,
                                       const PromptLibrary& prompts, const std::vector<JudgeDemo>& demos,
                                       const JudgeOptions& options, std::size_t parallelism);
JudgeBatch<PairwiseResult> run_pairwise(const std::vector<PairwiseJob>& jobs, Provider& judge,
                                        const PromptLibrary& prompts, bool debias, const JudgeOptions& options,
                                        std::size_t parallelism);

struct PairwiseTally {
  std::string model_a;
  std::string model_b;
  Criterion criterion = Criterion::coherence;
  std::size_t win = 0, lose = 0, tie = 0;

  std::size_t total() const { return win + lose + tie; }
  double win_pct() const;
  double lose_pct() const;
  double tie_pct() const;
};

struct JudgeReport {
  // criterion -> model -> mean rank in [1, K]; criteria without results are absent
  std::map<Criterion, std::map<std::string, double>> mean_rank;
  std::map<Criterion, std::size_t> ranking_counts;
  std::vector<PairwiseTally> pairwise;  // one per (criterion, A, B)
};

// Throws EmptyInput when both inputs are empty.
JudgeReport aggregate(const std::vector<RankingResult>& rankings, const std::vector<PairwiseResult>& pairwise = {});
std::string format_judge_report(const JudgeReport& report);

// JSONL audit log: one record per judgment.
void write_judgments(const std::filesystem::path& path, const std::vector<RankingResult>& rankings,
                     const std::vector<PairwiseResult>& pairwise);

void to_json(nlohmann::json& j, const RankingResult& r);
void to_json(nlohmann::json& j, const PairwiseResult& r);
void to_json(nlohmann::json& j, const JudgeReport& r);
void from_json(const nlohmann::json& j, JudgeDemo& d);
void from_json(const nlohmann::json& j, JudgeItem& item);

}  // namespace pace
