#include "pace/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

#include "pace/errors.hpp"
#include "pace/persona.hpp"
#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

const std::vector<Criterion>& all_criteria() {
  static const std::vector<Criterion> all{Criterion::coherence,   Criterion::relevance,   Criterion::personalization,
                                          Criterion::engagement,  Criterion::consistency, Criterion::inspiration};
  return all;
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::coherence: return "coherence";
    case Criterion::relevance: return "relevance";
    case Criterion::personalization: return "personalization";
    case Criterion::engagement: return "engagement";
    case Criterion::consistency: return "consistency";
    case Criterion::inspiration: return "inspiration";
  }
  return "coherence";
}

std::optional<Criterion> criterion_from(std::string_view s) {
  const auto lower = to_lower(trim(std::string(s)));
  for (auto c : all_criteria())
    if (lower == to_string(c)) return c;
  return std::nullopt;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::win: return "win";
    case Verdict::lose: return "lose";
    case Verdict::tie: return "tie";
  }
  return "tie";
}

std::optional<Verdict> verdict_from(std::string_view s) {
  if (s == "win") return Verdict::win;
  if (s == "lose") return Verdict::lose;
  if (s == "tie") return Verdict::tie;
  return std::nullopt;
}

std::string criterion_guidance(Criterion c) {
  switch (c) {
    case Criterion::coherence:
      return "Prefer the response that follows logically from the conversation and reads clearly without abrupt jumps.";
    case Criterion::relevance:
      return "Prefer the response that stays on the student's current step of the problem.";
    case Criterion::personalization:
      return "Prefer the response that adapts its explanation to this student's profile and way of learning.";
    case Criterion::engagement:
      return "Prefer the response more likely to keep this student interested and participating.";
    case Criterion::consistency:
      return "Prefer the response that keeps a steady persona and does not contradict earlier tutor turns.";
    case Criterion::inspiration:
      return "Prefer the response that leads the student to reason for themselves instead of handing over answers.";
  }
  return {};
}

std::string rank_template_id(Criterion c) { return "judge_rank_" + std::string(to_string(c)); }

// --- fixtures -------------------------------------------------------------

void from_json(const json& j, JudgeDemo& d) {
  d.context = j.at("context").get<std::string>();
  d.responses = j.at("responses").get<std::vector<std::string>>();
  d.ranking = j.at("ranking").get<std::string>();
}

std::vector<JudgeDemo> load_demos(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read judge demos: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(0, e.what());
  }
  if (!doc.is_array()) throw SchemaError(0, "judge demos must be a JSON array");
  std::vector<JudgeDemo> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      out.push_back(doc[i].get<JudgeDemo>());
    } catch (const json::exception& e) {
      throw SchemaError(i, e.what());
    }
  }
  return out;
}

std::string format_demos(const std::vector<JudgeDemo>& demos) {
  if (demos.empty()) return "(none)";
  std::ostringstream out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto& d = demos[i];
    out << "Example " << i + 1 << "\nConversation:\n" << d.context << "\n";
    for (std::size_t k = 0; k < d.responses.size(); ++k) out << "Model " << k + 1 << ": " << d.responses[k] << "\n";
    out << "Ranking: " << d.ranking << "\n";
    if (i + 1 < demos.size()) out << "\n";
  }
  return out.str();
}

void from_json(const json& j, JudgeItem& item) {
  item.id = j.at("id").get<std::string>();
  const auto& persona = j.at("persona");
  item.persona = persona.is_string() ? persona.get<std::string>() : describe_persona(persona.get<PersonaProfile>());
  const auto& context = j.at("context");
  if (context.is_string()) {
    item.context = context.get<std::string>();
  } else {
    std::ostringstream out;
    for (const auto& u : context.get<std::vector<Utterance>>())
      out << (u.role == Speaker::teacher ? "Teacher: " : "Student: ") << u.text << "\n";
    item.context = out.str();
  }
  item.responses = j.at("responses").get<std::map<std::string, std::string>>();
}

std::vector<JudgeItem> load_judge_items(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read judge items: " + path.string());
  std::vector<JudgeItem> out;
  std::string line;
  for (std::size_t index = 0; std::getline(in, line); ++index) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<JudgeItem>());
    } catch (const std::exception& e) {
      throw SchemaError(index, e.what());
    }
  }
  return out;
}

// --- parsing --------------------------------------------------------------

namespace {

// Model labels on one line: numbers after "model" when the word appears,
// otherwise every bare integer.
std::vector<int> extract_labels(const std::string& line) {
  const auto lower = to_lower(line);
  std::vector<int> out;
  auto read_number = [&](std::size_t pos, std::size_t& end) -> std::optional<int> {
    while (pos < lower.size() && (lower[pos] == ' ' || lower[pos] == '#' || lower[pos] == '_')) ++pos;
    std::size_t start = pos;
    while (pos < lower.size() && std::isdigit(static_cast<unsigned char>(lower[pos]))) ++pos;
    end = pos;
    if (pos == start || pos - start > 4) return std::nullopt;
    return std::stoi(lower.substr(start, pos - start));
  };
  if (lower.find("model") != std::string::npos) {
    for (auto pos = lower.find("model"); pos != std::string::npos; pos = lower.find("model", pos + 5)) {
      std::size_t end = 0;
      if (auto n = read_number(pos + 5, end)) out.push_back(*n);
    }
    return out;
  }
  for (std::size_t i = 0; i < lower.size();) {
    if (std::isdigit(static_cast<unsigned char>(lower[i]))) {
      std::size_t end = 0;
      if (auto n = read_number(i, end)) out.push_back(*n);
      i = std::max(end, i + 1);
    } else {
      ++i;
    }
  }
  return out;
}

bool is_permutation_of(const std::vector<int>& labels, std::size_t k) {
  if (labels.size() != k) return false;
  std::set<int> seen;
  for (int l : labels) {
    if (l < 1 || static_cast<std::size_t>(l) > k || !seen.insert(l).second) return false;
  }
  return true;
}

// "3. Model 2" -> {3, "Model 2"}
std::optional<std::pair<int, std::string>> numbered_item(const std::string& line) {
  const auto t = trim(line);
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  if (i == 0 || i > 3 || i >= t.size()) return std::nullopt;
  if (t[i] != '.' && t[i] != ')' && t[i] != ':') return std::nullopt;
  return std::make_pair(std::stoi(t.substr(0, i)), t.substr(i + 1));
}

bool has_word(const std::string& lower, std::string_view word) {
  for (auto pos = lower.find(word); pos != std::string::npos; pos = lower.find(word, pos + 1)) {
    const bool left = pos == 0 || !std::isalpha(static_cast<unsigned char>(lower[pos - 1]));
    const auto after = pos + word.size();
    const bool right = after >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[after]));
    if (left && right) return true;
  }
  return false;
}

}  // namespace

std::optional<std::vector<int>> parse_ranking(std::string_view text, std::size_t k) {
  if (k == 0) return std::nullopt;
  const auto lines = split_lines(text);

  // Numbered list: consecutive "1. Model a", "2. Model b", ... lines.
  std::optional<std::vector<int>> numbered;
  std::vector<int> run;
  for (const auto& line : lines) {
    auto item = numbered_item(line);
    if (!item) {
      if (!trim(line).empty()) run.clear();
      continue;
    }
    if (item->first == 1) run.clear();
    if (item->first != static_cast<int>(run.size()) + 1) {
      run.clear();
      continue;
    }
    const auto labels = extract_labels(item->second);
    if (labels.size() != 1) {
      run.clear();
      continue;
    }
    run.push_back(labels.front());
    if (run.size() == k && is_permutation_of(run, k)) numbered = run;
  }
  if (numbered) return numbered;

  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    auto labels = extract_labels(*it);
    if (!is_permutation_of(labels, k)) continue;
    const bool descending = it->find('>') != std::string::npos && it->find('<') == std::string::npos;
    if (descending) std::reverse(labels.begin(), labels.end());
    return labels;
  }
  return std::nullopt;
}

std::optional<int> parse_pairwise(std::string_view text) {
  const auto lines = split_lines(text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    auto lower = to_lower(trim(*it));
    while (!lower.empty() && (std::ispunct(static_cast<unsigned char>(lower.back())) || lower.back() == ' '))
      lower.pop_back();
    while (!lower.empty() && std::ispunct(static_cast<unsigned char>(lower.front()))) lower.erase(0, 1);
    if (lower.empty()) continue;
    const bool one = has_word(lower, "response 1") || lower == "1";
    const bool two = has_word(lower, "response 2") || lower == "2";
    const bool tie = has_word(lower, "tie");
    if (one + two + tie == 1) return one ? 1 : (two ? 2 : 0);
  }
  return std::nullopt;
}

// --- judging --------------------------------------------------------------

namespace {

ChatRequest judge_request(const std::string& prompt, const JudgeOptions& options,
                          std::map<std::string, std::string> metadata) {
  ChatRequest req;
  req.model_id = options.sampling.model_id;
  req.temperature = options.sampling.temperature;
  req.top_p = options.sampling.top_p;
  req.max_tokens = options.sampling.max_tokens;
  req.messages.push_back({Role::user, prompt});
  req.metadata = std::move(metadata);
  return req;
}

// Sends the request, re-prompting with the format reminder until `parse`
// accepts the reply. Returns the accepted reply and the attempt count.
template <class Parsed>
std::pair<std::string, int> ask_until_parsed(Provider& judge, ChatRequest req, const PromptLibrary& prompts,
                                             const std::string& expected, int max_requeries,
                                             const std::function<std::optional<Parsed>(const std::string&)>& parse,
                                             Parsed& parsed) {
  std::string last;
  for (int attempt = 0; attempt <= max_requeries; ++attempt) {
    req.metadata["attempt"] = std::to_string(attempt);
    last = judge.complete(req).content;
    if (auto p = parse(last)) {
      parsed = *p;
      return {last, attempt + 1};
    }
    req.messages.push_back({Role::assistant, last});
    req.messages.push_back({Role::user, prompts.render(template_ids::judge_format_reminder, {{"expected", expected}})});
  }
  throw JudgeParseFailed("judge reply not parseable after " + std::to_string(max_requeries + 1) +
                         " attempts; last reply: " + last.substr(0, 200));
}

}  // namespace

RankingResult rank_responses(const JudgeItem& item, Criterion criterion, Provider& judge, const PromptLibrary& prompts,
                             const std::vector<JudgeDemo>& demos, const JudgeOptions& options) {
  const std::size_t k = item.responses.size();
  if (k < 2) throw std::invalid_argument("ranking needs at least two models");

  std::vector<std::string> ids;
  for (const auto& [id, _] : item.responses) ids.push_back(id);
  RankingResult result;
  result.context_id = item.id;
  result.criterion = criterion;
  result.presentation = ids;
  if (options.shuffle) {
    const auto perm =
        seeded_permutation(k, options.seed ^ stable_hash(item.id + "|" + std::string(to_string(criterion))));
    for (std::size_t i = 0; i < k; ++i) result.presentation[i] = ids[perm[i]];
  }

  std::ostringstream shown;
  for (std::size_t i = 0; i < k; ++i) {
    if (i) shown << "\n\n";
    shown << "Model " << i + 1 << ":\n" << item.responses.at(result.presentation[i]);
  }
  std::string expected;
  for (std::size_t i = 0; i < k; ++i) expected += (i ? " < Model " : "Model ") + std::to_string(i + 1);

  const auto prompt = prompts.render(rank_template_id(criterion), {{"persona", item.persona},
                                                                   {"context", item.context},
                                                                   {"demos", format_demos(demos)},
                                                                   {"responses", shown.str()}});
  auto req = judge_request(prompt, options,
                           {{"stage", "judge_rank"}, {"context_id", item.id}, {"criterion", std::string(to_string(criterion))}});
  std::vector<int> labels;
  std::function<std::optional<std::vector<int>>(const std::string&)> parse = [k](const std::string& text) {
    return parse_ranking(text, k);
  };
  std::tie(result.raw_judge_text, result.attempts) =
      ask_until_parsed(judge, std::move(req), prompts, expected, options.max_requeries, parse, labels);
  for (int label : labels) result.ranking.push_back(result.presentation[static_cast<std::size_t>(label - 1)]);
  return result;
}

Verdict combine_verdicts(const std::vector<Verdict>& verdicts) {
  if (verdicts.empty()) return Verdict::tie;
  for (auto v : verdicts)
    if (v != verdicts.front()) return Verdict::tie;
  return verdicts.front();
}

PairwiseResult pairwise_compare(const std::string& context_id, const std::string& persona, const std::string& context,
                                const std::pair<std::string, std::string>& a,
                                const std::pair<std::string, std::string>& b, Criterion criterion, Provider& judge,
                                const PromptLibrary& prompts, bool debias, const JudgeOptions& options) {
  if (trim(a.second).empty() || trim(b.second).empty())
    throw std::invalid_argument("pairwise comparison needs two nonempty responses");
  PairwiseResult result;
  result.context_id = context_id;
  result.criterion = criterion;
  result.model_a = a.first;
  result.model_b = b.first;

  std::function<std::optional<int>(const std::string&)> parse = [](const std::string& t) { return parse_pairwise(t); };
  for (bool swapped : debias ? std::vector<bool>{false, true} : std::vector<bool>{false}) {
    const auto& first = swapped ? b.second : a.second;
    const auto& second = swapped ? a.second : b.second;
    const auto prompt = prompts.render(template_ids::judge_pairwise, {{"persona", persona},
                                                                      {"context", context},
                                                                      {"response_1", first},
                                                                      {"response_2", second},
                                                                      {"criterion", std::string(to_string(criterion))},
                                                                      {"guidance", criterion_guidance(criterion)}});
    auto req = judge_request(prompt, options,
                             {{"stage", "judge_pairwise"},
                              {"context_id", context_id},
                              {"criterion", std::string(to_string(criterion))},
                              {"swapped", swapped ? "true" : "false"}});
    int choice = 0;
    auto [raw, attempts] = ask_until_parsed(judge, std::move(req), prompts,
                                            "\"Response 1\", \"Response 2\", or \"Tie\"", options.max_requeries,
                                            parse, choice);
    Verdict v = Verdict::tie;
    if (choice == 1) v = swapped ? Verdict::lose : Verdict::win;
    if (choice == 2) v = swapped ? Verdict::win : Verdict::lose;
    result.verdicts.push_back(v);
    result.position_swapped.push_back(swapped);
    result.raw_judge_texts.push_back(raw);
  }
  result.outcome = combine_verdicts(result.verdicts);
  return result;
}

namespace {

template <class Result, class Job, class Fn>
JudgeBatch<Result> run_jobs(const std::vector<Job>& jobs, std::size_t parallelism, Fn fn) {
  std::vector<std::optional<Result>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), parallelism, [&](std::size_t i) {
    try {
      slots[i] = fn(jobs[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "judge failed";
    }
  });
  JudgeBatch<Result> out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i])
      out.results.push_back(std::move(*slots[i]));
    else
      out.failures.emplace_back(i, errors[i]);
  }
  return out;
}

}  // namespace

JudgeBatch<RankingResult> run_rankings(const std::vector<RankingJob>& jobs, Provider& judge,
                                       const PromptLibrary& prompts, const std::vector<JudgeDemo>& demos,
                                       const JudgeOptions& options, std::size_t parallelism) {
  return run_jobs<RankingResult>(jobs, parallelism, [&](const RankingJob& job) {
    return rank_responses(*job.item, job.criterion, judge, prompts, demos, options);
  });
}

JudgeBatch<PairwiseResult> run_pairwise(const std::vector<PairwiseJob>& jobs, Provider& judge,
                                        const PromptLibrary& prompts, bool debias, const JudgeOptions& options,
                                        std::size_t parallelism) {
  return run_jobs<PairwiseResult>(jobs, parallelism, [&](const PairwiseJob& job) {
    const auto& r = job.item->responses;
    auto a = r.find(job.model_a), b = r.find(job.model_b);
    if (a == r.end() || b == r.end())
      throw std::invalid_argument("item " + job.item->id + " lacks a response from " +
                                  (a == r.end() ? job.model_a : job.model_b));
    return pairwise_compare(job.item->id, job.item->persona, job.item->context, *a, *b, job.criterion, judge, prompts,
                            debias, options);
  });
}

// --- aggregation ----------------------------------------------------------

namespace {
double pct(std::size_t part, std::size_t whole) {
  return whole ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0;
}
}  // namespace

double PairwiseTally::win_pct() const { return pct(win, total()); }
double PairwiseTally::lose_pct() const { return pct(lose, total()); }
double PairwiseTally::tie_pct() const { return pct(tie, total()); }

JudgeReport aggregate(const std::vector<RankingResult>& rankings, const std::vector<PairwiseResult>& pairwise) {
  if (rankings.empty() && pairwise.empty()) throw EmptyInput("no judgments to aggregate");
  JudgeReport report;
  std::map<Criterion, std::map<std::string, std::pair<double, std::size_t>>> sums;
  for (const auto& r : rankings) {
    ++report.ranking_counts[r.criterion];
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
      auto& cell = sums[r.criterion][r.ranking[i]];
      cell.first += static_cast<double>(i + 1);
      ++cell.second;
    }
  }
  for (const auto& [c, models] : sums)
    for (const auto& [model, cell] : models) report.mean_rank[c][model] = cell.first / static_cast<double>(cell.second);

  std::map<std::tuple<Criterion, std::string, std::string>, PairwiseTally> tallies;
  for (const auto& p : pairwise) {
    auto& t = tallies[{p.criterion, p.model_a, p.model_b}];
    t.criterion = p.criterion;
    t.model_a = p.model_a;
    t.model_b = p.model_b;
    if (p.outcome == Verdict::win) ++t.win;
    if (p.outcome == Verdict::lose) ++t.lose;
    if (p.outcome == Verdict::tie) ++t.tie;
  }
  for (auto& [_, t] : tallies) report.pairwise.push_back(t);
  return report;
}

std::string format_judge_report(const JudgeReport& report) {
  std::ostringstream out;
  char buf[256];
  if (!report.mean_rank.empty()) {
    std::set<std::string> models;
    for (const auto& [_, m] : report.mean_rank)
      for (const auto& [id, __] : m) models.insert(id);
    out << "Mean rank (1 = lowest)\n";
    std::snprintf(buf, sizeof(buf), "%-16s", "Criterion");
    out << buf;
    for (const auto& m : models) {
      std::snprintf(buf, sizeof(buf), " %14s", m.substr(0, 14).c_str());
      out << buf;
    }
    out << "\n";
    for (const auto& [c, ranks] : report.mean_rank) {
      std::snprintf(buf, sizeof(buf), "%-16s", std::string(to_string(c)).c_str());
      out << buf;
      for (const auto& m : models) {
        auto it = ranks.find(m);
        if (it == ranks.end())
          std::snprintf(buf, sizeof(buf), " %14s", "-");
        else
          std::snprintf(buf, sizeof(buf), " %14.3f", it->second);
        out << buf;
      }
      out << "\n";
    }
  }
  if (!report.pairwise.empty()) {
    if (!report.mean_rank.empty()) out << "\n";
    std::snprintf(buf, sizeof(buf), "%-16s %-30s %7s %7s %7s %5s\n", "Criterion", "Pairing", "Win%", "Lose%", "Tie%",
                  "N");
    out << buf;
    for (const auto& t : report.pairwise) {
      const auto pairing = t.model_a + " vs " + t.model_b;
      std::snprintf(buf, sizeof(buf), "%-16s %-30s %7.1f %7.1f %7.1f %5zu\n", std::string(to_string(t.criterion)).c_str(),
                    pairing.substr(0, 30).c_str(), t.win_pct(), t.lose_pct(), t.tie_pct(), t.total());
      out << buf;
    }
  }
  return out.str();
}

void to_json(json& j, const RankingResult& r) {
  j = json{{"kind", "ranking"},
           {"context_id", r.context_id},
           {"criterion", to_string(r.criterion)},
           {"ranking", r.ranking},
           {"presentation", r.presentation},
           {"raw_judge_text", r.raw_judge_text},
           {"attempts", r.attempts}};
}

void to_json(json& j, const PairwiseResult& r) {
  json verdicts = json::array();
  for (auto v : r.verdicts) verdicts.push_back(to_string(v));
  j = json{{"kind", "pairwise"},
           {"context_id", r.context_id},
           {"criterion", to_string(r.criterion)},
           {"model_a", r.model_a},
           {"model_b", r.model_b},
           {"verdicts", std::move(verdicts)},
           {"position_swapped", r.position_swapped},
           {"raw_judge_texts", r.raw_judge_texts},
           {"outcome", to_string(r.outcome)}};
}

void to_json(json& j, const JudgeReport& r) {
  json ranks = json::object();
  for (const auto& [c, models] : r.mean_rank) {
    ranks[std::string(to_string(c))] = models;
  }
  json counts = json::object();
  for (const auto& [c, n] : r.ranking_counts) counts[std::string(to_string(c))] = n;
  json pairs = json::array();
  for (const auto& t : r.pairwise)
    pairs.push_back({{"criterion", to_string(t.criterion)},
                     {"model_a", t.model_a},
                     {"model_b", t.model_b},
                     {"win", t.win},
                     {"lose", t.lose},
                     {"tie", t.tie},
                     {"win_pct", t.win_pct()},
                     {"lose_pct", t.lose_pct()},
                     {"tie_pct", t.tie_pct()}});
  j = json{{"mean_rank", std::move(ranks)}, {"ranking_counts", std::move(counts)}, {"pairwise", std::move(pairs)}};
}

void write_judgments(const std::filesystem::path& path, const std::vector<RankingResult>& rankings,
                     const std::vector<PairwiseResult>& pairwise) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write judgments: " + path.string());
  for (const auto& r : rankings) out << json(r).dump() << '\n';
  for (const auto& p : pairwise) out << json(p).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace pace
