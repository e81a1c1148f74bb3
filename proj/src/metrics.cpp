#include "pace/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "http_client.hpp"
#include "pace/errors.hpp"
#include "pace/util.hpp"

namespace pace {

using nlohmann::json;

namespace {

constexpr double kZeroPrecision = 1e-9;

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const Tokens& tokens, int n) {
  NgramCounts counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

std::size_t total(const NgramCounts& c) {
  std::size_t n = 0;
  for (const auto& [_, k] : c) n += k;
  return n;
}

std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t n = 0;
  for (const auto& [gram, k] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) n += std::min(k, it->second);
  }
  return n;
}

void require_nonempty(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty()) throw EmptyInput("candidate has no tokens");
  if (reference.empty()) throw EmptyInput("reference has no tokens");
}

double combine(double precision, double recall, RougeMode mode) {
  if (mode == RougeMode::recall) return recall;
  if (precision + recall <= 0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void normalize(std::vector<double>& v) {
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0) || !std::isfinite(norm)) throw EmbedderError("embedder returned a zero or non-finite vector");
  for (double& x : v) x /= norm;
}

}  // namespace

Tokens tokenize(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (c < 128 && std::ispunct(c)) continue;
    cleaned.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  return split_whitespace(cleaned);
}

double bleu_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("bleu order must be in 1..4");
  require_nonempty(candidate, reference);
  double log_sum = 0;
  for (int k = 1; k <= n; ++k) {
    const auto cand = ngram_counts(candidate, k);
    const auto ref = ngram_counts(reference, k);
    const auto denom = total(cand);
    double p;
    if (denom == 0)
      p = ref.empty() ? 1.0 : 0.0;
    else
      p = static_cast<double>(clipped_overlap(cand, ref)) / static_cast<double>(denom);
    if (p == 0.0) p = kZeroPrecision;
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = std::min(1.0, std::exp(1.0 - r / c));
  return clamp01(bp * std::exp(log_sum / n));
}

double rouge_n(const Tokens& candidate, const Tokens& reference, int n, RougeMode mode) {
  if (n < 1 || n > 2) throw std::invalid_argument("rouge order must be 1 or 2");
  require_nonempty(candidate, reference);
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  const auto cand_total = total(cand), ref_total = total(ref);
  if (ref_total == 0 || cand_total == 0) return (ref_total == 0 && cand_total == 0) ? 1.0 : 0.0;
  const double overlap = static_cast<double>(clipped_overlap(cand, ref));
  return clamp01(combine(overlap / static_cast<double>(cand_total), overlap / static_cast<double>(ref_total), mode));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference, RougeMode mode) {
  require_nonempty(candidate, reference);
  const double l = static_cast<double>(lcs_length(candidate, reference));
  return clamp01(combine(l / static_cast<double>(candidate.size()), l / static_cast<double>(reference.size()), mode));
}

double meteor(const Tokens& candidate, const Tokens& reference, const MeteorParams& params) {
  require_nonempty(candidate, reference);
  std::vector<bool> used(reference.size(), false);
  // alignment[i] = reference index matched by candidate token i, or -1
  std::vector<long> alignment(candidate.size(), -1);
  std::size_t m = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && reference[j] == candidate[i]) {
        used[j] = true;
        alignment[i] = static_cast<long>(j);
        ++m;
        break;
      }
    }
  }
  if (m == 0) return 0.0;

  std::size_t chunks = 0;
  long prev_ref = -2;
  bool prev_matched = false;
  for (long j : alignment) {
    if (j < 0) {
      prev_matched = false;
      continue;
    }
    if (!prev_matched || j != prev_ref + 1) ++chunks;
    prev_matched = true;
    prev_ref = j;
  }

  const double md = static_cast<double>(m);
  const double p = md / static_cast<double>(candidate.size());
  const double r = md / static_cast<double>(reference.size());
  const double fmean = p * r / (params.alpha * p + (1 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(static_cast<double>(chunks) / md, params.beta);
  return clamp01(fmean * (1 - penalty));
}

// --- embedders ------------------------------------------------------------

std::vector<std::vector<double>> OneHotEmbedder::embed(const Tokens& tokens) {
  std::map<std::string, std::size_t> vocab;
  for (const auto& t : tokens) vocab.try_emplace(t, vocab.size());
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    std::vector<double> v(vocab.size(), 0.0);
    v[vocab.at(t)] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<std::vector<double>> HashingEmbedder::embed(const Tokens& tokens) {
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    std::vector<double> v(dimension_, 0.0);
    const std::string padded = "#" + t + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      const auto h = stable_hash(padded.substr(i, 3));
      v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    }
    // exact-token feature keeps identical tokens closer than anagrams
    const auto h = stable_hash("tok:" + t);
    v[h % dimension_] += 1.0;
    normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(HttpEmbedderConfig config) : config_(std::move(config)) {
  detail::split_base_url(config_.api_base);
}

std::vector<std::vector<double>> HttpEmbedder::embed(const Tokens& tokens) {
  if (tokens.empty()) return {};
  const auto base = detail::split_base_url(config_.api_base);
  auto client = detail::make_client(base, config_.api_key, config_.timeout_seconds);
  const json body{{"model", config_.model}, {"input", tokens}};
  auto res = client->Post(base.path + "/embeddings", body.dump(), "application/json");
  if (!res) throw EmbedderError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw EmbedderError("embedding request failed with HTTP " + std::to_string(res->status));
  std::vector<std::vector<double>> out(tokens.size());
  try {
    const auto parsed = json::parse(res->body);
    const auto& data = parsed.at("data");
    if (data.size() != tokens.size()) throw EmbedderError("embedding count does not match token count");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto index = data[i].value("index", i);
      if (index >= out.size()) throw EmbedderError("embedding index out of range");
      out[index] = data[i].at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw EmbedderError(std::string("malformed embedding response: ") + e.what());
  }
  for (auto& v : out) normalize(v);
  return out;
}

double embed_f1(const Tokens& candidate, const Tokens& reference, Embedder& embedder) {
  require_nonempty(candidate, reference);
  Tokens joined(candidate);
  joined.insert(joined.end(), reference.begin(), reference.end());
  auto vectors = embedder.embed(joined);
  if (vectors.size() != joined.size()) throw EmbedderError("embedder returned the wrong number of vectors");
  std::vector<std::vector<double>> c(std::make_move_iterator(vectors.begin()),
                                     std::make_move_iterator(vectors.begin() + static_cast<long>(candidate.size())));
  std::vector<std::vector<double>> r(std::make_move_iterator(vectors.begin() + static_cast<long>(candidate.size())),
                                     std::make_move_iterator(vectors.end()));
  const std::size_t dim = c.front().size();
  for (auto* side : {&c, &r})
    for (auto& v : *side) {
      if (v.size() != dim) throw DimensionMismatch("embedding dimensions differ");
      normalize(v);
    }

  std::vector<double> best_c(c.size(), 0.0), best_r(r.size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < r.size(); ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < dim; ++k) dot += c[i][k] * r[j][k];
      dot = std::max(dot, 0.0);
      best_c[i] = std::max(best_c[i], dot);
      best_r[j] = std::max(best_r[j], dot);
    }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double p = mean(best_c), rec = mean(best_r);
  if (p + rec <= 0) return 0.0;
  return clamp01(2 * p * rec / (p + rec));
}

// --- corpus ---------------------------------------------------------------

std::vector<double> MetricScores::values() const {
  return {bleu_1, bleu_2, bleu_3, bleu_4, meteor, rouge_1, rouge_2, rouge_l, embed_f1};
}

double MetricScores::average() const {
  const auto v = values();
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

namespace {

MetricScores score_tokens(const Tokens& c, const Tokens& r, const MetricConfig& config, Embedder& embedder) {
  MetricScores s;
  s.bleu_1 = bleu_n(c, r, 1);
  s.bleu_2 = bleu_n(c, r, 2);
  s.bleu_3 = bleu_n(c, r, 3);
  s.bleu_4 = bleu_n(c, r, 4);
  s.meteor = meteor(c, r, config.meteor);
  s.rouge_1 = rouge_n(c, r, 1, config.rouge_mode);
  s.rouge_2 = rouge_n(c, r, 2, config.rouge_mode);
  s.rouge_l = rouge_l(c, r, config.rouge_mode);
  s.embed_f1 = embed_f1(c, r, embedder);
  return s;
}

MetricSlice mean_slice(const std::vector<const MetricScores*>& items) {
  MetricSlice slice;
  slice.sample_count = items.size();
  if (items.empty()) return slice;
  std::vector<double> sums(9, 0.0);
  for (const auto* s : items) {
    const auto v = s->values();
    for (std::size_t k = 0; k < v.size(); ++k) sums[k] += v[k];
  }
  for (auto& x : sums) x /= static_cast<double>(items.size());
  auto& m = slice.scores;
  m.bleu_1 = sums[0], m.bleu_2 = sums[1], m.bleu_3 = sums[2], m.bleu_4 = sums[3];
  m.meteor = sums[4], m.rouge_1 = sums[5], m.rouge_2 = sums[6], m.rouge_l = sums[7], m.embed_f1 = sums[8];
  slice.average = m.average();
  return slice;
}

}  // namespace

MetricScores score_pair(const std::string& candidate, const std::string& reference, const MetricConfig& config) {
  OneHotEmbedder fallback;
  Embedder& embedder = config.embedder ? *config.embedder : fallback;
  return score_tokens(tokenize(candidate), tokenize(reference), config, embedder);
}

MetricReport evaluate_corpus(const std::vector<EvalUnit>& units, const MetricConfig& config) {
  if (units.empty()) throw EmptyInput("no evaluation units");
  OneHotEmbedder fallback;
  Embedder& embedder = config.embedder ? *config.embedder : fallback;

  MetricReport report;
  report.per_unit.resize(units.size());
  parallel_for(units.size(), config.parallelism, [&](std::size_t i) {
    const auto c = tokenize(units[i].candidate);
    const auto r = tokenize(units[i].reference);
    if (c.empty() || r.empty()) throw EmptyInput("unit " + units[i].id + " has an empty candidate or reference");
    report.per_unit[i] = score_tokens(c, r, config, embedder);
  });

  std::vector<const MetricScores*> all;
  std::map<std::string, std::vector<const MetricScores*>> groups;
  for (std::size_t i = 0; i < units.size(); ++i) {
    all.push_back(&report.per_unit[i]);
    if (!units[i].profile_id.empty()) groups[units[i].profile_id].push_back(&report.per_unit[i]);
  }
  report.overall = mean_slice(all);
  for (const auto& [id, items] : groups) report.by_persona[id] = mean_slice(items);
  return report;
}

std::string format_metric_table(const MetricReport& report) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-20s %6s %6s %6s %6s %7s %6s %6s %6s %9s %6s %7s\n", "Slice", "BL-1", "BL-2",
                "BL-3", "BL-4", "METEOR", "RG-1", "RG-2", "RG-L", "BERTScore", "Avg", "N");
  out << buf;
  auto row = [&](const std::string& label, const MetricSlice& s) {
    const auto v = s.scores.values();
    std::snprintf(buf, sizeof(buf), "%-20s %6.2f %6.2f %6.2f %6.2f %7.2f %6.2f %6.2f %6.2f %9.2f %6.2f %7zu\n",
                  label.substr(0, 20).c_str(), v[0] * 100, v[1] * 100, v[2] * 100, v[3] * 100, v[4] * 100,
                  v[5] * 100, v[6] * 100, v[7] * 100, v[8] * 100, s.average * 100, s.sample_count);
    out << buf;
  };
  row("all", report.overall);
  for (const auto& [id, slice] : report.by_persona) row(id, slice);
  return out.str();
}

std::vector<EvalUnit> teacher_forced_units(const Dataset& dataset, const PromptLibrary& prompts, Provider& model,
                                           const SamplingParams& sampling, std::size_t parallelism) {
  struct Job {
    const DialogueTranscript* transcript;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (const auto& t : dataset) {
    if (!t.strategy) continue;
    for (std::size_t i = 0; i < t.utterances.size(); ++i)
      if (t.utterances[i].role == Speaker::teacher) jobs.push_back({&t, i});
  }
  std::vector<EvalUnit> units(jobs.size());
  parallel_for(jobs.size(), parallelism, [&](std::size_t k) {
    const auto& t = *jobs[k].transcript;
    const auto idx = jobs[k].index;
    ChatRequest req;
    req.model_id = sampling.model_id;
    req.temperature = sampling.temperature;
    req.top_p = sampling.top_p;
    req.max_tokens = sampling.max_tokens;
    req.messages.push_back(
        {Role::system, prompts.render(template_ids::training_instruction,
                                      {{"question", t.problem.question},
                                       {"strategy", format_guidelines(t.strategy->guidelines)}})});
    for (std::size_t i = 0; i < idx; ++i)
      req.messages.push_back(
          {t.utterances[i].role == Speaker::teacher ? Role::assistant : Role::user, t.utterances[i].text});
    req.metadata = {{"stage", "eval"},
                    {"session_id", t.id},
                    {"problem_id", t.problem.id},
                    {"persona_id", t.profile_id},
                    {"turn", std::to_string(t.utterances[idx].turn_index)}};
    auto& u = units[k];
    u.id = t.id + "#" + std::to_string(idx);
    u.context.assign(t.utterances.begin(), t.utterances.begin() + static_cast<long>(idx));
    u.reference = t.utterances[idx].text;
    u.profile_id = t.profile_id;
    u.candidate = model.complete(req).content;
  });
  return units;
}

std::vector<EvalUnit> load_eval_units(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read evaluation units: " + path.string());
  std::vector<EvalUnit> out;
  std::string line;
  for (std::size_t index = 0; std::getline(in, line); ++index) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<EvalUnit>());
    } catch (const std::exception& e) {
      throw SchemaError(index, e.what());
    }
  }
  return out;
}

void save_eval_units(const std::filesystem::path& path, const std::vector<EvalUnit>& units) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write evaluation units: " + path.string());
  for (const auto& u : units) out << json(u).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void to_json(json& j, const MetricScores& s) {
  j = json{{"bleu_1", s.bleu_1}, {"bleu_2", s.bleu_2},   {"bleu_3", s.bleu_3},   {"bleu_4", s.bleu_4},
           {"meteor", s.meteor}, {"rouge_1", s.rouge_1}, {"rouge_2", s.rouge_2}, {"rouge_l", s.rouge_l},
           {"embed_f1", s.embed_f1}};
}

void to_json(json& j, const MetricSlice& s) {
  j = json(s.scores);
  j["average"] = s.average;
  j["sample_count"] = s.sample_count;
}

void to_json(json& j, const MetricReport& r) {
  j = json(r.overall);
  json slices = json::object();
  for (const auto& [id, s] : r.by_persona) slices[id] = s;
  j["by_persona"] = std::move(slices);
}

void to_json(json& j, const EvalUnit& u) {
  j = json{{"id", u.id}, {"context", u.context}, {"candidate", u.candidate}, {"reference", u.reference}};
  if (!u.profile_id.empty()) j["profile_id"] = u.profile_id;
}

void from_json(const json& j, EvalUnit& u) {
  u.id = j.value("id", std::string{});
  u.context = j.contains("context") ? j.at("context").get<std::vector<Utterance>>() : std::vector<Utterance>{};
  u.candidate = j.at("candidate").get<std::string>();
  u.reference = j.at("reference").get<std::string>();
  u.profile_id = j.value("profile_id", std::string{});
}

}  // namespace pace
