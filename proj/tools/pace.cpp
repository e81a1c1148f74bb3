// pace: command-line entry point for synthesis, dataset handling, evaluation,
// and the tutoring service.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pace/config.hpp"
#include "pace/dataset.hpp"
#include "pace/errors.hpp"
#include "pace/judge.hpp"
#include "pace/llm.hpp"
#include "pace/metrics.hpp"
#include "pace/persona.hpp"
#include "pace/prompts.hpp"
#include "pace/service.hpp"
#include "pace/synthesis.hpp"
#include "pace/tutoring.hpp"
#include "pace/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// String flag that remembers whether it was given on the command line.
struct Flag {
  std::string value;
  CLI::Option* opt = nullptr;

  std::optional<std::string> get() const {
    if (opt && opt->count() > 0) return value;
    return std::nullopt;
  }
};

Flag& add(CLI::App* app, Flag& f, const std::string& name, const std::string& help) {
  f.opt = app->add_option(name, f.value, help);
  return f;
}

struct Common {
  Flag config, provider, api_base, api_key, model, templates, seed, parallelism, rpm;
};

// Shared flags. Provider-related ones only where a provider is used.
void add_common(CLI::App* sub, Common& c, bool provider, bool seeded, bool parallel) {
  add(sub, c.config, "--config", "TOML-style key = value settings file");
  add(sub, c.templates, "--templates", "Prompt template directory (env PACE_TEMPLATES)");
  if (provider) {
    add(sub, c.provider, "--provider", "scripted:<script.json> or openai (env PACE_PROVIDER)");
    add(sub, c.api_base, "--api-base", "OpenAI-compatible base URL (env PACE_API_BASE)");
    add(sub, c.api_key, "--api-key", "API key (env PACE_API_KEY)");
    add(sub, c.model, "--model", "Model name (env PACE_MODEL)");
    add(sub, c.rpm, "--rpm", "Client-side request rate limit per minute, 0 = none");
  }
  if (seeded) add(sub, c.seed, "--seed", "Random seed (default 0)");
  if (parallel) add(sub, c.parallelism, "--parallelism", "Concurrent workers (default 4)");
}

struct Context {
  pace::Settings settings;
  const Common* common = nullptr;

  std::string get(const Flag& f, const char* env, const std::string& key, const std::string& fallback) const {
    return settings.get(f.get(), env, key, fallback);
  }
  long long get_int(const Flag& f, const char* env, const std::string& key, long long fallback) const {
    return settings.get_int(f.get(), env, key, fallback);
  }
  std::string require(const Flag& f, const std::string& key, const std::string& flag_name) const {
    auto v = settings.lookup(f.get(), nullptr, key);
    if (!v || v->empty()) throw UsageError(flag_name + " is required (or set '" + key + "' in the config file)");
    return *v;
  }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int(common->seed, "PACE_SEED", "seed", 0)); }
  std::size_t parallelism() const {
    const auto n = get_int(common->parallelism, nullptr, "parallelism", 4);
    if (n < 1) throw UsageError("--parallelism must be at least 1");
    return static_cast<std::size_t>(n);
  }

  pace::PromptLibrary prompts() const {
    if (auto dir = settings.lookup(common->templates.get(), "PACE_TEMPLATES", "templates"))
      return pace::PromptLibrary::load_directory(*dir);
    return pace::PromptLibrary::load_default();
  }

  std::shared_ptr<pace::Provider> provider() const {
    auto spec = settings.lookup(common->provider.get(), "PACE_PROVIDER", "provider");
    if (!spec) throw UsageError("--provider is required (scripted:<file> or openai)");
    return make_provider(*spec);
  }

  std::shared_ptr<pace::Provider> make_provider(const std::string& spec) const {
    std::shared_ptr<pace::Provider> p;
    if (spec.rfind("scripted:", 0) == 0) {
      p = pace::ScriptedProvider::from_file(spec.substr(9));
    } else if (spec == "openai") {
      pace::HttpProviderConfig cfg;
      cfg.api_base = get(common->api_base, "PACE_API_BASE", "api_base", cfg.api_base);
      cfg.api_key = get(common->api_key, "PACE_API_KEY", "api_key", "");
      cfg.model = get(common->model, "PACE_MODEL", "model", cfg.model);
      cfg.timeout_seconds = static_cast<int>(settings.get_int(std::nullopt, nullptr, "timeout_seconds", 120));
      p = std::make_shared<pace::HttpProvider>(cfg);
      const auto rpm = get_int(common->rpm, nullptr, "rpm", 0);
      if (rpm > 0)
        p->set_rate_limiter(std::make_shared<pace::RateLimiter>(static_cast<double>(rpm), 1.0, pace::system_clock()));
    } else {
      throw UsageError("unknown provider '" + spec + "', expected scripted:<file> or openai");
    }
    p->set_jitter_seed(seed());
    return p;
  }
};

Context make_context(const Common& c) {
  Context ctx;
  ctx.common = &c;
  if (auto path = c.config.get()) {
    ctx.settings = pace::Settings(pace::load_config(*path));
  } else if (const char* env = std::getenv("PACE_CONFIG"); env && *env) {
    ctx.settings = pace::Settings(pace::load_config(env));
  }
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pace::IoError("cannot write " + path.string());
  out << text;
}

std::vector<pace::Criterion> parse_criteria(const std::string& list) {
  if (list.empty() || list == "all") return pace::all_criteria();
  std::vector<pace::Criterion> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto c = pace::criterion_from(item);
    if (!c) throw UsageError("unknown criterion '" + item + "'");
    out.push_back(*c);
  }
  return out;
}

const pace::PersonaProfile& find_persona(const std::vector<pace::PersonaProfile>& all, const std::string& id) {
  for (const auto& p : all)
    if (p.id == id) return p;
  throw UsageError("unknown persona '" + id + "'");
}

const pace::Problem& find_problem(const std::vector<pace::Problem>& all, const std::string& id) {
  for (const auto& p : all)
    if (p.id == id) return p;
  throw UsageError("unknown problem '" + id + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized Socratic tutoring: dialogue synthesis, datasets, evaluation, and serving"};
  app.set_help_all_flag("--help-all", "Print help for every subcommand");
  app.require_subcommand(1);

  std::function<int()> action;

  // synthesize
  Common syn_c;
  Flag syn_problems, syn_personas, syn_out, syn_student, syn_max_turns, syn_limit, syn_failures;
  bool syn_judge = false;
  auto* syn = app.add_subcommand("synthesize", "Generate teacher-student dialogues for a problem set");
  add_common(syn, syn_c, true, true, true);
  add(syn, syn_problems, "--problems", "GSM8K-format JSONL problem file");
  add(syn, syn_personas, "--personas", "Persona profiles JSON file");
  add(syn, syn_out, "--out", "Output dataset JSONL");
  add(syn, syn_student, "--student-provider", "Provider for the student agent (default: --provider)");
  add(syn, syn_max_turns, "--max-turns", "Turn cap per dialogue (default 10)");
  add(syn, syn_limit, "--limit", "Use only the first N problems");
  add(syn, syn_failures, "--failures", "Write failed partial transcripts to this JSONL file");
  syn->add_flag("--judge-resolution", syn_judge, "Use the resolution judge instead of answer matching");
  syn->callback([&] {
    action = [&] {
      const auto ctx = make_context(syn_c);
      const auto prompts = ctx.prompts();
      auto problems = pace::load_gsm8k(ctx.require(syn_problems, "problems", "--problems"));
      const auto personas = pace::load_profiles(ctx.require(syn_personas, "personas", "--personas"));
      const auto out = ctx.require(syn_out, "out", "--out");
      if (auto limit = ctx.get_int(syn_limit, nullptr, "limit", 0); limit > 0 && static_cast<std::size_t>(limit) < problems.size())
        problems.resize(static_cast<std::size_t>(limit));
      auto teacher = ctx.provider();
      const auto student_spec = ctx.settings.lookup(syn_student.get(), nullptr, "student_provider");
      auto student = student_spec ? ctx.make_provider(*student_spec) : teacher;
      pace::TutorOptions opts;
      opts.resolution_judge = teacher.get();
      pace::Tutor tutor(prompts, opts);
      pace::SynthesisConfig cfg;
      cfg.session.max_turns = static_cast<int>(ctx.get_int(syn_max_turns, nullptr, "max_turns", 10));
      cfg.session.judge_resolution = syn_judge;
      cfg.teacher_model = teacher->name();
      cfg.student_model = student->name();
      const auto result = pace::run_batch(tutor, problems, personas, *teacher, *student, ctx.parallelism(), ctx.seed(), cfg);
      pace::save_dataset(out, result.transcripts);
      if (auto f = syn_failures.get()) {
        pace::Dataset partials;
        for (const auto& fail : result.failures)
          if (fail.partial) partials.push_back(*fail.partial);
        pace::save_dataset(*f, partials);
      }
      for (const auto& fail : result.failures)
        std::cerr << "failed " << fail.problem_id << " / " << fail.profile_id << ": " << fail.message << "\n";
      std::cout << "synthesized " << result.transcripts.size() << " dialogues, " << result.failures.size()
                << " failures -> " << out << "\n";
      return 0;
    };
  });

  // filter
  Common fil_c;
  Flag fil_dataset, fil_out, fil_min, fil_report;
  bool fil_keep_unresolved = false;
  auto* fil = app.add_subcommand("filter", "Keep resolved dialogues longer than the turn threshold");
  add_common(fil, fil_c, false, false, false);
  add(fil, fil_dataset, "--dataset", "Input dataset JSONL");
  add(fil, fil_out, "--out", "Filtered dataset JSONL");
  add(fil, fil_min, "--min-turns", "Keep dialogues with more turns than this (default 5)");
  add(fil, fil_report, "--report", "Write the filter report JSON here");
  fil->add_flag("--keep-unresolved", fil_keep_unresolved, "Do not require a resolved ending");
  fil->callback([&] {
    action = [&] {
      const auto ctx = make_context(fil_c);
      const auto data = pace::load_dataset(ctx.require(fil_dataset, "dataset", "--dataset"));
      pace::FilterRules rules;
      rules.min_turns_exclusive = static_cast<int>(ctx.get_int(fil_min, nullptr, "min_turns", 5));
      rules.require_resolved = !fil_keep_unresolved;
      const auto [kept, report] = pace::filter_transcripts(data, rules);
      pace::save_dataset(ctx.require(fil_out, "out", "--out"), kept);
      const auto j = json(report).dump(2);
      if (auto r = fil_report.get()) write_text(*r, j + "\n");
      std::cout << j << "\n";
      return 0;
    };
  });

  // stats
  Common st_c;
  Flag st_dataset, st_out;
  bool st_json = false;
  auto* st = app.add_subcommand("stats", "Dataset summary: dialogues, turns, words per utterance");
  add_common(st, st_c, false, false, false);
  add(st, st_dataset, "--dataset", "Dataset JSONL");
  add(st, st_out, "--out", "Also write the summary JSON here");
  st->add_flag("--json", st_json, "Print JSON instead of the table");
  st->callback([&] {
    action = [&] {
      const auto ctx = make_context(st_c);
      const auto stats = pace::compute_stats(pace::load_dataset(ctx.require(st_dataset, "dataset", "--dataset")));
      if (auto o = st_out.get()) write_text(*o, json(stats).dump(2) + "\n");
      std::cout << (st_json ? json(stats).dump(2) + "\n" : pace::format_stats_table(stats));
      return 0;
    };
  });

  // split
  Common sp_c;
  Flag sp_dataset, sp_counts, sp_out;
  auto* sp = app.add_subcommand("split", "Seeded train/valid/test split");
  add_common(sp, sp_c, false, true, false);
  add(sp, sp_dataset, "--dataset", "Dataset JSONL");
  add(sp, sp_counts, "--counts", "train,valid,test record counts, e.g. 1200,60,150");
  add(sp, sp_out, "--out", "Output directory for train.jsonl, valid.jsonl, test.jsonl");
  sp->callback([&] {
    action = [&] {
      const auto ctx = make_context(sp_c);
      pace::SplitCounts counts;
      try {
        counts = pace::parse_split_counts(ctx.require(sp_counts, "counts", "--counts"));
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--counts: ") + e.what());
      }
      const auto data = pace::load_dataset(ctx.require(sp_dataset, "dataset", "--dataset"));
      const fs::path dir = ctx.require(sp_out, "out", "--out");
      fs::create_directories(dir);
      const auto parts = pace::split_dataset(data, counts, ctx.seed());
      pace::save_dataset(dir / "train.jsonl", parts.train);
      pace::save_dataset(dir / "valid.jsonl", parts.valid);
      pace::save_dataset(dir / "test.jsonl", parts.test);
      std::cout << "train " << parts.train.size() << ", valid " << parts.valid.size() << ", test "
                << parts.test.size() << " -> " << dir.string() << "\n";
      return 0;
    };
  });

  // export-train
  Common ex_c;
  Flag ex_dataset, ex_out;
  auto* ex = app.add_subcommand("export-train", "Write instruction-tuning records with teacher-only loss flags");
  add_common(ex, ex_c, false, false, false);
  add(ex, ex_dataset, "--dataset", "Dataset JSONL");
  add(ex, ex_out, "--out", "Training JSONL");
  ex->callback([&] {
    action = [&] {
      const auto ctx = make_context(ex_c);
      const auto data = pace::load_dataset(ctx.require(ex_dataset, "dataset", "--dataset"));
      const auto out = ctx.require(ex_out, "out", "--out");
      const auto n = pace::export_training(data, out, ctx.prompts());
      std::cout << "exported " << n << " examples -> " << out << "\n";
      return 0;
    };
  });

  // eval-ref
  Common er_c;
  Flag er_units, er_dataset, er_rouge, er_embedder, er_embed_model, er_out, er_units_out;
  bool er_json = false;
  auto* er = app.add_subcommand("eval-ref", "Reference metrics (BLEU, METEOR, ROUGE, embedding F1)");
  add_common(er, er_c, true, true, true);
  add(er, er_units, "--units", "JSONL of {id, candidate, reference, profile_id?} units");
  add(er, er_dataset, "--dataset", "Dataset JSONL; candidates generated by --provider with teacher forcing");
  add(er, er_rouge, "--rouge", "recall (default) or f1");
  add(er, er_embedder, "--embedder", "onehot (default), hashing, or openai");
  add(er, er_embed_model, "--embedding-model", "Embedding model for --embedder openai");
  add(er, er_out, "--out", "Write the metric report JSON here");
  add(er, er_units_out, "--units-out", "Save generated units (with --dataset)");
  er->add_flag("--json", er_json, "Print JSON instead of the table");
  er->callback([&] {
    action = [&] {
      const auto ctx = make_context(er_c);
      pace::MetricConfig cfg;
      const auto rouge = ctx.get(er_rouge, nullptr, "rouge", "recall");
      if (rouge == "recall") cfg.rouge_mode = pace::RougeMode::recall;
      else if (rouge == "f1") cfg.rouge_mode = pace::RougeMode::f1;
      else throw UsageError("--rouge must be recall or f1");

      std::unique_ptr<pace::Embedder> embedder;
      const auto kind = ctx.get(er_embedder, nullptr, "embedder", "onehot");
      if (kind == "onehot") {
        embedder = std::make_unique<pace::OneHotEmbedder>();
      } else if (kind == "hashing") {
        embedder = std::make_unique<pace::HashingEmbedder>();
      } else if (kind == "openai") {
        pace::HttpEmbedderConfig ec;
        ec.api_base = ctx.get(er_c.api_base, "PACE_API_BASE", "api_base", ec.api_base);
        ec.api_key = ctx.get(er_c.api_key, "PACE_API_KEY", "api_key", "");
        ec.model = ctx.get(er_embed_model, nullptr, "embedding_model", ec.model);
        embedder = std::make_unique<pace::HttpEmbedder>(ec);
      } else {
        throw UsageError("--embedder must be onehot, hashing, or openai");
      }
      cfg.embedder = embedder.get();
      cfg.parallelism = ctx.parallelism();

      std::vector<pace::EvalUnit> units;
      if (auto u = er_units.get()) {
        if (er_dataset.get()) throw UsageError("use either --units or --dataset");
        units = pace::load_eval_units(*u);
      } else if (auto d = er_dataset.get()) {
        auto model = ctx.provider();
        pace::SamplingParams sampling;
        units = pace::teacher_forced_units(pace::load_dataset(*d), ctx.prompts(), *model, sampling, ctx.parallelism());
        if (auto uo = er_units_out.get()) pace::save_eval_units(*uo, units);
      } else {
        throw UsageError("one of --units or --dataset is required");
      }
      const auto report = pace::evaluate_corpus(units, cfg);
      if (auto o = er_out.get()) write_text(*o, json(report).dump(2) + "\n");
      std::cout << (er_json ? json(report).dump(2) + "\n" : pace::format_metric_table(report));
      return 0;
    };
  });

  // eval-judge
  Common ej_c;
  Flag ej_items, ej_demos, ej_criteria, ej_out, ej_judgments;
  bool ej_no_shuffle = false;
  auto* ej = app.add_subcommand("eval-judge", "Rank model responses with an LLM judge per criterion");
  add_common(ej, ej_c, true, true, true);
  add(ej, ej_items, "--items", "JSONL of {id, persona, context, responses: {model: text}}");
  add(ej, ej_demos, "--demos", "Ranking demonstrations JSON");
  add(ej, ej_criteria, "--criteria", "Comma-separated criteria (default all six)");
  add(ej, ej_out, "--out", "Write the summary JSON here");
  add(ej, ej_judgments, "--judgments", "Write one JSONL record per judgment here");
  ej->add_flag("--no-shuffle", ej_no_shuffle, "Present models in id order instead of a seeded shuffle");
  ej->callback([&] {
    action = [&] {
      const auto ctx = make_context(ej_c);
      const auto items = pace::load_judge_items(ctx.require(ej_items, "items", "--items"));
      const auto demo_path = ctx.settings.lookup(ej_demos.get(), nullptr, "demos");
      const auto demos = demo_path ? pace::load_demos(*demo_path) : std::vector<pace::JudgeDemo>{};
      const auto criteria = parse_criteria(ctx.get(ej_criteria, nullptr, "criteria", "all"));
      auto judge = ctx.provider();
      pace::JudgeOptions opts;
      opts.shuffle = !ej_no_shuffle;
      opts.seed = ctx.seed();
      std::vector<pace::RankingJob> jobs;
      for (const auto& item : items)
        for (auto c : criteria) jobs.push_back({&item, c});
      const auto batch = pace::run_rankings(jobs, *judge, ctx.prompts(), demos, opts, ctx.parallelism());
      for (const auto& [i, msg] : batch.failures)
        std::cerr << "failed " << jobs[i].item->id << " / " << pace::to_string(jobs[i].criterion) << ": " << msg << "\n";
      if (batch.results.empty()) throw pace::BatchError("every judgment failed");
      if (auto j = ej_judgments.get()) pace::write_judgments(*j, batch.results, {});
      const auto report = pace::aggregate(batch.results);
      if (auto o = ej_out.get()) write_text(*o, json(report).dump(2) + "\n");
      std::cout << pace::format_judge_report(report);
      return 0;
    };
  });

  // eval-pairwise
  Common ep_c;
  Flag ep_items, ep_a, ep_b, ep_criteria, ep_out, ep_judgments;
  bool ep_no_debias = false;
  auto* ep = app.add_subcommand("eval-pairwise", "Win/lose/tie comparison of two models with an LLM judge");
  add_common(ep, ep_c, true, true, true);
  add(ep, ep_items, "--items", "JSONL of {id, persona, context, responses: {model: text}}");
  add(ep, ep_a, "--a", "Model A id");
  add(ep, ep_b, "--b", "Model B id");
  add(ep, ep_criteria, "--criteria", "Comma-separated criteria (default all six)");
  add(ep, ep_out, "--out", "Write the summary JSON here");
  add(ep, ep_judgments, "--judgments", "Write one JSONL record per judgment here");
  ep->add_flag("--no-debias", ep_no_debias, "Judge each pair once instead of in both orders");
  ep->callback([&] {
    action = [&] {
      const auto ctx = make_context(ep_c);
      const auto items = pace::load_judge_items(ctx.require(ep_items, "items", "--items"));
      const auto a = ctx.require(ep_a, "model_a", "--a");
      const auto b = ctx.require(ep_b, "model_b", "--b");
      if (a == b) throw UsageError("--a and --b must differ");
      const auto criteria = parse_criteria(ctx.get(ep_criteria, nullptr, "criteria", "all"));
      auto judge = ctx.provider();
      pace::JudgeOptions opts;
      opts.seed = ctx.seed();
      std::vector<pace::PairwiseJob> jobs;
      for (const auto& item : items)
        for (auto c : criteria) jobs.push_back({&item, c, a, b});
      const auto batch = pace::run_pairwise(jobs, *judge, ctx.prompts(), !ep_no_debias, opts, ctx.parallelism());
      for (const auto& [i, msg] : batch.failures)
        std::cerr << "failed " << jobs[i].item->id << " / " << pace::to_string(jobs[i].criterion) << ": " << msg << "\n";
      if (batch.results.empty()) throw pace::BatchError("every judgment failed");
      if (auto j = ep_judgments.get()) pace::write_judgments(*j, {}, batch.results);
      const auto report = pace::aggregate({}, batch.results);
      if (auto o = ep_out.get()) write_text(*o, json(report).dump(2) + "\n");
      std::cout << pace::format_judge_report(report);
      return 0;
    };
  });

  // serve
  Common sv_c;
  Flag sv_personas, sv_problems, sv_host, sv_port, sv_persist, sv_max_turns;
  bool sv_cors = false;
  auto* sv = app.add_subcommand("serve", "Run the HTTP tutoring service");
  add_common(sv, sv_c, true, false, false);
  add(sv, sv_personas, "--personas", "Persona profiles JSON file");
  add(sv, sv_problems, "--problems", "GSM8K-format JSONL problem catalog");
  add(sv, sv_host, "--host", "Listen address (default 127.0.0.1)");
  add(sv, sv_port, "--port", "Listen port (default 8080)");
  add(sv, sv_persist, "--persist", "Append completed sessions to this dataset JSONL");
  add(sv, sv_max_turns, "--max-turns", "Turn cap per session (default 10)");
  sv->add_flag("--cors", sv_cors, "Send permissive cross-origin headers (development)");
  sv->callback([&] {
    action = [&] {
      const auto ctx = make_context(sv_c);
      const auto prompts = ctx.prompts();
      auto personas = pace::load_profiles(ctx.require(sv_personas, "personas", "--personas"));
      auto problems = pace::load_gsm8k(ctx.require(sv_problems, "problems", "--problems"));
      auto provider = ctx.provider();
      pace::Tutor tutor(prompts);
      pace::ServiceConfig cfg;
      cfg.host = ctx.get(sv_host, nullptr, "host", cfg.host);
      cfg.port = static_cast<int>(ctx.get_int(sv_port, nullptr, "port", cfg.port));
      cfg.cors = sv_cors || ctx.settings.get(std::nullopt, nullptr, "cors", "false") == "true";
      cfg.session.max_turns = static_cast<int>(ctx.get_int(sv_max_turns, nullptr, "max_turns", 10));
      if (auto p = ctx.settings.lookup(sv_persist.get(), nullptr, "persist")) cfg.persist_path = *p;
      pace::TutoringService service(tutor, *provider, std::move(personas), std::move(problems), cfg);
      std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";
      service.run();
      return 0;
    };
  });

  // tutor
  Common tu_c;
  Flag tu_personas, tu_persona, tu_problems, tu_problem, tu_max_turns;
  auto* tu = app.add_subcommand("tutor", "Chat with the tutor in the terminal (one line per message)");
  add_common(tu, tu_c, true, false, false);
  add(tu, tu_personas, "--personas", "Persona profiles JSON file");
  add(tu, tu_persona, "--persona", "Persona id to tutor");
  add(tu, tu_problems, "--problems", "GSM8K-format JSONL problem file");
  add(tu, tu_problem, "--problem", "Problem id");
  add(tu, tu_max_turns, "--max-turns", "Turn cap (default 10)");
  tu->callback([&] {
    action = [&] {
      const auto ctx = make_context(tu_c);
      const auto prompts = ctx.prompts();
      const auto personas = pace::load_profiles(ctx.require(tu_personas, "personas", "--personas"));
      const auto problems = pace::load_gsm8k(ctx.require(tu_problems, "problems", "--problems"));
      const auto& persona = find_persona(personas, ctx.require(tu_persona, "persona", "--persona"));
      const auto& problem = find_problem(problems, ctx.require(tu_problem, "problem", "--problem"));
      auto provider = ctx.provider();
      pace::Tutor tutor(prompts);
      pace::SessionConfig sc;
      sc.max_turns = static_cast<int>(ctx.get_int(tu_max_turns, nullptr, "max_turns", 10));
      auto session = tutor.open_session(problem, persona, *provider, sc);
      std::cerr << pace::format_learning_style(*session.style()) << "\n"
                << pace::format_guidelines(session.strategy()->guidelines) << "\n\n";
      std::cout << "Teacher: " << tutor.teacher_turn(session, std::nullopt, *provider).text << "\n";
      std::string line;
      while (session.state() == pace::SessionState::teaching) {
        std::cout << "You: " << std::flush;
        if (!std::getline(std::cin, line) || pace::trim(line) == "/quit") break;
        if (pace::trim(line).empty()) continue;
        std::cout << "Teacher: " << tutor.teacher_turn(session, line, *provider).text << "\n";
      }
      std::cout << "[" << pace::to_string(session.state()) << "]\n";
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  try {
    return action ? action() : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
