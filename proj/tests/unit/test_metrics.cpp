#include <fstream>
#include <random>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "pace/errors.hpp"
#include "pace/metrics.hpp"
#include "support.hpp"

using namespace pace;
namespace t = pace::test;

namespace {

Tokens tok(const std::string& s) { return tokenize(s); }

Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len) {
  static const char* vocab[] = {"a", "b", "c", "d", "e", "the", "cat", "mat"};
  Tokens out(1 + rng() % max_len);
  for (auto& x : out) x = vocab[rng() % 8];
  return out;
}

class FixedEmbedder : public Embedder {
 public:
  explicit FixedEmbedder(std::vector<std::vector<double>> v) : v_(std::move(v)) {}
  std::vector<std::vector<double>> embed(const Tokens&) override { return v_; }
  std::string name() const override { return "fixed"; }

 private:
  std::vector<std::vector<double>> v_;
};

}  // namespace

TEST_CASE("tokenizer lowercases and drops punctuation") {
  CHECK(tokenize("Hello, World!  It's 3.5") == Tokens{"hello", "world", "its", "35"});
  CHECK(tokenize(" ... ").empty());
}

TEST_CASE("oracle cases") {
  auto cases = nlohmann::json::parse(t::slurp(t::oracle("metric_cases.json")));
  REQUIRE(cases.size() == 25);
  for (const auto& c : cases) {
    const auto cand = tok(c["candidate"]), ref = tok(c["reference"]);
    const auto& e = c["expected"];
    OneHotEmbedder onehot;
    INFO(c["name"].get<std::string>());
    CHECK(bleu_n(cand, ref, 1) == doctest::Approx(e["bleu_1"].get<double>()).epsilon(1e-9));
    CHECK(bleu_n(cand, ref, 2) == doctest::Approx(e["bleu_2"].get<double>()).epsilon(1e-9));
    CHECK(bleu_n(cand, ref, 3) == doctest::Approx(e["bleu_3"].get<double>()).epsilon(1e-9));
    CHECK(bleu_n(cand, ref, 4) == doctest::Approx(e["bleu_4"].get<double>()).epsilon(1e-9));
    CHECK(meteor(cand, ref) == doctest::Approx(e["meteor"].get<double>()).epsilon(1e-9));
    CHECK(rouge_n(cand, ref, 1) == doctest::Approx(e["rouge_1"].get<double>()).epsilon(1e-9));
    CHECK(rouge_n(cand, ref, 2) == doctest::Approx(e["rouge_2"].get<double>()).epsilon(1e-9));
    CHECK(rouge_l(cand, ref) == doctest::Approx(e["rouge_l"].get<double>()).epsilon(1e-9));
    CHECK(rouge_n(cand, ref, 1, RougeMode::f1) == doctest::Approx(e["rouge_1_f1"].get<double>()).epsilon(1e-9));
    CHECK(rouge_n(cand, ref, 2, RougeMode::f1) == doctest::Approx(e["rouge_2_f1"].get<double>()).epsilon(1e-9));
    CHECK(rouge_l(cand, ref, RougeMode::f1) == doctest::Approx(e["rouge_l_f1"].get<double>()).epsilon(1e-9));
    CHECK(embed_f1(cand, ref, onehot) == doctest::Approx(e["embed_f1"].get<double>()).epsilon(1e-9));
  }
}

TEST_CASE("cat/mat by hand") {
  const auto c = tok("the cat sat on the mat"), r = tok("the cat is on the mat");
  CHECK(bleu_n(c, r, 1) == doctest::Approx(5.0 / 6.0));
  CHECK(bleu_n(c, r, 2) == doctest::Approx(std::sqrt(0.5)));
  CHECK(bleu_n(c, r, 3) == doctest::Approx(0.5));
  CHECK(lcs_length(c, r) == 5);
  CHECK(meteor(c, r) == doctest::Approx(5.0 / 6.0 * (1 - 0.5 * 0.064)));
}

TEST_CASE("brevity penalty and clipping") {
  CHECK(bleu_n(tok("the cat"), tok("the cat sat on the mat"), 1) == doctest::Approx(std::exp(1 - 3.0)));
  CHECK(bleu_n(tok("the the the"), tok("the cat"), 1) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(bleu_n({}, tok("a"), 1), EmptyInput);
  CHECK_THROWS_AS(bleu_n(tok("a"), tok("a"), 5), std::invalid_argument);
}

TEST_CASE("metric properties over random pairs") {
  std::mt19937_64 rng(1234);
  OneHotEmbedder onehot;
  HashingEmbedder hashing;
  for (int i = 0; i < 300; ++i) {
    const auto c = random_tokens(rng, 10), r = random_tokens(rng, 10);
    for (int n = 1; n <= 4; ++n) {
      const double b = bleu_n(c, r, n);
      CHECK(b >= 0.0);
      CHECK(b <= 1.0 + 1e-12);
      CHECK(bleu_n(c, c, n) == doctest::Approx(1.0));
    }
    for (auto mode : {RougeMode::recall, RougeMode::f1}) {
      for (int n = 1; n <= 2; ++n) {
        const double x = rouge_n(c, r, n, mode);
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
      }
      CHECK(rouge_l(c, c, mode) == doctest::Approx(1.0));
    }
    CHECK(rouge_n(c, r, 1, RougeMode::f1) == doctest::Approx(rouge_n(r, c, 1, RougeMode::f1)));
    CHECK(lcs_length(c, r) == lcs_length(r, c));
    CHECK(lcs_length(c, r) <= std::min(c.size(), r.size()));
    const double m = meteor(c, r);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    const double identity = 1.0 - 0.5 / std::pow(static_cast<double>(c.size()), 3);
    CHECK(meteor(c, c) == doctest::Approx(identity));
    const double f = embed_f1(c, r, onehot);
    CHECK(f == doctest::Approx(embed_f1(r, c, onehot)));
    CHECK(embed_f1(c, c, onehot) == doctest::Approx(1.0));
    CHECK(embed_f1(c, c, hashing) == doctest::Approx(1.0));
    const double h = embed_f1(c, r, hashing);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
  }
}

TEST_CASE("hashing embedder gives partial credit") {
  HashingEmbedder h;
  const double related = embed_f1(tok("multiply"), tok("multiplying"), h);
  const double unrelated = embed_f1(tok("multiply"), tok("zebra"), h);
  CHECK(related > unrelated);
  CHECK(related < 1.0);
  CHECK_THROWS_AS(HashingEmbedder(0), std::invalid_argument);
}

TEST_CASE("embed_f1 rejects bad embedder output") {
  FixedEmbedder wrong_count({{1, 0}});
  CHECK_THROWS_AS(embed_f1(tok("a"), tok("b"), wrong_count), EmbedderError);
  FixedEmbedder mismatched({{1, 0}, {1, 0, 0}});
  CHECK_THROWS_AS(embed_f1(tok("a"), tok("b"), mismatched), DimensionMismatch);
  FixedEmbedder opposite({{1, 0}, {-1, 0}});
  CHECK(embed_f1(tok("a"), tok("b"), opposite) == 0.0);
}

TEST_CASE("http embedder against a local server") {
  httplib::Server server;
  server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    if (body["input"].size() == 3) {
      res.status = 500;
      return;
    }
    nlohmann::json data = nlohmann::json::array();
    for (std::size_t i = 0; i < body["input"].size(); ++i) {
      const bool first = body["input"][i] == body["input"][0];
      data.push_back({{"index", i}, {"embedding", first ? std::vector<double>{2, 0} : std::vector<double>{0, 3}}});
    }
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpEmbedderConfig cfg;
  cfg.api_base = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.timeout_seconds = 5;
  HttpEmbedder e(cfg);
  auto v = e.embed({"x", "y"});
  REQUIRE(v.size() == 2);
  CHECK(v[0][0] == doctest::Approx(1.0));
  CHECK(embed_f1(tok("x x"), tok("x y"), e) == doctest::Approx(2 * 1.0 * 0.5 / 1.5));
  CHECK_THROWS_AS(e.embed({"a", "b", "c"}), EmbedderError);
  server.stop();
  th.join();
}

TEST_CASE("corpus evaluation with persona slices") {
  std::vector<EvalUnit> units{{"u1", {}, "the cat sat", "the cat sat", "p1"},
                              {"u2", {}, "a dog", "the cat", "p1"},
                              {"u3", {}, "hello world", "hello world", "p2"},
                              {"u4", {}, "something", "something", ""}};
  MetricConfig cfg;
  cfg.parallelism = 3;
  auto report = evaluate_corpus(units, cfg);
  CHECK(report.per_unit.size() == 4);
  CHECK(report.overall.sample_count == 4);
  CHECK(report.by_persona.size() == 2);
  CHECK(report.by_persona.at("p1").sample_count == 2);
  CHECK(report.by_persona.at("p2").scores.bleu_1 == doctest::Approx(1.0));
  CHECK(report.overall.scores.bleu_1 == doctest::Approx((1.0 + 0.0 + 1.0 + 1.0) / 4));
  CHECK(report.overall.average == doctest::Approx(report.overall.scores.average()));
  auto table = format_metric_table(report);
  for (const char* col : {"BL-1", "BL-4", "METEOR", "RG-L", "BERTScore", "Avg"})
    CHECK(table.find(col) != std::string::npos);
  CHECK_THROWS_AS(evaluate_corpus({}), EmptyInput);
  CHECK_THROWS_AS(evaluate_corpus({{"x", {}, "!!!", "a", ""}}), EmptyInput);
}

TEST_CASE("teacher forcing builds one unit per teacher utterance") {
  Dataset d{t::make_transcript(2, Termination::resolved, "a"), t::make_transcript(1, Termination::resolved, "b")};
  ScriptedProvider model({{"", {{"stage", "eval"}}, {ScriptEntry::text("model reply")}}});
  auto units = teacher_forced_units(d, t::templates(), model, {}, 2);
  REQUIRE(units.size() == 5);
  CHECK(units[0].context.empty());
  CHECK(units[2].context.size() == 4);
  CHECK(units[2].reference == d[0].utterances[4].text);
  CHECK(units[2].candidate == "model reply");
  CHECK(units[2].profile_id == "maya");
  std::set<std::string> ids;
  for (const auto& u : units) ids.insert(u.id);
  CHECK(ids.size() == 5);
  bool saw_full_history = false;
  for (const auto& req : model.requests()) {
    CHECK(req.messages[0].role == Role::system);
    if (req.messages.size() == 5) {
      saw_full_history = true;
      CHECK(req.messages[1].role == Role::assistant);
      CHECK(req.messages[2].role == Role::user);
    }
  }
  CHECK(saw_full_history);

  t::TempDir dir;
  save_eval_units(dir / "u.jsonl", units);
  auto back = load_eval_units(dir / "u.jsonl");
  REQUIRE(back.size() == 5);
  CHECK(back[2].context == units[2].context);
  CHECK(back[2].candidate == units[2].candidate);
}
