#include <doctest.h>

#include <cmath>
#include <random>

#include "kcluster/error.hpp"
#include "kcluster/ngram_lm.hpp"
#include "kcluster/question_bank.hpp"
#include "oracles.hpp"

using namespace kcluster;

namespace {

std::vector<std::string> docs(std::initializer_list<const char*> items) { return {items.begin(), items.end()}; }

std::string random_text(std::mt19937_64& rng, const std::vector<std::string>& pool, std::size_t max_len) {
  const std::size_t n = 1 + rng() % max_len;
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += pool[rng() % pool.size()];
  }
  return s;
}

}  // namespace

TEST_CASE("tokenizer splits words and punctuation") {
  CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("  a_b\t1/2\n") == std::vector<std::string>{"a_b", "1", "/", "2"});
  CHECK(tokenize("").empty());
  const std::vector<std::string> toks{"the", "concept", "of", "flexibility", "."};
  CHECK(detokenize(toks) == "the concept of flexibility.");
  CHECK(oracle::BigramLM::tokens("Which is it? (a) x") == tokenize("Which is it? (a) x"));
}

TEST_CASE("stopwords") {
  CHECK(is_stopword("the"));
  CHECK(is_stopword("42"));
  CHECK_FALSE(is_stopword("flexible"));
  CHECK_FALSE(is_stopword("h2o"));
}

TEST_CASE("hand-computed bigram on {a b, a c}") {
  const NgramLanguageModel lm(docs({"a b", "a c"}));
  CHECK(lm.vocabulary_size() == 5);
  // Pr(a | BOS) = (2 + 1) / (2 + 5); Pr(b | a) = (1 + 1) / (2 + 5).
  CHECK(lm.cond_logprob("", "a b") == doctest::Approx(std::log(3.0 / 7.0) + std::log(2.0 / 7.0)).epsilon(1e-12));
  // With "a b" already in the text, the (a, b) bigram has been seen once more.
  CHECK(lm.probability("a b a", "b") == doctest::Approx(3.0 / 8.0).epsilon(1e-12));
  CHECK(lm.cond_logprob("", "zzz") == doctest::Approx(std::log(1.0 / 7.0)).epsilon(1e-12));
  CHECK_THROWS_AS(lm.cond_logprob("a", "   "), ValidationError);
}

TEST_CASE("builtin matches the reference bigram on random text") {
  const auto bank = load_bank(fixture::data_path("toy_bank.jsonl"));
  std::vector<std::string> corpus;
  for (const auto& q : bank) corpus.push_back(render_question(q));
  const auto lm = NgramLanguageModel::from_bank(bank);
  const oracle::BigramLM ref(corpus);
  const auto uni = NgramLanguageModel::from_bank(bank, NgramLanguageModel::Order::unigram);
  const oracle::BigramLM ref_uni(corpus, true);

  std::vector<std::string> pool = lm.words();
  pool.erase(pool.begin(), pool.begin() + 2);
  pool.push_back("neverseen");
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto p = rng() % 5 == 0 ? std::string{} : random_text(rng, pool, 30);
    const auto c = random_text(rng, pool, 20);
    CHECK(static_cast<double>(lm.cond_logprob(p, c)) == doctest::Approx(static_cast<double>(ref.logprob(p, c))).epsilon(1e-12));
    CHECK(static_cast<double>(uni.cond_logprob(p, c)) ==
          doctest::Approx(static_cast<double>(ref_uni.logprob(p, c))).epsilon(1e-12));
  }
}

TEST_CASE("next-token distribution sums to one") {
  const auto bank = load_bank(fixture::data_path("toy5_bank.jsonl"));
  for (auto order : {NgramLanguageModel::Order::bigram, NgramLanguageModel::Order::unigram}) {
    const auto lm = NgramLanguageModel::from_bank(bank, order);
    for (const char* ctx : {"", "Which is the most", "Exercise 1:\nMultiple Choice:\nWhat is", "unknown words here"}) {
      double total = 0;
      for (const auto& w : lm.words()) total += lm.probability(ctx, w);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("logprobs are never positive") {
  const auto lm = NgramLanguageModel::from_bank(load_bank(fixture::data_path("toy5_bank.jsonl")));
  std::mt19937_64 rng(9);
  const auto& pool = lm.words();
  for (int i = 0; i < 200; ++i) {
    const double lp = lm.cond_logprob(random_text(rng, pool, 10), random_text(rng, pool, 10));
    CHECK(lp <= 0.0);
    CHECK(std::exp(lp) > 0.0);
  }
}

TEST_CASE("chain rule holds exactly") {
  const auto lm = NgramLanguageModel::from_bank(load_bank(fixture::data_path("toy_bank.jsonl")));
  std::vector<std::string> pool(lm.words().begin() + 2, lm.words().end());
  std::mt19937_64 rng(17);
  for (int i = 0; i < 300; ++i) {
    const auto p = random_text(rng, pool, 15), c1 = random_text(rng, pool, 10), c2 = random_text(rng, pool, 10);
    CHECK(lm.cond_logprob(p, c1 + " " + c2) == lm.cond_logprob(p, c1) + lm.cond_logprob(p + " " + c1, c2));
  }
}

TEST_CASE("unigram order ignores the prompt") {
  const auto lm = NgramLanguageModel::from_bank(load_bank(fixture::data_path("toy5_bank.jsonl")),
                                                NgramLanguageModel::Order::unigram);
  const std::string c = "Which is the most flexible?";
  const double base = lm.cond_logprob("", c);
  CHECK(lm.cond_logprob("Exercise 2:\n", c) == base);
  CHECK(lm.cond_logprob("Which is the most flexible? a) paper", c) == base);
}

TEST_CASE("seen text raises the probability of repeating it") {
  const auto lm = NgramLanguageModel::from_bank(load_bank(fixture::data_path("toy5_bank.jsonl")));
  const std::string c = "Which is the most flexible? a) rubber band";
  CHECK(lm.cond_logprob(c + "\n", c) > lm.cond_logprob("What is 1/2 + 1/4?\n", c));
}

TEST_CASE("fixed-point log quantum") {
  for (double x : {0.0, -1e-9, -0.5, -3.25, -1234.5678}) {
    CHECK(std::abs(dequantize_log(quantize_log(x)) - x) <= kLogQuantum);
  }
  CHECK(dequantize_log(quantize_log(-2.0)) == -2.0);
}

TEST_CASE("decode config validation") {
  DecodeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beam_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_tokens = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.length_penalty = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("beam of one is greedy decoding") {
  const auto lm = NgramLanguageModel::from_bank(load_bank(fixture::data_path("toy_bank.jsonl")));
  DecodeConfig cfg;
  cfg.beam_size = 1;
  cfg.max_tokens = 12;
  for (const char* prompt : {"Which of these", "Will these magnets", "Exercise 1:\nMultiple Choice:\n"}) {
    std::string text = prompt;
    std::vector<std::string> out;
    for (int step = 0; step < cfg.max_tokens; ++step) {
      std::string best;
      double best_p = -1;
      for (std::size_t id = 0; id < lm.words().size(); ++id) {
        if (id == 1) continue;  // unknown sentinel is never generated
        const double p = lm.probability(text, lm.words()[id]);
        if (p > best_p) {
          best_p = p;
          best = lm.words()[id];
        }
      }
      if (best == NgramLanguageModel::kEndToken || best.find_first_of(cfg.stop_chars) != std::string::npos) break;
      out.push_back(best);
      text += " " + best;
    }
    CHECK(lm.generate(prompt, cfg).text == detokenize(out));
  }
}

TEST_CASE("generation stops before stop characters") {
  const NgramLanguageModel lm(docs({"the answer is red, blue. green", "the answer is red, blue."}));
  DecodeConfig cfg;
  const auto g = lm.generate("the answer is", cfg);
  CHECK(g.text == "red");
  CHECK(g.text.find_first_of(".,") == std::string::npos);
  cfg.stop_chars = ".";
  CHECK(lm.generate("the answer is", cfg).text == "red, blue");
}

TEST_CASE("generation finds the best short continuation") {
  const std::vector<std::string> corpus{
      "the concept of flexibility.", "the concept of flexibility.", "the concept of flexibility.",
      "the concept of density.",     "a test of gas, liquid.",      "flexibility of paper."};
  const NgramLanguageModel lm(corpus);
  const oracle::BigramLM ref(corpus);
  const std::string prompt = "Exercise 1:\nWhich is the most flexible?\nRemark:\nthe concept of";

  std::vector<std::string> pool(lm.words().begin() + 2, lm.words().end());
  std::string best;
  long double best_score = -1e300L;
  std::vector<std::string> seq;
  auto consider = [&](const std::vector<std::string>& s) {
    std::string joined;
    for (const auto& t : s) joined += (joined.empty() ? "" : " ") + t;
    const long double score = ref.logprob(prompt, joined) / static_cast<long double>(s.size());
    if (score > best_score) {
      best_score = score;
      best = joined;
    }
  };
  for (const auto& a : pool) {
    if (a == "." || a == ",") {
      consider({a});
      continue;
    }
    for (const auto& b : pool) {
      if (b == "." || b == ",") {
        consider({a, b});
        continue;
      }
      for (const auto& c : {std::string("."), std::string(",")}) consider({a, b, c});
    }
  }
  CHECK(best == "flexibility .");
  CHECK(lm.generate(prompt, DecodeConfig{}).text == "flexibility");
}

TEST_CASE("histogram embeddings") {
  const NgramLanguageModel lm(docs({"a b"}));
  CHECK(lm.embedding_dim() == 2);
  const std::vector<std::string> texts{"a a b", "a a b", "zzz b"};
  const auto v = lm.embed(texts);
  REQUIRE(v.size() == 3);
  CHECK(v[0][0] == doctest::Approx(2.0 / 3.0));
  CHECK(v[0][1] == doctest::Approx(1.0 / 3.0));
  CHECK(v[0] == v[1]);
  CHECK(v[2] == std::vector<double>{0.0, 1.0});
}

TEST_CASE("fingerprints track the corpus and order") {
  const NgramLanguageModel a(docs({"a b"})), b(docs({"a c"})), c(docs({"a b"}));
  const NgramLanguageModel u(docs({"a b"}), NgramLanguageModel::Order::unigram);
  CHECK(a.fingerprint() == c.fingerprint());
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() != u.fingerprint());
}

TEST_CASE("corpus statistics key phrases") {
  const auto bank = load_bank(fixture::data_path("toy5_bank.jsonl"));
  const auto lm = NgramLanguageModel::from_bank(bank);
  const auto* stats = lm.corpus_statistics();
  REQUIRE(stats != nullptr);
  CHECK(stats->document_count() == 5);
  CHECK(stats->document_frequency("multiple choice") == 5);
  CHECK(stats->idf("multiple choice") == doctest::Approx(1.0));
  CHECK(stats->keyphrase("Which is the most flexible?")->phrase == "flexible");
  CHECK(stats->keyphrase("Will these magnets attract or repel each other? North pole faces north pole.")->phrase ==
        "north pole");
  CHECK(stats->keyphrase("What is the?")->phrase == "what is");
  CHECK_FALSE(stats->keyphrase("?!").has_value());
}
