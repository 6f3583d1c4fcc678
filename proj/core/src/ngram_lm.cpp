#include "kcluster/ngram_lm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

#include "kcluster/error.hpp"
#include "kcluster/hash.hpp"
#include "kcluster/question_bank.hpp"
#include "kcluster/text.hpp"

namespace kcluster {

namespace {

bool is_word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c >= 0x80;
}

std::uint64_t pair_key(std::uint32_t context, std::uint32_t token) {
  return (std::uint64_t{context} << 32) | token;
}

}  // namespace

std::int64_t quantize_log(double log_value) { return std::llround(std::ldexp(log_value, 40)); }

double dequantize_log(std::int64_t q) { return std::ldexp(static_cast<double>(q), -40); }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(static_cast<char>(c))) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back(to_lower_ascii(text.substr(i, j - i)));
      i = j;
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return out;
}

bool is_stopword(std::string_view token) {
  static const std::unordered_set<std::string_view> words{
      "a",     "about", "after", "all",   "an",    "and",   "any",   "are",   "as",    "at",    "be",
      "been",  "best",  "both",  "but",   "by",    "can",   "could", "did",   "do",    "does",  "each",
      "for",   "from",  "had",   "has",   "have",  "he",    "her",   "his",   "how",   "i",     "if",
      "in",    "into",  "is",    "it",    "its",   "least", "less",  "more",  "most",  "much",  "no",
      "not",   "of",    "on",    "one",   "or",    "other", "our",   "she",   "should", "so",   "some",
      "such",  "than",  "that",  "the",   "their", "them",  "then",  "there", "these", "they",  "this",
      "those", "to",    "two",   "up",    "was",   "we",    "were",  "what",  "when",  "where", "which",
      "while", "who",   "whom",  "why",   "will",  "with",  "would", "you",   "your",  "select", "choose",
      "answer", "multiple", "choice", "following",
  };
  if (words.contains(token)) return true;
  return std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_word_token(std::string_view token) {
  return !token.empty() && is_word_char(static_cast<unsigned char>(token.front()));
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const bool closing = t.size() == 1 && std::string_view(".,;:!?)]}").find(t[0]) != std::string_view::npos;
    const bool after_open = i > 0 && tokens[i - 1].size() == 1 &&
                            std::string_view("([{").find(tokens[i - 1][0]) != std::string_view::npos;
    if (i > 0 && !closing && !after_open) out.push_back(' ');
    out += t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CorpusStatistics

CorpusStatistics::CorpusStatistics(std::span<const std::string> documents)
    : documents_(documents.size()) {
  for (const auto& doc : documents) {
    const auto tokens = tokenize(doc);
    std::unordered_set<std::string> phrases;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!is_word_token(tokens[i])) continue;
      phrases.insert(tokens[i]);
      if (i + 1 < tokens.size() && is_word_token(tokens[i + 1]))
        phrases.insert(tokens[i] + ' ' + tokens[i + 1]);
    }
    for (const auto& p : phrases) ++df_[p];
  }
}

std::size_t CorpusStatistics::document_frequency(std::string_view phrase) const {
  auto it = df_.find(std::string(phrase));
  return it == df_.end() ? 0 : it->second;
}

double CorpusStatistics::idf(std::string_view phrase) const {
  return std::log((1.0 + static_cast<double>(documents_)) /
                  (1.0 + static_cast<double>(document_frequency(phrase)))) +
         1.0;
}

std::optional<CorpusStatistics::Keyphrase> CorpusStatistics::keyphrase(std::string_view text) const {
  const auto tokens = tokenize(text);
  std::array<std::vector<std::string>, 4> pools;  // content bigrams, content words, bigrams, words
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!is_word_token(tokens[i])) continue;
    const bool content = !is_stopword(tokens[i]);
    pools[3].push_back(tokens[i]);
    if (content) pools[1].push_back(tokens[i]);
    if (i + 1 < tokens.size() && is_word_token(tokens[i + 1])) {
      auto phrase = tokens[i] + ' ' + tokens[i + 1];
      if (content && !is_stopword(tokens[i + 1])) pools[0].push_back(phrase);
      pools[2].push_back(std::move(phrase));
    }
  }
  for (const auto& pool : pools) {
    if (pool.empty()) continue;
    std::optional<Keyphrase> best;
    for (const auto& p : pool) {
      const auto tf = static_cast<double>(std::count(pool.begin(), pool.end(), p));
      const double score = tf * idf(p);
      if (!best || score > best->score) best = Keyphrase{p, score};
    }
    return best;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// NgramLanguageModel

NgramLanguageModel::NgramLanguageModel(std::span<const std::string> documents, Order order)
    : order_(order), stats_(documents) {
  words_ = {std::string(kEndToken), std::string(kUnknownToken)};
  ids_.emplace(kEndToken, kEnd);
  ids_.emplace(kUnknownToken, kUnknown);

  std::string digest_input;
  std::vector<std::vector<TokenId>> sentences;
  sentences.reserve(documents.size());
  for (const auto& doc : documents) {
    digest_input += doc;
    digest_input.push_back('\x1e');
    std::vector<TokenId> ids;
    for (auto& tok : tokenize(doc)) {
      auto [it, fresh] = ids_.try_emplace(tok, static_cast<TokenId>(words_.size()));
      if (fresh) words_.push_back(tok);
      ids.push_back(it->second);
    }
    sentences.push_back(std::move(ids));
  }

  unigram_counts_.assign(words_.size(), 0);
  for (const auto& s : sentences) {
    TokenId prev = kBegin;
    auto observe = [&](TokenId tok) {
      ++bigram_counts_[pair_key(prev, tok)];
      ++context_counts_[prev];
      ++unigram_counts_[tok];
      ++total_tokens_;
      prev = tok;
    };
    for (auto tok : s) observe(tok);
    observe(kEnd);
  }

  fingerprint_ = "builtin-ngram/order=" + std::to_string(static_cast<int>(order_)) + "/" +
                 sha256_hex(digest_input);
}

NgramLanguageModel NgramLanguageModel::from_bank(const QuestionBank& bank, Order order) {
  std::vector<std::string> docs;
  docs.reserve(bank.size());
  for (const auto& q : bank) docs.push_back(render_question(q));
  return NgramLanguageModel(docs, order);
}

NgramLanguageModel::TokenId NgramLanguageModel::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnknown : it->second;
}

std::vector<NgramLanguageModel::TokenId> NgramLanguageModel::ids_of(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& tok : tokenize(text)) out.push_back(id_of(tok));
  return out;
}

void NgramLanguageModel::History::push(TokenId token) {
  ++pairs[pair_key(last, token)];
  ++contexts[last];
  last = token;
}

NgramLanguageModel::History NgramLanguageModel::history_of(std::span<const TokenId> ids) const {
  History h;
  if (order_ == Order::bigram)
    for (auto id : ids) h.push(id);
  else if (!ids.empty())
    h.last = ids.back();
  return h;
}

double NgramLanguageModel::probability(std::string_view text, std::string_view token) const {
  const auto ids = ids_of(text);
  return std::exp(dequantize_log(quantized_logprob(history_of(ids), id_of(token))));
}

std::int64_t NgramLanguageModel::quantized_logprob(const History& history, TokenId token) const {
  const auto v = static_cast<double>(words_.size());
  double num = 1.0;
  double den = v;
  if (order_ == Order::unigram) {
    num += unigram_counts_[token];
    den += static_cast<double>(total_tokens_);
  } else {
    const auto key = pair_key(history.last, token);
    if (auto it = bigram_counts_.find(key); it != bigram_counts_.end()) num += it->second;
    if (auto it = history.pairs.find(key); it != history.pairs.end()) num += it->second;
    if (auto it = context_counts_.find(history.last); it != context_counts_.end()) den += it->second;
    if (auto it = history.contexts.find(history.last); it != history.contexts.end()) den += it->second;
  }
  return quantize_log(std::log(num / den));
}

double NgramLanguageModel::cond_logprob(std::string_view prompt, std::string_view continuation) const {
  const auto cont = ids_of(continuation);
  if (cont.empty()) throw ValidationError("continuation tokenizes to zero tokens");
  auto history = history_of(ids_of(prompt));
  std::int64_t total = 0;
  for (auto tok : cont) {
    total += quantized_logprob(history, tok);
    if (order_ == Order::bigram) history.push(tok);
  }
  return dequantize_log(total);
}

Generation NgramLanguageModel::generate(std::string_view prompt, const DecodeConfig& cfg) const {
  cfg.validate();
  const auto start = history_of(ids_of(prompt));

  auto is_stop = [&](TokenId tok) {
    if (tok == kEnd) return true;
    return words_[tok].find_first_of(cfg.stop_chars) != std::string::npos;
  };

  struct Beam {
    std::vector<TokenId> tokens;
    std::int64_t logprob = 0;
    History history;
  };
  struct Finished {
    Beam beam;
    double score;
  };

  const auto beam_size = static_cast<std::size_t>(cfg.beam_size);
  std::vector<Beam> live{Beam{{}, 0, start}};
  std::vector<Finished> finished;

  for (int step = 0; step < cfg.max_tokens && !live.empty() && finished.size() < beam_size; ++step) {
    struct Candidate {
      std::size_t beam;
      TokenId token;
      std::int64_t logprob;
    };
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (TokenId tok = 0; tok < words_.size(); ++tok) {
        if (tok == kUnknown) continue;
        candidates.push_back({b, tok, live[b].logprob + quantized_logprob(live[b].history, tok)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.logprob > b.logprob; });

    const bool last_step = step + 1 == cfg.max_tokens;
    std::vector<Beam> next;
    for (std::size_t rank = 0; rank < candidates.size() && next.size() < beam_size; ++rank) {
      const auto& c = candidates[rank];
      Beam extended{live[c.beam].tokens, c.logprob, {}};
      extended.tokens.push_back(c.token);
      if (is_stop(c.token) || last_step) {
        // Finished hypotheses only count while they rank inside the beam.
        if (rank < beam_size) {
          const double len = static_cast<double>(extended.tokens.size());
          const double score = dequantize_log(extended.logprob) / std::pow(len, cfg.length_penalty);
          finished.push_back({std::move(extended), score});
        }
      } else {
        extended.history = live[c.beam].history;
        if (order_ == Order::bigram) extended.history.push(c.token);
        else extended.history.last = c.token;
        next.push_back(std::move(extended));
      }
    }
    live = std::move(next);
  }

  if (finished.empty()) throw Error("beam search produced no hypothesis");
  const auto best = std::max_element(finished.begin(), finished.end(),
                                     [](const Finished& a, const Finished& b) { return a.score < b.score; });
  // max_element keeps the earliest finished hypothesis on ties.
  std::vector<std::string> words;
  for (auto tok : best->beam.tokens) {
    if (is_stop(tok)) break;
    words.push_back(words_[tok]);
  }
  return {detokenize(words), best->score};
}

std::vector<std::vector<double>> NgramLanguageModel::embed(std::span<const std::string> texts,
                                                           std::span<const std::string>) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> hist(embedding_dim(), 0.0);
    double n = 0.0;
    for (auto tok : ids_of(text)) {
      if (tok < kFirstWord) continue;
      hist[tok - kFirstWord] += 1.0;
      n += 1.0;
    }
    if (n > 0)
      for (auto& h : hist) h /= n;
    out.push_back(std::move(hist));
  }
  return out;
}

}  // namespace kcluster
