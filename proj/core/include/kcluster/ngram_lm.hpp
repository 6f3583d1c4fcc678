#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kcluster/lm_backend.hpp"

namespace kcluster {

class QuestionBank;

// Lowercased word tokens: maximal runs of letters, digits, '_' and non-ASCII
// bytes; every other non-space byte is a token on its own. Whitespace only
// separates tokens.
std::vector<std::string> tokenize(std::string_view text);

// Joins tokens back into display text (no space before closing punctuation).
std::string detokenize(std::span<const std::string> tokens);

bool is_word_token(std::string_view token);

// Common English function words, plus tokens made only of digits.
bool is_stopword(std::string_view token);

// Document frequencies of word unigrams and adjacent word bigrams over a
// training corpus; backs the TF-IDF key-phrase stub used in place of LLM
// concept generation when the backend is the builtin LM.
class CorpusStatistics {
 public:
  CorpusStatistics() = default;
  explicit CorpusStatistics(std::span<const std::string> documents);

  std::size_t document_count() const noexcept { return documents_; }
  std::size_t document_frequency(std::string_view phrase) const;

  // Smoothed inverse document frequency, ln((1 + D) / (1 + df)) + 1.
  double idf(std::string_view phrase) const;

  struct Keyphrase {
    std::string phrase;
    double score = 0.0;
  };
  // Highest tf-idf phrase of `text`, the first one winning ties. Candidates
  // are tried in order: bigrams of content words, content words, any word
  // bigram, any word. Content words are neither stopwords nor numbers.
  std::optional<Keyphrase> keyphrase(std::string_view text) const;

 private:
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

// Word-level n-gram LM (unigram or bigram) with add-one smoothing. The
// bigram order also counts the bigrams of the text it is conditioned on:
//
//   Pr(v | w, h) = (c(w, v) + h(w, v) + 1) / (c(w) + h(w) + |V|)
//
// where c counts training bigrams, h counts the bigrams of the prompt and of
// the continuation scored so far (starting from the begin sentinel), and V
// holds every training word plus the end-of-text and unknown sentinels.
// Without h the score of a continuation would depend on the prompt only
// through its last token. The unigram order ignores context and history
// entirely and exists as a memoryless reference:
//
//   Pr(v) = (c(v) + 1) / (N + |V|)
//
class NgramLanguageModel final : public ScoringBackend {
 public:
  enum class Order { unigram = 1, bigram = 2 };

  NgramLanguageModel(std::span<const std::string> documents, Order order = Order::bigram);

  // Trains on render_question() of every question.
  static NgramLanguageModel from_bank(const QuestionBank& bank, Order order = Order::bigram);

  Capabilities capabilities() const override { return {true, true, true}; }
  std::string fingerprint() const override { return fingerprint_; }
  double cond_logprob(std::string_view prompt, std::string_view continuation) const override;
  Generation generate(std::string_view prompt, const DecodeConfig& cfg) const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                         std::span<const std::string> markers = {}) const override;
  const CorpusStatistics* corpus_statistics() const override { return &stats_; }

  Order order() const noexcept { return order_; }
  // |V|: words plus end and unknown sentinels.
  std::size_t vocabulary_size() const noexcept { return words_.size(); }
  // Embedding dimension: training words only, in first-appearance order.
  std::size_t embedding_dim() const noexcept { return words_.size() - kFirstWord; }
  const std::vector<std::string>& words() const noexcept { return words_; }

  // Smoothed next-token probability after `text` (empty: begin-of-text),
  // history counts included.
  double probability(std::string_view text, std::string_view token) const;

  static constexpr std::string_view kEndToken = "</s>";
  static constexpr std::string_view kUnknownToken = "<unk>";

 private:
  using TokenId = std::uint32_t;
  static constexpr TokenId kEnd = 0;
  static constexpr TokenId kUnknown = 1;
  static constexpr TokenId kFirstWord = 2;
  static constexpr TokenId kBegin = ~TokenId{0};

  // Bigram counts of the text seen so far.
  struct History {
    std::unordered_map<std::uint64_t, std::uint32_t> pairs;
    std::unordered_map<TokenId, std::uint32_t> contexts;
    TokenId last = kBegin;
    void push(TokenId token);
  };

  TokenId id_of(std::string_view token) const;
  History history_of(std::span<const TokenId> ids) const;
  std::int64_t quantized_logprob(const History& history, TokenId token) const;
  std::vector<TokenId> ids_of(std::string_view text) const;

  Order order_;
  std::vector<std::string> words_;  // id -> token
  std::unordered_map<std::string, TokenId> ids_;
  std::unordered_map<std::uint64_t, std::uint32_t> bigram_counts_;
  std::unordered_map<TokenId, std::uint32_t> context_counts_;
  std::vector<std::uint32_t> unigram_counts_;
  std::uint64_t total_tokens_ = 0;
  CorpusStatistics stats_;
  std::string fingerprint_;
};

// Fixed-point helpers shared with tests.
inline constexpr double kLogQuantum = 0x1p-40;
std::int64_t quantize_log(double log_value);
double dequantize_log(std::int64_t q);

}  // namespace kcluster
