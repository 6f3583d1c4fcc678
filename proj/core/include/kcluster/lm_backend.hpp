#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kcluster {

struct Capabilities {
  bool can_score = true;
  bool can_generate = false;
  bool can_embed = false;
};

struct DecodeConfig {
  int beam_size = 5;
  double length_penalty = 1.0;
  std::string stop_chars = ".,";
  int max_tokens = 24;

  // Throws ValidationError on beam_size < 1, max_tokens < 1 or a negative penalty.
  void validate() const;
};

struct Generation {
  std::string text;
  double score = 0.0;  // logprob / length^length_penalty of the chosen beam
};

struct ScoreRequest {
  std::string prompt;
  std::string continuation;
};

class CorpusStatistics;

// The "probability machine" behind every LM-derived quantity. All methods are
// const and must tolerate concurrent callers. Tokenization is private to each
// implementation; callers only ever pass text.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  virtual Capabilities capabilities() const = 0;

  // Identifies the model (and its training data, for the builtin LM) so that
  // persistent caches never serve scores computed by a different model.
  virtual std::string fingerprint() const = 0;

  // log Pr(continuation | prompt) in nats; always <= 0.
  virtual double cond_logprob(std::string_view prompt, std::string_view continuation) const = 0;

  // Order-aligned with `requests`. The default loops over cond_logprob.
  virtual std::vector<double> cond_logprob_batch(std::span<const ScoreRequest> requests) const;

  // Deterministic beam search; halts at any stop character or max_tokens.
  virtual Generation generate(std::string_view prompt, const DecodeConfig& cfg) const;

  // One vector per text, fixed dimensionality per backend. `markers`, when
  // non-empty, is order-aligned with `texts` and holds framing text (e.g.
  // "Exercise 1:\n") that conditions the model but is excluded from pooling.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                                 std::span<const std::string> markers = {}) const;

  // Document statistics of the training corpus, for backends that have one.
  virtual const CorpusStatistics* corpus_statistics() const { return nullptr; }
};

using BackendPtr = std::shared_ptr<const ScoringBackend>;

// Wraps `inner` with a persistent JSONL cache at `path`. Observationally
// equivalent to `inner`; repeated identical queries never reach it.
BackendPtr with_cache(BackendPtr inner, const std::filesystem::path& path, bool debug_plaintext = false);

}  // namespace kcluster
