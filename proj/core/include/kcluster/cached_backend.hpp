#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "kcluster/lm_backend.hpp"

namespace kcluster {

// Persistent memoization in front of another backend.
//
// File format: append-only JSONL, one record per line:
//   {"k": <sha256 hex>, "lp": <double>}                 cond_logprob
//   {"k": <sha256 hex>, "gen": <text>, "score": <double>} generate
//   {"k": <sha256 hex>, "emb": [<double>...]}            embed (one text)
// Keys hash the inner backend's fingerprint together with the operation and
// all of its arguments. Unreadable lines are dropped with a warning and the
// file is rewritten from the surviving records.
class CachedBackend final : public ScoringBackend {
 public:
  CachedBackend(BackendPtr inner, std::filesystem::path path, bool debug_plaintext = false);

  Capabilities capabilities() const override { return inner_->capabilities(); }
  std::string fingerprint() const override { return inner_->fingerprint(); }
  double cond_logprob(std::string_view prompt, std::string_view continuation) const override;
  std::vector<double> cond_logprob_batch(std::span<const ScoreRequest> requests) const override;
  Generation generate(std::string_view prompt, const DecodeConfig& cfg) const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                         std::span<const std::string> markers = {}) const override;
  const CorpusStatistics* corpus_statistics() const override { return inner_->corpus_statistics(); }

  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  struct Entry {
    std::optional<double> logprob;
    std::optional<Generation> generation;
    std::optional<std::vector<double>> vector;
  };

  std::string score_key(std::string_view prompt, std::string_view continuation) const;
  std::string generate_key(std::string_view prompt, const DecodeConfig& cfg) const;
  std::string embed_key(std::string_view marker, std::string_view text) const;

  std::optional<Entry> lookup(const std::string& key) const;
  void store(const std::string& key, Entry entry, const std::string& plaintext) const;
  void load();

  BackendPtr inner_;
  std::filesystem::path path_;
  bool debug_plaintext_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, Entry> entries_;
  mutable std::ofstream out_;
  mutable std::ofstream plain_out_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

}  // namespace kcluster
