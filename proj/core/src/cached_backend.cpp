#include "kcluster/cached_backend.hpp"

#include <cstdio>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kcluster/error.hpp"
#include "kcluster/hash.hpp"

namespace kcluster {

namespace {

std::string join_key(std::initializer_list<std::string_view> parts) {
  std::string buf;
  for (auto p : parts) {
    buf.append(p);
    buf.push_back('\0');
  }
  return sha256_hex(buf);
}

nlohmann::json to_record(const std::string& key, const auto& entry) {
  nlohmann::json rec = {{"k", key}};
  if (entry.logprob) rec["lp"] = *entry.logprob;
  if (entry.generation) {
    rec["gen"] = entry.generation->text;
    rec["score"] = entry.generation->score;
  }
  if (entry.vector) rec["emb"] = *entry.vector;
  return rec;
}

}  // namespace

CachedBackend::CachedBackend(BackendPtr inner, std::filesystem::path path, bool debug_plaintext)
    : inner_(std::move(inner)), path_(std::move(path)), debug_plaintext_(debug_plaintext) {
  if (!inner_) throw Error("cache wrapper needs an inner backend");
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  load();
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open cache file " + path_.string() + " for writing");
  if (debug_plaintext_) {
    plain_out_.open(path_.string() + ".plain.jsonl", std::ios::binary | std::ios::app);
    if (!plain_out_) throw Error("cannot open plaintext side-table next to " + path_.string());
  }
}

void CachedBackend::load() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;

  std::size_t line_no = 0;
  std::size_t bad = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      Entry e;
      const auto key = rec.at("k").get<std::string>();
      if (key.size() != 64) throw std::runtime_error("bad key");
      if (auto it = rec.find("lp"); it != rec.end()) {
        e.logprob = it->get<double>();
        if (!(*e.logprob <= 0.0)) throw std::runtime_error("positive logprob");
      }
      if (auto it = rec.find("gen"); it != rec.end())
        e.generation = Generation{it->get<std::string>(), rec.at("score").get<double>()};
      if (auto it = rec.find("emb"); it != rec.end()) e.vector = it->get<std::vector<double>>();
      if (!e.logprob && !e.generation && !e.vector) throw std::runtime_error("empty record");
      entries_[key] = std::move(e);
    } catch (const std::exception&) {
      ++bad;
    }
  }
  in.close();
  if (bad == 0) return;

  spdlog::warn("cache {}: dropped {} unreadable record(s) of {}; rebuilding file", path_.string(), bad,
               line_no);
  const auto tmp = path_.string() + ".tmp";
  {
    std::ofstream rewrite(tmp, std::ios::binary | std::ios::trunc);
    if (!rewrite) throw Error("cannot rebuild cache file " + path_.string());
    for (const auto& [key, e] : entries_) rewrite << to_record(key, e).dump() << '\n';
  }
  std::filesystem::rename(tmp, path_);
}

std::size_t CachedBackend::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string CachedBackend::score_key(std::string_view prompt, std::string_view continuation) const {
  return join_key({inner_->fingerprint(), "lp", prompt, continuation});
}

std::string CachedBackend::generate_key(std::string_view prompt, const DecodeConfig& cfg) const {
  const auto params = fmt::format("{}|{:.17g}|{}|{}", cfg.beam_size, cfg.length_penalty, cfg.stop_chars,
                                  cfg.max_tokens);
  return join_key({inner_->fingerprint(), "gen", prompt, params});
}

std::string CachedBackend::embed_key(std::string_view marker, std::string_view text) const {
  return join_key({inner_->fingerprint(), "emb", marker, text});
}

std::optional<CachedBackend::Entry> CachedBackend::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CachedBackend::store(const std::string& key, Entry entry, const std::string& plaintext) const {
  std::unique_lock lock(mutex_);
  auto [it, fresh] = entries_.try_emplace(key, std::move(entry));
  if (!fresh) return;
  out_ << to_record(key, it->second).dump() << '\n';
  out_.flush();
  if (debug_plaintext_) {
    plain_out_ << nlohmann::json{{"k", key}, {"text", plaintext}}.dump() << '\n';
    plain_out_.flush();
  }
}

double CachedBackend::cond_logprob(std::string_view prompt, std::string_view continuation) const {
  const auto key = score_key(prompt, continuation);
  if (auto e = lookup(key); e && e->logprob) {
    ++hits_;
    return *e->logprob;
  }
  ++misses_;
  const double lp = inner_->cond_logprob(prompt, continuation);
  store(key, Entry{lp, std::nullopt, std::nullopt},
        debug_plaintext_ ? std::string(prompt) + "\x1f" + std::string(continuation) : std::string{});
  return lp;
}

std::vector<double> CachedBackend::cond_logprob_batch(std::span<const ScoreRequest> requests) const {
  std::vector<double> out(requests.size());
  std::vector<std::string> keys(requests.size());
  std::vector<ScoreRequest> pending;
  std::vector<std::size_t> pending_pos;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    keys[i] = score_key(requests[i].prompt, requests[i].continuation);
    if (auto e = lookup(keys[i]); e && e->logprob) {
      ++hits_;
      out[i] = *e->logprob;
    } else {
      pending.push_back(requests[i]);
      pending_pos.push_back(i);
    }
  }
  if (pending.empty()) return out;
  misses_ += pending.size();
  const auto scored = inner_->cond_logprob_batch(pending);
  if (scored.size() != pending.size()) throw BackendError("batch response size mismatch", false);
  for (std::size_t j = 0; j < pending.size(); ++j) {
    const auto i = pending_pos[j];
    out[i] = scored[j];
    store(keys[i], Entry{scored[j], std::nullopt, std::nullopt},
          debug_plaintext_ ? pending[j].prompt + "\x1f" + pending[j].continuation : std::string{});
  }
  return out;
}

Generation CachedBackend::generate(std::string_view prompt, const DecodeConfig& cfg) const {
  const auto key = generate_key(prompt, cfg);
  if (auto e = lookup(key); e && e->generation) {
    ++hits_;
    return *e->generation;
  }
  ++misses_;
  auto gen = inner_->generate(prompt, cfg);
  store(key, Entry{std::nullopt, gen, std::nullopt}, debug_plaintext_ ? std::string(prompt) : std::string{});
  return gen;
}

std::vector<std::vector<double>> CachedBackend::embed(std::span<const std::string> texts,
                                                      std::span<const std::string> markers) const {
  if (!markers.empty() && markers.size() != texts.size())
    throw ValidationError("markers must be order-aligned with texts");
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::string> pending_texts;
  std::vector<std::string> pending_markers;
  std::vector<std::size_t> pending_pos;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::string_view marker = markers.empty() ? std::string_view{} : std::string_view(markers[i]);
    keys[i] = embed_key(marker, texts[i]);
    if (auto e = lookup(keys[i]); e && e->vector) {
      ++hits_;
      out[i] = *e->vector;
    } else {
      pending_texts.push_back(texts[i]);
      if (!markers.empty()) pending_markers.push_back(markers[i]);
      pending_pos.push_back(i);
    }
  }
  if (pending_texts.empty()) return out;
  misses_ += pending_texts.size();
  auto vectors = inner_->embed(pending_texts, pending_markers);
  if (vectors.size() != pending_texts.size()) throw BackendError("embed response size mismatch", false);
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    const auto i = pending_pos[j];
    out[i] = vectors[j];
    store(keys[i], Entry{std::nullopt, std::nullopt, std::move(vectors[j])},
          debug_plaintext_ ? texts[i] : std::string{});
  }
  return out;
}

BackendPtr with_cache(BackendPtr inner, const std::filesystem::path& path, bool debug_plaintext) {
  return std::make_shared<CachedBackend>(std::move(inner), path, debug_plaintext);
}

}  // namespace kcluster
