#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "kcluster/lm_backend.hpp"

namespace kcluster {

struct RemoteOptions {
  std::string base_url;                   // e.g. "http://127.0.0.1:8000"
  std::optional<std::string> auth_token;  // sent as "Authorization: Bearer <token>"
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{300};
  std::size_t batch_size = 32;  // requests per /v1/cond_logprob_batch call
};

// HTTP client for the scoring sidecar. Wire protocol (UTF-8 JSON):
//
//   GET  /v1/capabilities      -> {"score","generate","embed","model","dim"}
//   POST /v1/cond_logprob      {"prompt","continuation"} -> {"logprob"}
//   POST /v1/cond_logprob_batch {"requests":[{"prompt","continuation"}...]}
//                              -> {"logprobs":[...]}
//   POST /v1/generate          {"prompt","beam_size","length_penalty",
//                               "stop_chars":[...],"max_tokens"} -> {"text","score"}
//   POST /v1/embed             {"texts":[...],"markers"?:[...]} -> {"vectors","dim"}
//
// Connection failures and 5xx responses are retried with exponential backoff
// before surfacing as BackendError.
class RemoteBackend final : public ScoringBackend {
 public:
  // Fetches /v1/capabilities; the advertised set becomes capabilities().
  explicit RemoteBackend(RemoteOptions options);

  Capabilities capabilities() const override { return caps_; }
  std::string fingerprint() const override { return fingerprint_; }
  double cond_logprob(std::string_view prompt, std::string_view continuation) const override;
  std::vector<double> cond_logprob_batch(std::span<const ScoreRequest> requests) const override;
  Generation generate(std::string_view prompt, const DecodeConfig& cfg) const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                         std::span<const std::string> markers = {}) const override;

  const std::string& model() const noexcept { return model_; }
  std::optional<std::size_t> advertised_dim() const noexcept { return dim_; }

 private:
  std::string request(const std::string& method, const std::string& route, const std::string& body) const;

  RemoteOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  Capabilities caps_;
  std::string model_;
  std::optional<std::size_t> dim_;
  std::string fingerprint_;
};

}  // namespace kcluster
