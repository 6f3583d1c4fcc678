#include "kcluster/lm_backend.hpp"

#include "kcluster/error.hpp"

namespace kcluster {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw ValidationError("beam_size must be >= 1");
  if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
  if (!(length_penalty >= 0.0)) throw ValidationError("length_penalty must be nonnegative");
}

std::vector<double> ScoringBackend::cond_logprob_batch(std::span<const ScoreRequest> requests) const {
  std::vector<double> out;
  out.reserve(requests.size());
  for (const auto& r : requests) out.push_back(cond_logprob(r.prompt, r.continuation));
  return out;
}

Generation ScoringBackend::generate(std::string_view, const DecodeConfig&) const {
  throw CapabilityError("backend '" + fingerprint() + "' cannot generate text");
}

std::vector<std::vector<double>> ScoringBackend::embed(std::span<const std::string>,
                                                       std::span<const std::string>) const {
  throw CapabilityError("backend '" + fingerprint() + "' cannot embed text");
}

}  // namespace kcluster
