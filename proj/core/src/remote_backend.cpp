#include "kcluster/remote_backend.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kcluster/error.hpp"

namespace kcluster {

namespace {

using json = nlohmann::json;

json parse_response(const std::string& body, const std::string& route) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(route + ": malformed JSON response: " + e.what(), false);
  }
}

double checked_logprob(const json& v, const std::string& route) {
  if (!v.is_number()) throw BackendError(route + ": logprob is not a number", false);
  const double lp = v.get<double>();
  if (!std::isfinite(lp) || lp > 0.0) throw BackendError(route + ": logprob out of range", false);
  return lp;
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  auto url = options_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = url.substr(path_start);
  if (scheme_host_port_.empty()) throw ValidationError("empty remote backend URL");

  const auto caps = parse_response(request("GET", "/v1/capabilities", ""), "/v1/capabilities");
  caps_.can_score = caps.value("score", false);
  caps_.can_generate = caps.value("generate", false);
  caps_.can_embed = caps.value("embed", false);
  if (!caps_.can_score) throw CapabilityError("sidecar at " + options_.base_url + " cannot score");
  model_ = caps.value("model", std::string("unknown"));
  if (auto it = caps.find("dim"); it != caps.end() && it->is_number_unsigned())
    dim_ = it->get<std::size_t>();
  fingerprint_ = "remote/" + model_;
}

std::string RemoteBackend::request(const std::string& method, const std::string& route,
                                   const std::string& body) const {
  httplib::Headers headers;
  if (options_.auth_token) headers.emplace("Authorization", "Bearer " + *options_.auth_token);

  auto backoff = options_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);

    const auto path = path_prefix_ + route;
    auto res = method == "GET" ? client.Get(path, headers)
                               : client.Post(path, headers, body, "application/json");
    std::string failure;
    bool retryable = true;
    if (!res) {
      failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      return res->body;
    } else {
      failure = "HTTP " + std::to_string(res->status) + ": " + res->body;
      retryable = res->status >= 500;
    }
    if (!retryable || attempt >= options_.max_retries)
      throw BackendError(options_.base_url + route + ": " + failure, retryable);
    spdlog::warn("{}{}: {} (retry {}/{})", options_.base_url, route, failure, attempt + 1,
                 options_.max_retries);
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

double RemoteBackend::cond_logprob(std::string_view prompt, std::string_view continuation) const {
  const json body = {{"prompt", prompt}, {"continuation", continuation}};
  const auto res = parse_response(request("POST", "/v1/cond_logprob", body.dump()), "/v1/cond_logprob");
  if (!res.contains("logprob")) throw BackendError("/v1/cond_logprob: missing 'logprob'", false);
  return checked_logprob(res["logprob"], "/v1/cond_logprob");
}

std::vector<double> RemoteBackend::cond_logprob_batch(std::span<const ScoreRequest> requests) const {
  std::vector<double> out;
  out.reserve(requests.size());
  const auto chunk = std::max<std::size_t>(1, options_.batch_size);
  for (std::size_t start = 0; start < requests.size(); start += chunk) {
    json reqs = json::array();
    const auto stop = std::min(requests.size(), start + chunk);
    for (std::size_t i = start; i < stop; ++i)
      reqs.push_back({{"prompt", requests[i].prompt}, {"continuation", requests[i].continuation}});
    const auto res = parse_response(request("POST", "/v1/cond_logprob_batch", json{{"requests", reqs}}.dump()),
                                    "/v1/cond_logprob_batch");
    const auto& lps = res.at("logprobs");
    if (!lps.is_array() || lps.size() != stop - start)
      throw BackendError("/v1/cond_logprob_batch: response not aligned with request", false);
    for (const auto& lp : lps) out.push_back(checked_logprob(lp, "/v1/cond_logprob_batch"));
  }
  return out;
}

Generation RemoteBackend::generate(std::string_view prompt, const DecodeConfig& cfg) const {
  if (!caps_.can_generate) throw CapabilityError("sidecar model '" + model_ + "' cannot generate");
  cfg.validate();
  json stops = json::array();
  for (char c : cfg.stop_chars) stops.push_back(std::string(1, c));
  const json body = {{"prompt", prompt},
                     {"beam_size", cfg.beam_size},
                     {"length_penalty", cfg.length_penalty},
                     {"stop_chars", stops},
                     {"max_tokens", cfg.max_tokens}};
  const auto res = parse_response(request("POST", "/v1/generate", body.dump()), "/v1/generate");
  return {res.at("text").get<std::string>(), res.at("score").get<double>()};
}

std::vector<std::vector<double>> RemoteBackend::embed(std::span<const std::string> texts,
                                                      std::span<const std::string> markers) const {
  if (!caps_.can_embed) throw CapabilityError("sidecar model '" + model_ + "' cannot embed");
  if (!markers.empty() && markers.size() != texts.size())
    throw ValidationError("markers must be order-aligned with texts");
  json body = {{"texts", json(std::vector<std::string>(texts.begin(), texts.end()))}};
  if (!markers.empty()) body["markers"] = std::vector<std::string>(markers.begin(), markers.end());
  const auto res = parse_response(request("POST", "/v1/embed", body.dump()), "/v1/embed");
  auto vectors = res.at("vectors").get<std::vector<std::vector<double>>>();
  if (vectors.size() != texts.size()) throw BackendError("/v1/embed: response not aligned with request", false);
  const auto dim = res.value("dim", vectors.empty() ? std::size_t{0} : vectors.front().size());
  for (const auto& v : vectors)
    if (v.size() != dim) throw BackendError("/v1/embed: vector dimension differs from 'dim'", false);
  if (dim_ && dim != *dim_) throw BackendError("/v1/embed: dimension differs from advertised", false);
  return vectors;
}

}  // namespace kcluster
