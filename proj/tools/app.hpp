#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcluster/afm.hpp"
#include "kcluster/discovery.hpp"
#include "kcluster/lm_backend.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster::app {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kBackendError = 3,
  kNotConverged = 4,
};

// "builtin" or "remote:<url>". The remote bearer token comes from
// KCLUSTER_REMOTE_TOKEN. A cache path wraps the backend in a JSONL cache.
BackendPtr make_backend(const std::string& spec, const std::optional<std::filesystem::path>& cache,
                        const QuestionBank& bank);

// A KC model file, or one of the built-in models @expert, @single, @unique.
KCModel resolve_kc_model(const std::string& spec, const QuestionBank& bank);

// CV seeds derived from the run seed.
std::vector<std::uint64_t> cv_seeds(std::uint64_t seed, std::size_t count);

struct PipelineConfig {
  std::filesystem::path bank;
  std::optional<std::filesystem::path> transactions;
  std::string backend = "builtin";
  std::optional<std::filesystem::path> cache;
  std::vector<Method> methods{Method::kcluster};
  DiscoveryOptions discovery;
  std::size_t folds = 3;
  std::size_t cv_seed_count = 50;
  bool first_attempt_only = false;
  bool strict = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  std::size_t max_opportunity = 20;
  std::filesystem::path out = "out";
};

// Writes, under cfg.out:
//   concepts.csv
//   <method>/affinity.csv, affinity.meta.json, assignment.json (clustering methods)
//   <method>/kc_model.csv
//   <method>/fit.json, cv.csv, curves/*.csv (with transactions)
//   <method>/metrics.json (when the bank carries expert KCs)
//   summary.json, summary.md (with transactions)
// Returns kNotConverged when cfg.strict and a clustering or fit did not converge.
int run_pipeline(const PipelineConfig& cfg);

// Full command line: `kcluster <subcommand> [options]`.
int run(int argc, const char* const* argv);

}  // namespace kcluster::app
