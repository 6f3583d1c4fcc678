#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "kcluster/affinity_matrix.hpp"
#include "kcluster/affinity_propagation.hpp"
#include "kcluster/concepts.hpp"
#include "kcluster/congruity.hpp"
#include "kcluster/lm_backend.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

// concept: each distinct concept string is a KC.
// concept-emb: cluster concept embeddings by negative cosine.
// question-emb: cluster question embeddings by negative cosine.
// kcluster: cluster questions by congruity.
enum class Method { concept_string, concept_emb, question_emb, kcluster };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
// Display name used for KC models: "Concept", "Concept-emb", "Question-emb", "KCluster".
std::string_view method_title(Method m);

struct DiscoveryOptions {
  APParams ap;
  bool merge_duplicate_labels = false;
  std::size_t jobs = 1;
  DecodeConfig decode = default_concept_decoding();
  std::size_t batch_size = 64;
};

struct Discovery {
  ConceptSet concepts;
  std::optional<AffinityMatrix> affinity;
  std::optional<ClusterAssignment> assignment;
  KCModel model;
};

// Runs one method end to end. Concepts are extracted unless supplied.
Discovery discover(const QuestionBank& bank, const ScoringBackend& backend, Method method,
                   const DiscoveryOptions& options = {}, const ConceptSet* concepts = nullptr);

// Affinity for a clustering method; throws ValidationError for concept.
AffinityMatrix method_affinity(const QuestionBank& bank, const ScoringBackend& backend, Method method,
                               const ConceptSet& concepts, const DiscoveryOptions& options);

}  // namespace kcluster
