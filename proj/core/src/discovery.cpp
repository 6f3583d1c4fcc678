#include "kcluster/discovery.hpp"

#include <array>

#include "kcluster/embeddings.hpp"
#include "kcluster/error.hpp"
#include "kcluster/kc_model.hpp"

namespace kcluster {

namespace {

struct MethodInfo {
  Method method;
  std::string_view name;
  std::string_view title;
};

constexpr std::array kMethods{
    MethodInfo{Method::concept_string, "concept", "Concept"},
    MethodInfo{Method::concept_emb, "concept-emb", "Concept-emb"},
    MethodInfo{Method::question_emb, "question-emb", "Question-emb"},
    MethodInfo{Method::kcluster, "kcluster", "KCluster"},
};

const MethodInfo& info(Method m) {
  for (const auto& i : kMethods)
    if (i.method == m) return i;
  throw ValidationError("unknown method");
}

}  // namespace

std::string_view method_name(Method m) { return info(m).name; }
std::string_view method_title(Method m) { return info(m).title; }

Method parse_method(std::string_view name) {
  for (const auto& i : kMethods)
    if (i.name == name) return i.method;
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected concept, concept-emb, question-emb or kcluster)");
}

AffinityMatrix method_affinity(const QuestionBank& bank, const ScoringBackend& backend, Method method,
                               const ConceptSet& concepts, const DiscoveryOptions& options) {
  switch (method) {
    case Method::concept_emb:
      return embedding_affinity(concept_embeddings(concepts, backend));
    case Method::question_emb:
      return embedding_affinity(question_embeddings(bank, backend));
    case Method::kcluster:
      return congruity_matrix(bank, backend, {options.jobs, options.batch_size});
    case Method::concept_string:
      break;
  }
  throw ValidationError("the concept method does not cluster");
}

Discovery discover(const QuestionBank& bank, const ScoringBackend& backend, Method method,
                   const DiscoveryOptions& options, const ConceptSet* concepts) {
  Discovery out;
  out.concepts = concepts ? *concepts : extract_all(bank, backend, options.decode, options.jobs);
  const std::string title(method_title(method));
  if (method == Method::concept_string) {
    out.model = concept_kc_model(out.concepts, bank, title);
    return out;
  }
  out.affinity = method_affinity(bank, backend, method, out.concepts, options);
  out.assignment = cluster(*out.affinity, options.ap);
  out.model = from_clusters(*out.assignment, out.concepts, options.merge_duplicate_labels, title);
  return out;
}

}  // namespace kcluster
