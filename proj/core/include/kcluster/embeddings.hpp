#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kcluster/affinity_matrix.hpp"
#include "kcluster/concepts.hpp"
#include "kcluster/lm_backend.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

enum class EmbeddingSource { concepts, questions };

struct EmbeddingSet {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;
  EmbeddingSource source = EmbeddingSource::questions;

  std::size_t dim() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }
  // Uniform dimension, finite entries, no zero vectors.
  void validate() const;
};

// cos(x, y) - 1, in [-2, 0].
double neg_cos(std::span<const double> x, std::span<const double> y);

AffinityMatrix embedding_affinity(const EmbeddingSet& emb);

// Each question framed as "Exercise 1:\n" + render(q); only the rendered
// question is pooled, the marker only conditions the model.
EmbeddingSet question_embeddings(const QuestionBank& bank, const ScoringBackend& backend);

// One vector per question: the embedding of its concept label.
EmbeddingSet concept_embeddings(const ConceptSet& concepts, const ScoringBackend& backend);

// Writes <stem>.json (ids, dim, source, dtype), <stem>.bin (float32
// little-endian, row-major, N x dim) and <stem>.csv (id,v0..v{dim-1}).
void save_embeddings(const std::filesystem::path& stem, const EmbeddingSet& emb);
EmbeddingSet load_embeddings(const std::filesystem::path& stem);

}  // namespace kcluster
