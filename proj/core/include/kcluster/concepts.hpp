#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "kcluster/lm_backend.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

struct ConceptLabel {
  std::string question_id;
  std::string label;  // lowercased, trimmed, free of stop characters
  double score = 0.0;

  bool operator==(const ConceptLabel&) const = default;
};

// "Exercise 1:\n" + render(q) + "\nRemark:\nThe above exercise is a <kind>
// question that tests whether the student understands the concept of"
// where <kind> is the question type in lowercase with spaces hyphenated
// ("Multiple Choice" -> "multiple-choice"). Generation continues from the
// end of this text.
std::string concept_prompt(const Question& q);

// Beam of five, stop at '.' or ','.
DecodeConfig default_concept_decoding();

// With an instruction-following backend this prompts and decodes. Backends
// that expose corpus statistics (the builtin LM) instead return the stem's
// highest tf-idf key phrase: a deterministic stand-in that keeps the whole
// pipeline runnable offline, not a model of LLM behavior.
ConceptLabel extract_concept(const Question& q, const ScoringBackend& backend,
                             const DecodeConfig& cfg = default_concept_decoding());

// Labels aligned with bank positions.
class ConceptSet {
 public:
  ConceptSet() = default;
  explicit ConceptSet(std::vector<ConceptLabel> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const ConceptLabel& operator[](std::size_t i) const { return labels_[i]; }
  const ConceptLabel& at(std::string_view question_id) const;
  bool contains(std::string_view question_id) const;
  const std::vector<ConceptLabel>& labels() const noexcept { return labels_; }

  bool operator==(const ConceptSet& other) const { return labels_ == other.labels_; }

 private:
  std::vector<ConceptLabel> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One label per question, extracted with up to `jobs` in flight. Failed
// questions are retried once; remaining failures are reported together.
ConceptSet extract_all(const QuestionBank& bank, const ScoringBackend& backend,
                       const DecodeConfig& cfg = default_concept_decoding(), std::size_t jobs = 1);

// The Concept KC model: every distinct label string is its own KC.
KCModel concept_kc_model(const ConceptSet& concepts, const QuestionBank& bank, std::string name = "Concept");

// CSV with header question_id,concept,score.
void save_concepts(const std::filesystem::path& path, const ConceptSet& concepts);
ConceptSet load_concepts(const std::filesystem::path& path, const QuestionBank& bank);

}  // namespace kcluster
