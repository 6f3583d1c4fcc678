#pragma once

#include <string>

#include "kcluster/affinity_matrix.hpp"
#include "kcluster/lm_backend.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

struct PromptPair {
  std::string prompt;
  std::string continuation;
};

inline constexpr std::string_view kFirstExerciseMarker = "Exercise 1:\n";
inline constexpr std::string_view kSecondExerciseMarker = "Exercise 2:\n";

// Scores log Pr(source | target):
//   prompt       = "Exercise 1:\n" + render(target) + "\nExercise 2:\n"
//   continuation = render(source)
PromptPair conditional_prompt(const Question& target, const Question& source);

// Scores log Pr(source) with the minimal prompt "Exercise 2:\n" and the same
// continuation bytes as conditional_prompt(., source).
PromptPair marginal_prompt(const Question& source);

// Gain in log-probability of `source` when `target` precedes it:
//   delta(s, t) = log Pr(s | t) - log Pr(s)
double delta(const Question& source, const Question& target, const ScoringBackend& backend);

// 0.5 * (delta(a, b) + delta(b, a)); symmetric in its arguments.
double congruity(const Question& a, const Question& b, const ScoringBackend& backend);

struct CongruityOptions {
  std::size_t jobs = 1;        // concurrent scoring batches
  std::size_t batch_size = 64;  // requests per backend batch call
};

// Full pairwise congruity matrix. Marginals are scored once per question
// (N requests) and every ordered pair once (N(N-1) requests); the diagonal
// is never scored.
AffinityMatrix congruity_matrix(const QuestionBank& bank, const ScoringBackend& backend,
                                const CongruityOptions& options = {});

}  // namespace kcluster
