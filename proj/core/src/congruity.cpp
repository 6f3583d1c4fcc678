#include "kcluster/congruity.hpp"

#include "kcluster/error.hpp"
#include "kcluster/parallel.hpp"

namespace kcluster {

PromptPair conditional_prompt(const Question& target, const Question& source) {
  std::string prompt(kFirstExerciseMarker);
  prompt += render_question(target);
  prompt += '\n';
  prompt += kSecondExerciseMarker;
  return {std::move(prompt), render_question(source)};
}

PromptPair marginal_prompt(const Question& source) {
  return {std::string(kSecondExerciseMarker), render_question(source)};
}

double delta(const Question& source, const Question& target, const ScoringBackend& backend) {
  if (source.id == target.id) throw ValidationError("delta of question '" + source.id + "' with itself");
  const auto cond = conditional_prompt(target, source);
  const auto marg = marginal_prompt(source);
  return backend.cond_logprob(cond.prompt, cond.continuation) -
         backend.cond_logprob(marg.prompt, marg.continuation);
}

double congruity(const Question& a, const Question& b, const ScoringBackend& backend) {
  return 0.5 * (delta(a, b, backend) + delta(b, a, backend));
}

namespace {

std::vector<double> score_all(const std::vector<ScoreRequest>& requests, const ScoringBackend& backend,
                              const CongruityOptions& options) {
  std::vector<double> out(requests.size());
  const auto batch = std::max<std::size_t>(1, options.batch_size);
  const auto n_batches = (requests.size() + batch - 1) / batch;
  parallel_for(n_batches, options.jobs, [&](std::size_t b) {
    const auto begin = b * batch;
    const auto count = std::min(batch, requests.size() - begin);
    const auto scores = backend.cond_logprob_batch(std::span(requests).subspan(begin, count));
    if (scores.size() != count) throw BackendError("batch response size mismatch", false);
    std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  return out;
}

}  // namespace

AffinityMatrix congruity_matrix(const QuestionBank& bank, const ScoringBackend& backend,
                                const CongruityOptions& options) {
  const auto n = bank.size();
  if (n < 2) throw ValidationError("congruity matrix needs at least 2 questions");

  std::vector<ScoreRequest> marginals;
  marginals.reserve(n);
  for (const auto& q : bank) {
    auto p = marginal_prompt(q);
    marginals.push_back({std::move(p.prompt), std::move(p.continuation)});
  }
  const auto marginal_lp = score_all(marginals, backend, options);

  // Directed pairs (s, t), s != t, in row-major order.
  std::vector<ScoreRequest> conditionals;
  conditionals.reserve(n * (n - 1));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t) {
      if (s == t) continue;
      auto p = conditional_prompt(bank[t], bank[s]);
      conditionals.push_back({std::move(p.prompt), std::move(p.continuation)});
    }
  const auto conditional_lp = score_all(conditionals, backend, options);

  auto directed = [&](std::size_t s, std::size_t t) {
    const auto k = s * (n - 1) + (t < s ? t : t - 1);
    return conditional_lp[k] - marginal_lp[s];
  };

  AffinityMatrix m(bank.ids(), Metric::congruity);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = s + 1; t < n; ++t) m.set(s, t, 0.5 * (directed(s, t) + directed(t, s)));
  m.validate();
  return m;
}

}  // namespace kcluster
