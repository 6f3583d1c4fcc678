#include "kcluster/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <array>
#include <random>

#include <fmt/format.h>

#include "kcluster/error.hpp"
#include "kcluster/rng.hpp"

namespace kcluster {

namespace {

double normal(std::mt19937_64& rng) {
  // Box-Muller; 1 - u keeps the logarithm finite.
  const double u = 1.0 - uniform01(rng), v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Ten-word vocabularies, one per KC, cycling with a numeric suffix past the
// last list so any KC count works.
const std::vector<std::vector<std::string>>& vocabularies() {
  static const std::vector<std::vector<std::string>> v{
      {"copper", "voltage", "circuit", "battery", "resistor", "current", "wire", "switch", "bulb", "ohm"},
      {"glacier", "erosion", "sediment", "canyon", "river", "delta", "boulder", "silt", "valley", "rainfall"},
      {"triangle", "angle", "vertex", "hypotenuse", "polygon", "degree", "side", "square", "perimeter", "area"},
      {"enzyme", "protein", "membrane", "nucleus", "cell", "organelle", "ribosome", "tissue", "gene", "molecule"},
      {"sonnet", "stanza", "rhyme", "metaphor", "poem", "verse", "meter", "poet", "simile", "couplet"},
      {"orbit", "planet", "comet", "asteroid", "galaxy", "telescope", "moon", "star", "eclipse", "meteor"},
      {"tariff", "export", "market", "price", "demand", "supply", "trade", "currency", "profit", "budget"},
      {"violin", "melody", "rhythm", "chord", "tempo", "harmony", "drum", "flute", "octave", "scale"},
  };
  return v;
}

std::string word(std::size_t kc, std::size_t i) {
  const auto& v = vocabularies();
  const auto& list = v[kc % v.size()];
  const auto w = list[i % list.size()];
  return kc < v.size() ? w : fmt::format("{}{}", w, kc / v.size());
}

}  // namespace

AFMTruth random_truth(std::size_t students, std::size_t kcs, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 1));
  AFMTruth t;
  for (std::size_t s = 0; s < students; ++s) t.theta.push_back(normal(rng));
  for (std::size_t k = 0; k < kcs; ++k) {
    t.beta.push_back(uniform(rng, -1.0, 1.0));
    t.gamma.push_back(uniform(rng, 0.05, 0.3));
  }
  return t;
}

Simulation simulate_afm(const QuestionBank& bank, const QMatrix& q, const AFMTruth& truth, std::uint64_t seed,
                        AttemptOrder order) {
  if (q.question_ids() != bank.ids()) throw ValidationError("Q-matrix does not match the bank");
  if (truth.beta.size() != q.kc_count() || truth.gamma.size() != q.kc_count())
    throw ValidationError("truth has the wrong number of KCs");
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::vector<Transaction> rows;
  std::vector<std::size_t> positions(bank.size());
  for (std::size_t s = 0; s < truth.theta.size(); ++s) {
    for (std::size_t j = 0; j < positions.size(); ++j) positions[j] = j;
    if (order == AttemptOrder::shuffled) shuffle(std::span(positions), rng);
    for (std::size_t i = 0; i < positions.size(); ++i)
      rows.push_back({fmt::format("s{:03}", s + 1), bank[positions[i]].id, static_cast<std::int64_t>(i + 1), 0, 0, 0});
  }
  // Outcomes need opportunity counts, which need the ordered log.
  TransactionLog draft(rows, bank);
  const auto table = opportunity_counts(draft, q);
  Simulation sim;
  const auto draft_rows = draft.transactions();
  std::vector<Transaction> final_rows(draft_rows.begin(), draft_rows.end());
  for (std::size_t r = 0; r < final_rows.size(); ++r) {
    double z = truth.theta[final_rows[r].student];
    for (const auto& o : table.row(r)) z += truth.beta[o.kc] + truth.gamma[o.kc] * static_cast<double>(o.count);
    const double p = 1.0 / (1.0 + std::exp(-z));
    final_rows[r].outcome = uniform01(rng) < p ? 1 : 0;
    sim.probability.push_back(p);
  }
  sim.log = TransactionLog(std::move(final_rows), bank);
  return sim;
}

QuestionBank synthetic_bank(const std::vector<std::size_t>& questions_per_kc, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::vector<Question> out;
  for (std::size_t k = 0; k < questions_per_kc.size(); ++k) {
    for (std::size_t i = 0; i < questions_per_kc[k]; ++i) {
      auto pick = [&] { return word(k, bounded(rng, 10)); };
      Question q;
      q.id = fmt::format("kc-{}-q{}", k + 1, i + 1);
      q.qtype = "Multiple Choice";
      q.stem = fmt::format("Which {} best describes the {} of the {}?", pick(), pick(), pick());
      const std::array<std::string, 3> labels{"a", "b", "c"};
      for (const auto& l : labels) q.choices.push_back({l, pick() + " " + pick()});
      // Distinct choice texts keep the question valid and readable.
      for (std::size_t c = 1; c < q.choices.size(); ++c) q.choices[c].text += fmt::format(" {}", c + 1);
      q.answer_label = labels[bounded(rng, labels.size())];
      q.expert_kc = fmt::format("kc-{}", k + 1);
      out.push_back(std::move(q));
    }
  }
  return QuestionBank(std::move(out));
}

SplitScenario split_kc_scenario(std::size_t students, std::uint64_t seed) {
  // Four ordinary KCs of 8 questions, then the two hidden halves of the
  // merged KC, 8 questions each.
  auto base = synthetic_bank({8, 8, 8, 8, 8, 8}, seed);
  std::vector<Question> qs(base.begin(), base.end());
  std::vector<std::string> true_labels;
  for (auto& q : qs) {
    if (*q.expert_kc == "kc-5" || *q.expert_kc == "kc-6") {
      true_labels.push_back(*q.expert_kc == "kc-5" ? "merged-easy" : "merged-hard");
      q.expert_kc = "kc-merged";
    } else {
      true_labels.push_back(*q.expert_kc);
    }
  }
  SplitScenario sc;
  sc.bank = QuestionBank(std::move(qs));
  sc.merged_kc = "kc-merged";
  sc.merged_model = expert_kc_model(sc.bank, "Expert");
  sc.true_model = make_kc_model("True", sc.bank, true_labels);

  const auto q = to_qmatrix(sc.true_model, sc.bank);
  AFMTruth truth = random_truth(students, q.kc_count(), seed);
  truth.beta = {-0.5, 0.6, 0.0, 0.9, 1.6, -1.6};
  truth.gamma = {0.2, 0.15, 0.25, 0.1, 0.05, 0.05};
  // Bank order puts every easy question before every hard one.
  sc.simulation = simulate_afm(sc.bank, q, truth, seed, AttemptOrder::bank);
  return sc;
}

}  // namespace kcluster
