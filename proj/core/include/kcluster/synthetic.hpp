#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcluster/afm.hpp"
#include "kcluster/kc_model.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

struct AFMTruth {
  std::vector<double> theta;
  std::vector<double> beta;
  std::vector<double> gamma;
};

// theta ~ N(0, 1), beta ~ U(-1, 1), gamma ~ U(0.05, 0.3).
AFMTruth random_truth(std::size_t students, std::size_t kcs, std::uint64_t seed);

enum class AttemptOrder {
  shuffled,  // each student answers the bank in their own random order
  bank,      // everyone follows bank order
};

struct Simulation {
  TransactionLog log;
  std::vector<double> probability;  // true P(correct) per log row
};

// Every student answers every question once; outcomes drawn from the AFM
// with `truth` (columns of q index beta/gamma). Student ids are s001, s002...
Simulation simulate_afm(const QuestionBank& bank, const QMatrix& q, const AFMTruth& truth, std::uint64_t seed,
                        AttemptOrder order = AttemptOrder::shuffled);

// Multiple-choice questions whose wording is drawn from a vocabulary private
// to each KC; expert_kc is "kc-<k>". Question ids are "<kc>-q<i>".
QuestionBank synthetic_bank(const std::vector<std::size_t>& questions_per_kc, std::uint64_t seed);

// A log generated by a model in which one expert KC ("kc-merged") is really
// two skills: an easy one always practiced first and a hard one practiced
// after it. The bank's expert labels merge them; `true_model` splits them.
struct SplitScenario {
  QuestionBank bank;
  KCModel merged_model;  // expert labels
  KCModel true_model;    // generating labels
  std::string merged_kc;
  Simulation simulation;
};

SplitScenario split_kc_scenario(std::size_t students, std::uint64_t seed);

}  // namespace kcluster
