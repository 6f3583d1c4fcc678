// Simulated student transactions for a question bank, drawn from the AFM
// with random parameters and the bank's expert KCs.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "kcluster/error.hpp"
#include "kcluster/kc_model.hpp"
#include "kcluster/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Generate a synthetic transaction log", "kcluster-synth"};
  std::string bank_path, out_path;
  std::size_t students = 50;
  std::uint64_t seed = 0;
  std::string order = "shuffled";
  cli.add_option("--bank", bank_path, "Question bank with expert_kc on every question")
      ->required()
      ->check(CLI::ExistingFile);
  cli.add_option("--students", students, "Number of students")->capture_default_str();
  cli.add_option("--seed", seed, "Random seed")->capture_default_str();
  cli.add_option("--order", order, "shuffled or bank")
      ->check(CLI::IsMember({"shuffled", "bank"}))
      ->capture_default_str();
  cli.add_option("--out", out_path, "Transactions CSV")->required();
  CLI11_PARSE(cli, argc, argv);

  try {
    const auto bank = kcluster::load_bank(bank_path);
    const auto q = kcluster::to_qmatrix(kcluster::expert_kc_model(bank), bank);
    const auto truth = kcluster::random_truth(students, q.kc_count(), seed);
    const auto sim = kcluster::simulate_afm(bank, q, truth, seed,
                                            order == "bank" ? kcluster::AttemptOrder::bank
                                                            : kcluster::AttemptOrder::shuffled);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw kcluster::Error("cannot write " + out_path);
    kcluster::write_transactions(out, sim.log);
    fmt::print("{} students x {} questions, {} KCs\n", students, bank.size(), q.kc_count());
  } catch (const kcluster::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
