#include <benchmark/benchmark.h>

#include <random>

#include "kcluster/affinity_propagation.hpp"
#include "kcluster/afm.hpp"
#include "kcluster/congruity.hpp"
#include "kcluster/ngram_lm.hpp"
#include "kcluster/synthetic.hpp"

using namespace kcluster;

namespace {

AffinityMatrix random_matrix(std::size_t n, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("q" + std::to_string(i));
  AffinityMatrix m(std::move(ids), Metric::congruity);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, u(rng));
  return m;
}

void BM_AffinityPropagation(benchmark::State& state) {
  const auto m = random_matrix(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(cluster(m));
}
BENCHMARK(BM_AffinityPropagation)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_CongruityMatrix(benchmark::State& state) {
  const auto bank = synthetic_bank({8, 8, 8, 8, 8}, 3);
  const auto lm = NgramLanguageModel::from_bank(bank);
  const CongruityOptions opts{static_cast<std::size_t>(state.range(0)), 64};
  for (auto _ : state) benchmark::DoNotOptimize(congruity_matrix(bank, lm, opts));
}
BENCHMARK(BM_CongruityMatrix)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_FitAFM(benchmark::State& state) {
  const auto bank = synthetic_bank({8, 8, 8, 8, 8}, 5);
  const auto q = to_qmatrix(expert_kc_model(bank), bank);
  const auto sim = simulate_afm(bank, q, random_truth(static_cast<std::size_t>(state.range(0)), 5, 6), 7);
  const auto data = make_afm_data(sim.log, q);
  for (auto _ : state) benchmark::DoNotOptimize(fit_afm(data));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_FitAFM)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
