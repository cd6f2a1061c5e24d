// Microbenchmarks for the hot paths: the featurizer, one training step, batch
// allocation, and the ADC formula. Run the binary directly; it is not wired
// into ctest.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "prefconflict/conflict.hpp"
#include "prefconflict/corpus.hpp"
#include "prefconflict/reward_model.hpp"
#include "prefconflict/rng.hpp"
#include "prefconflict/sampler.hpp"

using namespace prefconflict;

namespace {

corpus::PreferenceDataset bench_dataset() {
  corpus::SyntheticConfig cfg;
  cfg.n_dims = 4;
  cfg.pairs_per_dim = {256, 256, 256, 256};
  cfg.seed = 1;
  return corpus::generate_synthetic(cfg);
}

void BM_featurize(benchmark::State& state) {
  const reward::Featurizer f{static_cast<int>(state.range(0)), 7};
  const auto ds = bench_dataset();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& p = ds.pairs[i++ % ds.pairs.size()];
    benchmark::DoNotOptimize(reward::featurize(f, p.prompt, p.chosen));
  }
}
BENCHMARK(BM_featurize)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 18);

void BM_train_step(benchmark::State& state) {
  const auto ds = bench_dataset();
  reward::RewardModel model = reward::make_model(reward::Featurizer{1 << 14, 7});
  reward::PairRefs refs;
  for (const auto& p : ds.pairs) refs.push_back(&p);
  const int batch = static_cast<int>(state.range(0));
  reward::TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = batch;
  std::size_t cursor = 0;
  const reward::BatchStream stream = [&](int, const reward::RewardModel&) {
    reward::Batch out;
    for (int k = 0; k < batch; ++k) out.push_back(refs[cursor++ % refs.size()]);
    return out;
  };
  for (auto _ : state) {
    model = reward::train(model, stream, cfg);
    benchmark::DoNotOptimize(model.weights.data());
  }
}
BENCHMARK(BM_train_step)->Arg(32)->Arg(128);

void BM_allocate_batch(benchmark::State& state) {
  sampler::SamplerState st = sampler::init_uniform(6);
  st.lambdas = {0.30, 0.25, 0.20, 0.15, 0.07, 0.03};
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler::allocate_batch(st, 128, seed++));
  }
}
BENCHMARK(BM_allocate_batch);

void BM_compute_adc(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  conflict::DeviationMatrix m;
  Rng rng(5);
  m.base_accuracy.assign(n, 50.0);
  for (int i = 0; i < n; ++i) {
    m.dimensions.push_back("d" + std::to_string(i));
    std::vector<double> row(n);
    for (auto& v : row) v = 40.0 + 20.0 * rng.uniform01();
    m.finetuned.push_back(std::move(row));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(conflict::compute_adc(m));
  }
}
BENCHMARK(BM_compute_adc)->Arg(6)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
