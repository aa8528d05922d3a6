// Microbenchmarks for the hot paths: mask sampling, the local recursion,
// aggregation, histogram filtering, and the pooled quantile.

#include <benchmark/benchmark.h>

#include <prism/conformal.hpp>
#include <prism/datagen.hpp>
#include <prism/robust_calib.hpp>
#include <prism/training.hpp>

using namespace prism;

namespace {

void BM_SampleMask(benchmark::State& state) {
  Rng rng(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(training::sample_mask(50, static_cast<int>(state.range(0)), rng));
}
BENCHMARK(BM_SampleMask)->Arg(15)->Arg(50);

void BM_LocalStep(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(2);
  training::ClientState client;
  client.local_model = ModelVector::Zero(dim);
  client.last_mask = training::sample_mask(dim, dim / 3, rng);
  training::GlobalState global;
  global.global_model = ModelVector::Random(dim);
  Sample s;
  s.features = ModelVector::Random(dim);
  s.target = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(training::local_step(client, global, s, 0.05));
}
BENCHMARK(BM_LocalStep)->Arg(50)->Arg(81);

void BM_Aggregate(benchmark::State& state) {
  const int dim = 50, participants = 10;
  Rng rng(3);
  training::GlobalState prev;
  prev.global_model = ModelVector::Random(dim);
  std::vector<training::MaskedUpdate> ups;
  for (int k = 0; k < participants; ++k) {
    training::MaskedUpdate u;
    u.client_id = k;
    u.mask = training::sample_mask(dim, 15, rng);
    for (std::size_t i = 0; i < 15; ++i) u.values.push_back(rng.gaussian());
    ups.push_back(std::move(u));
  }
  for (auto _ : state) benchmark::DoNotOptimize(training::aggregate(prev, ups));
}
BENCHMARK(BM_Aggregate);

void BM_TrainingRound(benchmark::State& state) {
  training::TrainingConfig cfg;
  cfg.n_iterations = 1;
  Rng setup(4);
  datagen::SyntheticConfig syn;
  const ModelVector w_star = datagen::generate_true_weights(syn, setup);
  const auto profiles = datagen::draw_client_profiles(syn, cfg.n_clients, setup);
  Rng data_rng(5);
  auto stream = [&](int k) {
    return datagen::next_sample(profiles[static_cast<std::size_t>(k)], w_star, data_rng);
  };
  for (auto _ : state) {
    auto clients = training::make_clients(cfg, 20);
    benchmark::DoNotOptimize(training::run_training(
        cfg, clients, stream, attacks::TrainingAttackConfig{0.25, 0.1}, w_star, Rng(6)));
  }
}
BENCHMARK(BM_TrainingRound);

void BM_Characterize(benchmark::State& state) {
  Rng rng(7);
  conformal::ScoreSet scores;
  for (int i = 0; i < 1000; ++i) scores.scores.push_back(std::abs(rng.gaussian()));
  const auto spec = robust_calib::HistogramSpec::uniform(100, 2.5);
  for (auto _ : state) benchmark::DoNotOptimize(robust_calib::characterize(scores, spec));
}
BENCHMARK(BM_Characterize);

void BM_PairwiseAndFilter(benchmark::State& state) {
  Rng rng(8);
  std::vector<robust_calib::CharacterizationVector> vs(100);
  for (auto& v : vs) {
    v.mass.resize(100);
    double sum = 0.0;
    for (auto& m : v.mass) {
      m = rng.uniform(0.0, 1.0);
      sum += m;
    }
    for (auto& m : v.mass) m /= sum;
  }
  for (auto _ : state) {
    const auto d = robust_calib::pairwise_distances(vs);
    const auto m = robust_calib::maliciousness_scores(d, 80);
    benchmark::DoNotOptimize(robust_calib::filter_top_b(m, 20));
  }
}
BENCHMARK(BM_PairwiseAndFilter);

void BM_ConformalQuantile(benchmark::State& state) {
  Rng rng(9);
  std::vector<double> pool;
  for (int i = 0; i < 100000; ++i) pool.push_back(std::abs(rng.gaussian()));
  for (auto _ : state) benchmark::DoNotOptimize(conformal::conformal_quantile(pool, 0.1));
}
BENCHMARK(BM_ConformalQuantile);

}  // namespace

BENCHMARK_MAIN();
