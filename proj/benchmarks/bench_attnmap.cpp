#include <benchmark/benchmark.h>

#include <random>

#include "relkit/attnmap.hpp"

using namespace relkit;

namespace {

AttentionRecord random_record(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::gamma_distribution<double> g(0.5, 1.0);
  AttentionRecord rec;
  rec.sentence_id = "bench";
  rec.layer = 10;
  rec.n = n;
  rec.weights.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (int j = 0; j < n; ++j) sum += rec.weights[static_cast<std::size_t>(i * n + j)] = g(gen);
    for (int j = 0; j < n; ++j) rec.weights[static_cast<std::size_t>(i * n + j)] /= sum;
  }
  rec.special_mask.assign(static_cast<std::size_t>(n), false);
  rec.special_mask.front() = rec.special_mask.back() = true;
  rec.tok_e1 = {1, 3};
  rec.tok_e2 = {n / 2, n / 2 + 2};
  return rec;
}

void BM_ContextDistribution(benchmark::State& state) {
  const AttentionRecord rec = random_record(static_cast<int>(state.range(0)), 1);
  const auto a1 = entity_attention(rec, rec.tok_e1);
  const auto a2 = entity_attention(rec, rec.tok_e2);
  for (auto _ : state) benchmark::DoNotOptimize(localized_context_distribution(a1, a2, &rec.special_mask));
}
BENCHMARK(BM_ContextDistribution)->Arg(32)->Arg(128)->Arg(512);

void BM_AttentionStatistic(benchmark::State& state) {
  const auto method = static_cast<AttnMethod>(state.range(0));
  const AttentionRecord rec = random_record(static_cast<int>(state.range(1)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(attention_statistic(method, rec));
}
BENCHMARK(BM_AttentionStatistic)
    ->ArgsProduct({{static_cast<long>(AttnMethod::kPicMI), static_cast<long>(AttnMethod::kPicMIUp),
                    static_cast<long>(AttnMethod::kConEx)},
                   {32, 128, 512}});

}  // namespace
