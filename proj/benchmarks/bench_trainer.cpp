#include <benchmark/benchmark.h>

#include <random>

#include "relkit/pairgen.hpp"
#include "relkit/trainer.hpp"

using namespace relkit;

namespace {

struct Data {
  FeatureMatrix x;
  PointwiseSets sets;
};

Data make_data(std::size_t n, std::size_t dim) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd(0, 1);
  Data d;
  d.x = FeatureMatrix(n, dim);
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 2 ? Label::kPositive : Label::kNegative;
    for (std::size_t j = 0; j < dim; ++j) d.x.data[i * dim + j] = nd(gen) + 0.5 * to_int(y[i]);
  }
  d.sets = split_pointwise(generate_pairs(y, n, 3).pairs);
  return d;
}

void BM_TrainEpoch(benchmark::State& state) {
  const auto method = static_cast<Estimator>(state.range(0));
  const Data d = make_data(4096, static_cast<std::size_t>(state.range(1)));
  EstimatorConfig cfg;
  cfg.method = method;
  cfg.pi_plus = 0.5;
  if (method == Estimator::kUU) cfg.uu_thetas = std::make_pair(2.0 / 3, 1.0 / 3);
  TrainHyper hyper;
  hyper.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(d.sets, d.x, cfg, hyper));
  state.SetItemsProcessed(state.iterations() * 2 * 4096);
}
BENCHMARK(BM_TrainEpoch)
    ->ArgsProduct({{static_cast<long>(Estimator::kPcompUnbiased), static_cast<long>(Estimator::kPcompABS),
                    static_cast<long>(Estimator::kNoisyUnbiased), static_cast<long>(Estimator::kPcompTeacher)},
                   {2, 768}})
    ->Unit(benchmark::kMillisecond);

void BM_Objective(benchmark::State& state) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0, 2);
  std::vector<double> p(256), n(256);
  for (auto& v : p) v = nd(gen);
  for (auto& v : n) v = nd(gen);
  EstimatorConfig cfg;
  cfg.method = static_cast<Estimator>(state.range(0));
  cfg.pi_plus = 0.4;
  cfg.uu_thetas = std::make_pair(0.7, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(objective(cfg, p, n));
}
BENCHMARK(BM_Objective)->DenseRange(0, static_cast<int>(Estimator::kNoisyUnbiased));

}  // namespace
