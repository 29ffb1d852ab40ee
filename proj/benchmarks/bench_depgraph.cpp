#include <benchmark/benchmark.h>

#include <random>

#include "relkit/depgraph.hpp"

using namespace relkit;

namespace {

// Random recursive tree: token i attaches to a uniformly chosen earlier token.
DepTree random_tree(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<DepNode> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& node = nodes[static_cast<std::size_t>(i)];
    node.form = "w" + std::to_string(i);
    node.upos = i % 7 == 3 ? "CCONJ" : "NOUN";
    node.deprel = "dep";
    node.head = i == 0 ? kRootHead : std::uniform_int_distribution<int>(0, i - 1)(gen);
  }
  return DepTree("bench", std::move(nodes));
}

void BM_ShortestDependencyPath(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const DepTree tree = random_tree(n, 1);
  const TokenSpan e1{1, 2}, e2{n - 3, n - 2};
  for (auto _ : state) benchmark::DoNotOptimize(shortest_dependency_path(tree, e1, e2));
}
BENCHMARK(BM_ShortestDependencyPath)->Arg(16)->Arg(64)->Arg(256);

void BM_SardPredict(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const DepTree tree = random_tree(n, 2);
  const SardConfig cfg = SardConfig::from_ids(3, 2, ConjunctionMode::kUpos);
  const TokenSpan e1{1, 2}, e2{n - 3, n - 2};
  for (auto _ : state) benchmark::DoNotOptimize(sard_predict(tree, e1, e2, cfg));
}
BENCHMARK(BM_SardPredict)->Arg(16)->Arg(64)->Arg(256);

}  // namespace
