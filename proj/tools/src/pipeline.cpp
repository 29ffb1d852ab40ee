#include "relkit/pipeline.hpp"

namespace relkit {

PointwiseSets pairs_on_subset(std::span<const Label> labeler,
                              std::span<const std::size_t> records, std::size_t n_pairs,
                              std::uint64_t seed, const std::string& label_source,
                              double pi_plus, PairGeneration* stats) {
  std::vector<Label> sub;
  sub.reserve(records.size());
  for (std::size_t r : records) sub.push_back(labeler[r]);
  PairGeneration gen = generate_pairs(sub, n_pairs, seed);
  for (auto& p : gen.pairs) {
    p.first = records[p.first];
    p.second = records[p.second];
  }
  PointwiseSets sets = split_pointwise(gen.pairs, label_source, pi_plus);
  if (stats) *stats = std::move(gen);
  return sets;
}

PcompFoldResult run_pcomp_fold(const FeatureMatrix& x, std::span<const Label> labeler,
                               std::span<const Label> golds, std::span<const std::size_t> train,
                               std::span<const std::size_t> test, const PcompRunConfig& cfg) {
  if (labeler.size() != x.rows || golds.size() != x.rows) {
    throw std::invalid_argument("run_pcomp_fold: label vectors must cover every feature row");
  }
  const std::uint64_t seed = cfg.estimator.seed;
  const TrainDevSplit split = split_train_dev(train, cfg.dev_fraction, seed);
  const std::size_t n_train_pairs = cfg.n_pairs ? cfg.n_pairs : split.train.size();

  PcompFoldResult out;
  const PointwiseSets sets =
      pairs_on_subset(labeler, split.train, n_train_pairs, seed + 1, cfg.label_source,
                      cfg.estimator.pi_plus, &out.train_pairs);
  DevData dev;
  dev.sets = pairs_on_subset(labeler, split.dev, split.dev.size(), seed + 2, cfg.label_source,
                             cfg.estimator.pi_plus);
  dev.rows = split.dev;
  for (std::size_t r : split.dev) dev.labels.push_back(labeler[r]);

  out.model = relkit::train(sets, x, cfg.estimator, cfg.hyper, &dev);
  const auto preds = predict(out.model, x, test);
  std::vector<Label> gold_test;
  gold_test.reserve(test.size());
  for (std::size_t r : test) gold_test.push_back(golds[r]);
  out.metrics = score(preds, gold_test);
  return out;
}

}  // namespace relkit
