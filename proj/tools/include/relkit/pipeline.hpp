#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relkit/corpus.hpp"
#include "relkit/eval.hpp"
#include "relkit/trainer.hpp"

namespace relkit {

/// Settings for training on one fold from comparison pairs.
struct PcompRunConfig {
  EstimatorConfig estimator;
  TrainHyper hyper;
  double dev_fraction = 0.15;
  /// Pairs drawn per training fold; 0 means one per training record.
  std::size_t n_pairs = 0;
  std::string label_source = "gold";
};

struct PcompFoldResult {
  Metrics metrics;
  TrainedHead model;
  PairGeneration train_pairs;
};

/// Splits `train` into train/dev, draws comparison pairs on each part using
/// `labeler` (gold or frozen silver labels for every corpus record), trains,
/// and scores predictions on `test` against `golds`.
PcompFoldResult run_pcomp_fold(const FeatureMatrix& x, std::span<const Label> labeler,
                               std::span<const Label> golds, std::span<const std::size_t> train,
                               std::span<const std::size_t> test, const PcompRunConfig& cfg);

/// Comparison pairs over a subset of records, returned as corpus indices.
PointwiseSets pairs_on_subset(std::span<const Label> labeler,
                              std::span<const std::size_t> records, std::size_t n_pairs,
                              std::uint64_t seed, const std::string& label_source,
                              double pi_plus, PairGeneration* stats = nullptr);

}  // namespace relkit
