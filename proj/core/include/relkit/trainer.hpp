#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relkit/estimators.hpp"
#include "relkit/head.hpp"
#include "relkit/pairgen.hpp"

namespace relkit {

struct TrainHyper {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  int epochs = 50;
  double dropout = 0.3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Held-out data for epoch selection. `sets` are pointwise sets built from
/// dev-record pairs; `rows`/`labels` are dev records labelled by the same
/// source that labelled the training pairs (may be empty).
struct DevData {
  PointwiseSets sets;
  std::vector<std::size_t> rows;
  std::vector<Label> labels;

  bool has_labels() const { return !rows.empty(); }
};

struct EpochLog {
  int epoch = 0;
  double train_risk = 0.0;
  std::optional<double> dev_criterion;
  std::string criterion;  // "dev_risk", "dev_f1" or "none"
};

struct RankPruneResult {
  PointwiseSets sets;
  double weight_pos = 1.0;
  double weight_neg = 1.0;
  NoiseRates rates;
  std::size_t pruned_pos = 0;
  std::size_t pruned_neg = 0;
};

struct TrainedHead {
  LinearHead head;
  EstimatorConfig config;
  TrainHyper hyper;
  int selected_epoch = 0;
  std::vector<EpochLog> log;
  std::optional<RankPruneResult> pruning;
};

/// Value and parameter gradient of the configured objective on one batch,
/// evaluated with a train-mode forward pass.
struct BatchObjective {
  double value = 0.0;
  HeadGradient grad;
  std::vector<double> scores;  // pos rows then neg rows
};

BatchObjective evaluate_batch(const LinearHead& head, const FeatureMatrix& x,
                              std::span<const std::size_t> pos_rows,
                              std::span<const std::size_t> neg_rows, const EstimatorConfig& cfg,
                              const ObjectiveContext& ctx, Rng& rng);

/// Minimises the configured estimator over the pointwise sets. Rank pruning
/// and pcomp_teacher prune the sets first.
TrainedHead train(const PointwiseSets& sets, const FeatureMatrix& x, const EstimatorConfig& cfg,
                  const TrainHyper& hyper, const DevData* dev = nullptr);

std::vector<Label> predict(const TrainedHead& model, const FeatureMatrix& x,
                           std::span<const std::size_t> rows);

/// Indices (into `probs`) of the floor(eta * n) members to prune: the lowest
/// probabilities when `drop_lowest`, else the highest. Ties keep the earlier
/// index. Throws DataError if every member would be pruned.
std::vector<std::size_t> prune_by_probability(std::span<const double> probs, double eta,
                                              bool drop_lowest);

/// Confident-counting rate estimate from out-of-fold positive probabilities.
NoiseRates estimate_noise_rates(std::span<const double> prob_pos, std::span<const double> prob_neg);

/// Out-of-fold P(y=+1) for every member of both sets from heads trained with
/// the biased binary risk on the remaining folds.
void cross_fit_probabilities(const PointwiseSets& sets, const FeatureMatrix& x,
                             const TrainHyper& hyper, std::uint64_t seed, int folds,
                             std::vector<double>& prob_pos, std::vector<double>& prob_neg);

RankPruneResult rank_prune(const PointwiseSets& sets, const FeatureMatrix& x, RatesMode mode,
                           const EstimatorConfig& cfg, const TrainHyper& hyper);

nlohmann::ordered_json head_metadata(const TrainedHead& model);
/// Writes `<path>` (JSON metadata) and `<path without extension>.bin`
/// (float32 LE: w, b, gamma, beta, running_mean, running_var).
void save_head(const std::filesystem::path& path, const TrainedHead& model);
TrainedHead load_head(const std::filesystem::path& path);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace relkit
