#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "relkit/common.hpp"

namespace relkit {

class Corpus;
class TensorPack;
struct EmbeddingRecord;

/// Row-major feature matrix; row i is the pair feature of record i.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t d) : rows(r), dim(d), data(r * d, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

/// Average-pooled e1 embedding concatenated with average-pooled e2 embedding.
std::vector<double> pair_feature(const EmbeddingRecord& emb, TokenSpan e1, TokenSpan e2);

/// Pair features for every corpus record, using the pack's model-token spans.
FeatureMatrix build_features(const Corpus& corpus, const TensorPack& pack, int layer,
                             int jobs = 1);

/// Batch norm -> dropout -> linear scorer over pair features.
struct LinearHead {
  std::vector<double> w;
  double b = 0.0;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double dropout_rate = 0.3;
  double bn_momentum = 0.9;  // weight kept by the running statistics per step
  double bn_eps = 1e-5;
  bool has_running_stats = false;

  std::size_t dim() const { return w.size(); }
  /// Linear weights uniform in +-1/sqrt(dim); identity normalisation.
  static LinearHead initialize(std::size_t dim, double dropout_rate, Rng& rng);
};

/// Intermediate values of a train-mode forward pass, kept for backprop.
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t dim = 0;
  std::vector<double> xhat;  // normalised inputs, batch*dim
  std::vector<double> mask;  // inverted-dropout multipliers (0 or 1/(1-p)), batch*dim
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
  std::vector<double> scores;
};

/// Train-mode pass over the given rows: batch statistics and dropout.
ForwardCache forward_train(const LinearHead& head, const FeatureMatrix& x,
                           std::span<const std::size_t> rows, Rng& rng);

/// Infer-mode pass: running statistics, no dropout. Requires a trained head.
std::vector<double> forward_infer(const LinearHead& head, const FeatureMatrix& x,
                                  std::span<const std::size_t> rows);
double forward_infer(const LinearHead& head, std::span<const double> r);

struct HeadGradient {
  std::vector<double> w;
  double b = 0.0;
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// Gradient of a scalar objective w.r.t. (w, b, gamma, beta), given the
/// objective's derivative with respect to each batch score.
HeadGradient backward(const LinearHead& head, const ForwardCache& cache,
                      std::span<const double> dscores);

/// Folds one batch's statistics into the running estimates.
void update_running_stats(LinearHead& head, const ForwardCache& cache);

/// sign(score) with ties to +1, over infer-mode scores.
std::vector<Label> predict_labels(const LinearHead& head, const FeatureMatrix& x,
                                  std::span<const std::size_t> rows);

}  // namespace relkit
