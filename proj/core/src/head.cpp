#include "relkit/head.hpp"

#include <cmath>

#include "relkit/attnmap.hpp"
#include "relkit/corpus.hpp"

namespace relkit {

std::vector<double> pair_feature(const EmbeddingRecord& emb, TokenSpan e1, TokenSpan e2) {
  if (!e1.valid_for(emb.n) || !e2.valid_for(emb.n)) {
    throw DataError("pair_feature: entity span out of bounds for '" + emb.sentence_id + "'");
  }
  const auto d = static_cast<std::size_t>(emb.d);
  std::vector<double> r(2 * d, 0.0);
  auto pool = [&](TokenSpan s, std::size_t offset) {
    for (int i = s.start; i <= s.end; ++i) {
      const auto row = emb.row(i);
      for (std::size_t j = 0; j < d; ++j) r[offset + j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(s.size());
    for (std::size_t j = 0; j < d; ++j) r[offset + j] *= inv;
  };
  pool(e1, 0);
  pool(e2, d);
  for (double v : r) {
    if (!std::isfinite(v)) throw DataError("pair_feature: non-finite feature for '" + emb.sentence_id + "'");
  }
  return r;
}

FeatureMatrix build_features(const Corpus& corpus, const TensorPack& pack, int layer, int jobs) {
  if (corpus.empty()) throw std::invalid_argument("build_features: empty corpus");
  const int d = pack.entry(corpus[0].id).d;
  if (d <= 0) throw DataError("build_features: pack has no embedding width");
  FeatureMatrix x(corpus.size(), 2 * static_cast<std::size_t>(d));
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const auto& id = corpus[i].id;
    const auto& entry = pack.entry(id);
    if (entry.d != d) throw DataError("build_features: inconsistent embedding width for '" + id + "'");
    const auto emb = pack.embedding(id, layer);
    const auto r = pair_feature(emb, entry.tok_e1, entry.tok_e2);
    std::copy(r.begin(), r.end(), x.row(i).begin());
  });
  return x;
}

LinearHead LinearHead::initialize(std::size_t dim, double dropout_rate, Rng& rng) {
  if (dim == 0) throw std::invalid_argument("LinearHead: zero input width");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("LinearHead: dropout rate must lie in [0, 1)");
  }
  LinearHead h;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  h.w.resize(dim);
  for (double& v : h.w) v = (2.0 * rng.uniform01() - 1.0) * bound;
  h.b = (2.0 * rng.uniform01() - 1.0) * bound;
  h.gamma.assign(dim, 1.0);
  h.beta.assign(dim, 0.0);
  h.running_mean.assign(dim, 0.0);
  h.running_var.assign(dim, 1.0);
  h.dropout_rate = dropout_rate;
  return h;
}

ForwardCache forward_train(const LinearHead& head, const FeatureMatrix& x,
                           std::span<const std::size_t> rows, Rng& rng) {
  const std::size_t d = head.dim();
  if (x.dim != d) throw std::invalid_argument("forward: feature width differs from head width");
  if (rows.empty()) throw std::invalid_argument("forward: empty batch");
  const std::size_t n = rows.size();
  ForwardCache c;
  c.batch = n;
  c.dim = d;
  c.batch_mean.assign(d, 0.0);
  c.batch_var.assign(d, 0.0);
  for (std::size_t i : rows) {
    const auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) c.batch_mean[j] += r[j];
  }
  for (double& m : c.batch_mean) m /= static_cast<double>(n);
  for (std::size_t i : rows) {
    const auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = r[j] - c.batch_mean[j];
      c.batch_var[j] += dev * dev;
    }
  }
  for (double& v : c.batch_var) v /= static_cast<double>(n);

  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(c.batch_var[j] + head.bn_eps);

  const double keep = 1.0 - head.dropout_rate;
  const double scale = head.dropout_rate > 0.0 ? 1.0 / keep : 1.0;
  c.xhat.resize(n * d);
  c.mask.resize(n * d);
  c.scores.assign(n, head.b);
  for (std::size_t k = 0; k < n; ++k) {
    const auto r = x.row(rows[k]);
    double s = head.b;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (r[j] - c.batch_mean[j]) * inv_std[j];
      const double m = head.dropout_rate > 0.0 ? (rng.bernoulli(keep) ? scale : 0.0) : 1.0;
      c.xhat[k * d + j] = xh;
      c.mask[k * d + j] = m;
      s += head.w[j] * m * (head.gamma[j] * xh + head.beta[j]);
    }
    c.scores[k] = s;
  }
  return c;
}

double forward_infer(const LinearHead& head, std::span<const double> r) {
  if (!head.has_running_stats) {
    throw std::logic_error("forward: inference before any training step");
  }
  if (r.size() != head.dim()) throw std::invalid_argument("forward: feature width differs from head width");
  double s = head.b;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double xh = (r[j] - head.running_mean[j]) / std::sqrt(head.running_var[j] + head.bn_eps);
    s += head.w[j] * (head.gamma[j] * xh + head.beta[j]);
  }
  return s;
}

std::vector<double> forward_infer(const LinearHead& head, const FeatureMatrix& x,
                                  std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(forward_infer(head, x.row(i)));
  return out;
}

HeadGradient backward(const LinearHead& head, const ForwardCache& c,
                      std::span<const double> dscores) {
  if (dscores.size() != c.batch) throw std::invalid_argument("backward: gradient length mismatch");
  const std::size_t d = c.dim;
  HeadGradient g;
  g.w.assign(d, 0.0);
  g.gamma.assign(d, 0.0);
  g.beta.assign(d, 0.0);
  // Fixed-order summation keeps results bitwise reproducible.
  for (std::size_t k = 0; k < c.batch; ++k) {
    const double gs = dscores[k];
    g.b += gs;
    for (std::size_t j = 0; j < d; ++j) {
      const double m = c.mask[k * d + j];
      const double xh = c.xhat[k * d + j];
      const double z = head.gamma[j] * xh + head.beta[j];
      g.w[j] += gs * m * z;
      const double dz = gs * head.w[j] * m;
      g.gamma[j] += dz * xh;
      g.beta[j] += dz;
    }
  }
  return g;
}

void update_running_stats(LinearHead& head, const ForwardCache& c) {
  const double keep = head.bn_momentum;
  const double n = static_cast<double>(c.batch);
  const double unbias = c.batch > 1 ? n / (n - 1.0) : 1.0;
  for (std::size_t j = 0; j < head.dim(); ++j) {
    if (!head.has_running_stats) {
      head.running_mean[j] = c.batch_mean[j];
      head.running_var[j] = c.batch_var[j] * unbias;
    } else {
      head.running_mean[j] = keep * head.running_mean[j] + (1.0 - keep) * c.batch_mean[j];
      head.running_var[j] = keep * head.running_var[j] + (1.0 - keep) * c.batch_var[j] * unbias;
    }
  }
  head.has_running_stats = true;
}

std::vector<Label> predict_labels(const LinearHead& head, const FeatureMatrix& x,
                                  std::span<const std::size_t> rows) {
  std::vector<Label> out;
  out.reserve(rows.size());
  for (double s : forward_infer(head, x, rows)) out.push_back(label_from_score(s));
  return out;
}

}  // namespace relkit
