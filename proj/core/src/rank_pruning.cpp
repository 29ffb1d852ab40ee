#include <algorithm>
#include <cmath>
#include <numeric>

#include "relkit/trainer.hpp"

namespace relkit {

std::vector<std::size_t> prune_by_probability(std::span<const double> probs, double eta,
                                              bool drop_lowest) {
  if (!(eta >= 0.0 && eta < 1.0)) throw std::invalid_argument("prune: rate must lie in [0, 1)");
  const auto count = static_cast<std::size_t>(std::floor(eta * static_cast<double>(probs.size())));
  if (count == 0) return {};
  if (count >= probs.size()) throw DataError("pruning would empty a set");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return drop_lowest ? probs[a] < probs[b] : probs[a] > probs[b];
  });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

NoiseRates estimate_noise_rates(std::span<const double> prob_pos, std::span<const double> prob_neg) {
  if (prob_pos.empty() || prob_neg.empty()) {
    throw std::invalid_argument("estimate_noise_rates: empty set");
  }
  const double lb = std::accumulate(prob_neg.begin(), prob_neg.end(), 0.0) / static_cast<double>(prob_neg.size());
  const double ub = std::accumulate(prob_pos.begin(), prob_pos.end(), 0.0) / static_cast<double>(prob_pos.size());
  auto ratio = [](std::size_t wrong, std::size_t right) {
    return wrong + right == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(wrong + right);
  };
  std::size_t pos_conf_neg = 0, pos_conf_pos = 0, neg_conf_pos = 0, neg_conf_neg = 0;
  for (double p : prob_pos) {
    if (p <= lb) ++pos_conf_neg;
    if (p >= ub) ++pos_conf_pos;
  }
  for (double p : prob_neg) {
    if (p >= ub) ++neg_conf_pos;
    if (p <= lb) ++neg_conf_neg;
  }
  return {ratio(pos_conf_neg, pos_conf_pos), ratio(neg_conf_pos, neg_conf_neg)};
}

void cross_fit_probabilities(const PointwiseSets& sets, const FeatureMatrix& x,
                             const TrainHyper& hyper, std::uint64_t seed, int folds,
                             std::vector<double>& prob_pos, std::vector<double>& prob_neg) {
  const std::size_t np = sets.pos_set.size();
  const std::size_t nn = sets.neg_set.size();
  const auto k = static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(std::max(folds, 0)), std::min(np, nn)));
  if (k < 2) throw DataError("rank pruning: sets too small to cross-fit");

  Rng rng(seed);
  auto assign = [&](std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % k;
    return fold;
  };
  const auto fold_pos = assign(np);
  const auto fold_neg = assign(nn);

  prob_pos.assign(np, 0.0);
  prob_neg.assign(nn, 0.0);
  EstimatorConfig prelim;
  prelim.method = Estimator::kBinaryBiased;
  prelim.pi_plus = sets.pi_plus;
  for (std::size_t f = 0; f < k; ++f) {
    PointwiseSets fit;
    fit.label_source = sets.label_source;
    fit.pi_plus = sets.pi_plus;
    std::vector<std::size_t> held_pos, held_neg, held_pos_rows, held_neg_rows;
    for (std::size_t i = 0; i < np; ++i) {
      if (fold_pos[i] == f) {
        held_pos.push_back(i);
        held_pos_rows.push_back(sets.pos_set[i]);
      } else {
        fit.pos_set.push_back(sets.pos_set[i]);
      }
    }
    for (std::size_t i = 0; i < nn; ++i) {
      if (fold_neg[i] == f) {
        held_neg.push_back(i);
        held_neg_rows.push_back(sets.neg_set[i]);
      } else {
        fit.neg_set.push_back(sets.neg_set[i]);
      }
    }
    prelim.seed = rng.next();
    const TrainedHead h = train(fit, x, prelim, hyper);
    const auto sp = forward_infer(h.head, x, held_pos_rows);
    const auto sn = forward_infer(h.head, x, held_neg_rows);
    for (std::size_t i = 0; i < held_pos.size(); ++i) prob_pos[held_pos[i]] = sigmoid(sp[i]);
    for (std::size_t i = 0; i < held_neg.size(); ++i) prob_neg[held_neg[i]] = sigmoid(sn[i]);
  }
}

RankPruneResult rank_prune(const PointwiseSets& sets, const FeatureMatrix& x, RatesMode mode,
                           const EstimatorConfig& cfg, const TrainHyper& hyper) {
  if (sets.pos_set.empty() || sets.neg_set.empty()) {
    throw DataError("rank pruning: pointwise sets must both be non-empty");
  }
  std::vector<double> prob_pos, prob_neg;
  cross_fit_probabilities(sets, x, hyper, cfg.seed ^ 0x5bd1e995ULL, 5, prob_pos, prob_neg);

  RankPruneResult out;
  out.rates = mode == RatesMode::kTheory ? noise_rates_from_prior(cfg.pi_plus)
                                         : estimate_noise_rates(prob_pos, prob_neg);
  const auto drop_pos = prune_by_probability(prob_pos, out.rates.eta_pos, true);
  const auto drop_neg = prune_by_probability(prob_neg, out.rates.eta_neg, false);
  out.pruned_pos = drop_pos.size();
  out.pruned_neg = drop_neg.size();

  auto keep = [](const std::vector<std::size_t>& members, const std::vector<std::size_t>& drop) {
    std::vector<std::size_t> kept;
    kept.reserve(members.size() - drop.size());
    std::size_t d = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (d < drop.size() && drop[d] == i) {
        ++d;
        continue;
      }
      kept.push_back(members[i]);
    }
    return kept;
  };
  out.sets.pos_set = keep(sets.pos_set, drop_pos);
  out.sets.neg_set = keep(sets.neg_set, drop_neg);
  out.sets.label_source = sets.label_source;
  out.sets.pi_plus = sets.pi_plus;
  out.weight_pos = 1.0 / (1.0 - out.rates.eta_pos);
  out.weight_neg = 1.0 / (1.0 - out.rates.eta_neg);
  return out;
}

}  // namespace relkit
