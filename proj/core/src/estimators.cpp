#include "relkit/estimators.hpp"

#include <cmath>

#include "relkit/pairgen.hpp"

namespace relkit {

double logistic_loss(double margin) {
  // ln(1 + e^-z) = max(-z, 0) + ln(1 + e^-|z|)
  return std::max(-margin, 0.0) + std::log1p(std::exp(-std::abs(margin)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_loss_grad(double score, Label y) {
  const double yy = to_int(y);
  return -yy * sigmoid(-yy * score);
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::kBinaryBiased: return "binary_biased";
    case Estimator::kUU: return "uu";
    case Estimator::kPcompUnbiased: return "pcomp_unbiased";
    case Estimator::kPcompReLU: return "pcomp_relu";
    case Estimator::kPcompABS: return "pcomp_abs";
    case Estimator::kNoisyUnbiased: return "noisy_unbiased";
    case Estimator::kRankPruning: return "rank_pruning";
    case Estimator::kPcompTeacher: return "pcomp_teacher";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  for (Estimator e : kAllEstimators) {
    if (to_string(e) == name) return e;
  }
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

namespace {

void require_nonempty(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty set");
}

double mean_loss(std::span<const double> s, Label y) {
  double acc = 0.0;
  for (double v : s) acc += logistic_loss(v, y);
  return acc / static_cast<double>(s.size());
}

/// grad[i] += coef * dl(s_i, y) / n
void accumulate_grad(std::vector<double>& grad, std::span<const double> s, Label y, double coef) {
  const double scale = coef / static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) grad[i] += scale * logistic_loss_grad(s[i], y);
}

}  // namespace

RiskValue risk_binary_biased(std::span<const double> pos, std::span<const double> neg,
                             double weight_pos, double weight_neg) {
  require_nonempty(pos, neg, "risk_binary_biased");
  RiskValue r;
  r.value = weight_pos * mean_loss(pos, Label::kPositive) +
            weight_neg * mean_loss(neg, Label::kNegative);
  r.grad_pos.assign(pos.size(), 0.0);
  r.grad_neg.assign(neg.size(), 0.0);
  accumulate_grad(r.grad_pos, pos, Label::kPositive, weight_pos);
  accumulate_grad(r.grad_neg, neg, Label::kNegative, weight_neg);
  return r;
}

RiskValue risk_uu(std::span<const double> a, std::span<const double> b, double theta,
                  double theta_p, double pi_plus) {
  require_nonempty(a, b, "risk_uu");
  if (theta == theta_p) throw std::invalid_argument("risk_uu: theta must differ from theta'");
  const double pi_minus = 1.0 - pi_plus;
  const double denom = theta - theta_p;
  const double a_pos = (1.0 - theta_p) * pi_plus / denom;
  const double a_neg = -theta_p * pi_minus / denom;
  const double b_neg = theta * pi_minus / denom;
  const double b_pos = -(1.0 - theta) * pi_plus / denom;
  RiskValue r;
  r.value = a_pos * mean_loss(a, Label::kPositive) + a_neg * mean_loss(a, Label::kNegative) +
            b_neg * mean_loss(b, Label::kNegative) + b_pos * mean_loss(b, Label::kPositive);
  r.grad_pos.assign(a.size(), 0.0);
  r.grad_neg.assign(b.size(), 0.0);
  accumulate_grad(r.grad_pos, a, Label::kPositive, a_pos);
  accumulate_grad(r.grad_pos, a, Label::kNegative, a_neg);
  accumulate_grad(r.grad_neg, b, Label::kNegative, b_neg);
  accumulate_grad(r.grad_neg, b, Label::kPositive, b_pos);
  return r;
}

RiskValue risk_pcomp_unbiased(std::span<const double> pos, std::span<const double> neg,
                              double pi_plus) {
  require_nonempty(pos, neg, "risk_pcomp_unbiased");
  if (pos.size() != neg.size()) {
    throw std::invalid_argument("risk_pcomp_unbiased: pos and neg lengths differ");
  }
  const double pi_minus = 1.0 - pi_plus;
  RiskValue r;
  r.value = mean_loss(pos, Label::kPositive) + mean_loss(neg, Label::kNegative) -
            pi_plus * mean_loss(pos, Label::kNegative) - pi_minus * mean_loss(neg, Label::kPositive);
  r.grad_pos.assign(pos.size(), 0.0);
  r.grad_neg.assign(neg.size(), 0.0);
  accumulate_grad(r.grad_pos, pos, Label::kPositive, 1.0);
  accumulate_grad(r.grad_pos, pos, Label::kNegative, -pi_plus);
  accumulate_grad(r.grad_neg, neg, Label::kNegative, 1.0);
  accumulate_grad(r.grad_neg, neg, Label::kPositive, -pi_minus);
  return r;
}

RiskValue risk_pcomp_corrected(std::span<const double> pos, std::span<const double> neg,
                               double pi_plus, Correction g) {
  require_nonempty(pos, neg, "risk_pcomp_corrected");
  if (pos.size() != neg.size()) {
    throw std::invalid_argument("risk_pcomp_corrected: pos and neg lengths differ");
  }
  const double pi_minus = 1.0 - pi_plus;
  // Positive-label part and negative-label part of the unbiased risk.
  const double first = mean_loss(pos, Label::kPositive) - pi_minus * mean_loss(neg, Label::kPositive);
  const double second = mean_loss(neg, Label::kNegative) - pi_plus * mean_loss(pos, Label::kNegative);
  auto apply = [g](double x) { return g == Correction::kReLU ? std::max(x, 0.0) : std::abs(x); };
  auto slope = [g](double x) {
    if (g == Correction::kReLU) return x > 0.0 ? 1.0 : 0.0;
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  };
  RiskValue r;
  r.value = apply(first) + apply(second);
  r.grad_pos.assign(pos.size(), 0.0);
  r.grad_neg.assign(neg.size(), 0.0);
  const double s1 = slope(first);
  const double s2 = slope(second);
  accumulate_grad(r.grad_pos, pos, Label::kPositive, s1);
  accumulate_grad(r.grad_neg, neg, Label::kPositive, -s1 * pi_minus);
  accumulate_grad(r.grad_neg, neg, Label::kNegative, s2);
  accumulate_grad(r.grad_pos, pos, Label::kNegative, -s2 * pi_plus);
  return r;
}

NoiseRates noise_rates_from_prior(double pi_plus) {
  check_prior(pi_plus);
  const double pi_minus = 1.0 - pi_plus;
  NoiseRates rates{pi_minus * pi_minus / (pi_minus * pi_minus + pi_plus),
                   pi_plus * pi_plus / (pi_plus * pi_plus + pi_minus)};
  if (!(rates.eta_pos + rates.eta_neg < 1.0)) {
    throw std::logic_error("noise_rates_from_prior: rates sum to 1 or more");
  }
  return rates;
}

NoiseRates flip_rates_from_prior(double pi_plus) {
  const auto w = mixture_weights(pi_plus);
  NoiseRates rates{w.neg / (w.pos + w.neg), (1.0 - w.pos) / (2.0 - w.pos - w.neg)};
  if (!(rates.eta_pos + rates.eta_neg < 1.0)) {
    throw std::logic_error("flip_rates_from_prior: rates sum to 1 or more");
  }
  return rates;
}

namespace {

double noisy_denominator(const NoiseRates& rates) {
  const double denom = 1.0 - rates.eta_pos - rates.eta_neg;
  if (!(denom > 0.0)) {
    throw std::invalid_argument("noisy-unbiased loss: eta_pos + eta_neg must be below 1");
  }
  return denom;
}

}  // namespace

double loss_noisy_unbiased(double score, Label noisy_label, const NoiseRates& rates) {
  const double denom = noisy_denominator(rates);
  const double own = logistic_loss(score, noisy_label);
  const double other = logistic_loss(score, flip(noisy_label));
  if (noisy_label == Label::kPositive) {
    return ((1.0 - rates.eta_neg) * own - rates.eta_pos * other) / denom;
  }
  return ((1.0 - rates.eta_pos) * own - rates.eta_neg * other) / denom;
}

double loss_noisy_unbiased_grad(double score, Label noisy_label, const NoiseRates& rates) {
  const double denom = noisy_denominator(rates);
  const double own = logistic_loss_grad(score, noisy_label);
  const double other = logistic_loss_grad(score, flip(noisy_label));
  if (noisy_label == Label::kPositive) {
    return ((1.0 - rates.eta_neg) * own - rates.eta_pos * other) / denom;
  }
  return ((1.0 - rates.eta_pos) * own - rates.eta_neg * other) / denom;
}

RiskValue risk_noisy_unbiased(std::span<const double> pos, std::span<const double> neg,
                              const NoiseRates& rates) {
  require_nonempty(pos, neg, "risk_noisy_unbiased");
  RiskValue r;
  r.grad_pos.resize(pos.size());
  r.grad_neg.resize(neg.size());
  double acc_pos = 0.0, acc_neg = 0.0;
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    acc_pos += loss_noisy_unbiased(pos[i], Label::kPositive, rates);
    r.grad_pos[i] = loss_noisy_unbiased_grad(pos[i], Label::kPositive, rates) / np;
  }
  for (std::size_t i = 0; i < neg.size(); ++i) {
    acc_neg += loss_noisy_unbiased(neg[i], Label::kNegative, rates);
    r.grad_neg[i] = loss_noisy_unbiased_grad(neg[i], Label::kNegative, rates) / nn;
  }
  r.value = acc_pos / np + acc_neg / nn;
  return r;
}

void EstimatorConfig::validate() const {
  check_prior(pi_plus);
  if (method == Estimator::kUU) {
    if (!uu_thetas) throw std::invalid_argument("uu estimator requires (theta, theta') priors");
    const auto [t, tp] = *uu_thetas;
    if (!(t >= 0.0 && t <= 1.0 && tp >= 0.0 && tp <= 1.0)) {
      throw std::invalid_argument("uu thetas must lie in [0, 1]");
    }
    if (t == tp) throw std::invalid_argument("uu thetas must differ");
  }
  if (method == Estimator::kPcompTeacher) {
    if (!(teacher.ema_decay >= 0.0 && teacher.ema_decay < 1.0)) {
      throw std::invalid_argument("teacher ema_decay must lie in [0, 1)");
    }
    if (teacher.lambda_max < 0.0 || teacher.ramp_epochs < 0) {
      throw std::invalid_argument("teacher lambda_max and ramp_epochs must be non-negative");
    }
  }
}

void add_consistency(RiskValue& risk, std::span<const double> pos, std::span<const double> neg,
                     std::span<const double> teacher_pos, std::span<const double> teacher_neg,
                     double lambda) {
  if (teacher_pos.size() != pos.size() || teacher_neg.size() != neg.size()) {
    throw std::invalid_argument("consistency: teacher scores do not match the batch");
  }
  const double count = static_cast<double>(pos.size() + neg.size());
  auto term = [&](std::span<const double> s, std::span<const double> t, std::vector<double>& grad) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double ps = sigmoid(s[i]);
      const double diff = ps - sigmoid(t[i]);
      risk.value += lambda * diff * diff / count;
      grad[i] += lambda * 2.0 * diff * ps * (1.0 - ps) / count;
    }
  };
  term(pos, teacher_pos, risk.grad_pos);
  term(neg, teacher_neg, risk.grad_neg);
}

RiskValue objective(const EstimatorConfig& cfg, std::span<const double> pos,
                    std::span<const double> neg, const ObjectiveContext& ctx) {
  RiskValue r;
  switch (cfg.method) {
    case Estimator::kBinaryBiased:
      r = risk_binary_biased(pos, neg);
      break;
    case Estimator::kUU: {
      if (!cfg.uu_thetas) throw std::invalid_argument("uu estimator requires (theta, theta') priors");
      r = risk_uu(pos, neg, cfg.uu_thetas->first, cfg.uu_thetas->second, cfg.pi_plus);
      break;
    }
    case Estimator::kPcompUnbiased:
      r = risk_pcomp_unbiased(pos, neg, cfg.pi_plus);
      break;
    case Estimator::kPcompReLU:
      r = risk_pcomp_corrected(pos, neg, cfg.pi_plus, Correction::kReLU);
      break;
    case Estimator::kPcompABS:
      r = risk_pcomp_corrected(pos, neg, cfg.pi_plus, Correction::kAbs);
      break;
    case Estimator::kNoisyUnbiased:
      r = risk_noisy_unbiased(pos, neg, flip_rates_from_prior(cfg.pi_plus));
      break;
    case Estimator::kRankPruning:
    case Estimator::kPcompTeacher:
      r = risk_binary_biased(pos, neg, ctx.weight_pos, ctx.weight_neg);
      break;
  }
  if (cfg.method == Estimator::kPcompTeacher && ctx.consistency_weight > 0.0 &&
      !ctx.teacher_pos.empty()) {
    add_consistency(r, pos, neg, ctx.teacher_pos, ctx.teacher_neg, ctx.consistency_weight);
  }
  return r;
}

}  // namespace relkit
