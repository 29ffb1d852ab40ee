#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relkit/estimators.hpp"
#include "relkit/pairgen.hpp"

using namespace relkit;

namespace {

const double kLn2 = std::log(2.0);

// Independent reference: ln(1 + exp(-z)) in long double.
double ref_loss(double z) { return static_cast<double>(std::log1p(std::exp(-static_cast<long double>(z)))); }

std::vector<double> random_scores(std::mt19937_64& gen, std::size_t n, double scale = 2.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(gen);
  return v;
}

// Central differences of fn w.r.t. every score, compared with the analytic
// gradient vectors.
template <typename Fn>
void expect_gradients(const Fn& fn, std::vector<double> pos, std::vector<double> neg) {
  const RiskValue r = fn(pos, neg);
  ASSERT_EQ(r.grad_pos.size(), pos.size());
  ASSERT_EQ(r.grad_neg.size(), neg.size());
  const double h = 1e-6;
  for (int side = 0; side < 2; ++side) {
    auto& v = side == 0 ? pos : neg;
    const auto& g = side == 0 ? r.grad_pos : r.grad_neg;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = fn(pos, neg).value;
      v[i] = keep - h;
      const double down = fn(pos, neg).value;
      v[i] = keep;
      EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-6) << "side " << side << " index " << i;
    }
  }
}

}  // namespace

TEST(LogisticLoss, Values) {
  EXPECT_NEAR(logistic_loss(0.0), 0.693147, 1e-6);
  EXPECT_NEAR(logistic_loss(5.0), 0.006715, 1e-6);
  EXPECT_NEAR(logistic_loss(-50.0), 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(logistic_loss(-1e6)));
  EXPECT_EQ(logistic_loss(1e6), 0.0);
  EXPECT_DOUBLE_EQ(logistic_loss(2.0, Label::kNegative), logistic_loss(-2.0));
}

TEST(LogisticLoss, MatchesReferenceAndDerivative) {
  std::mt19937_64 gen(1);
  for (double z : random_scores(gen, 200, 10.0)) {
    EXPECT_NEAR(logistic_loss(z), ref_loss(z), 1e-12);
    for (Label y : {Label::kPositive, Label::kNegative}) {
      const double fd = (logistic_loss(z + 1e-6, y) - logistic_loss(z - 1e-6, y)) / 2e-6;
      EXPECT_NEAR(logistic_loss_grad(z, y), fd, 1e-6);
    }
  }
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(800.0), 1.0, 0.0);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
}

TEST(BinaryBiased, Values) {
  const std::vector<double> z(3, 0.0);
  EXPECT_NEAR(risk_binary_biased(z, z).value, 2 * kLn2, 1e-12);
  EXPECT_NEAR(risk_binary_biased(std::vector<double>{5}, std::vector<double>{-5}).value, 0.013430, 1e-6);
  EXPECT_NEAR(risk_binary_biased(std::vector<double>{-50}, std::vector<double>{50}).value, 100.0, 1e-9);
  EXPECT_NEAR(risk_binary_biased(z, z, 2.0, 0.5).value, 2.5 * kLn2, 1e-12);
}

TEST(UU, Values) {
  std::mt19937_64 gen(2);
  const auto a = random_scores(gen, 7);
  const auto b = random_scores(gen, 9);
  // theta = 1, theta' = 0 collapses to the prior-weighted supervised risk.
  for (double pi : {0.3, 0.6}) {
    double lp = 0, ln = 0;
    for (double s : a) lp += ref_loss(s);
    for (double s : b) ln += ref_loss(-s);
    const double expected = pi * lp / 7 + (1 - pi) * ln / 9;
    EXPECT_NEAR(risk_uu(a, b, 1.0, 0.0, pi).value, expected, 1e-12);
  }
  const std::vector<double> z(4, 0.0);
  EXPECT_NEAR(risk_uu(z, z, 0.8, 0.2, 0.5).value, kLn2, 1e-12);
  EXPECT_NEAR(risk_uu(a, b, 0.8, 0.3, 0.45).value, risk_uu(b, a, 0.3, 0.8, 0.45).value, 1e-12);
  EXPECT_THROW(risk_uu(a, b, 0.4, 0.4, 0.5), std::invalid_argument);
}

TEST(PcompUnbiased, Values) {
  const std::vector<double> z(5, 0.0);
  for (double pi : kPriorGrid) EXPECT_NEAR(risk_pcomp_unbiased(z, z, pi).value, kLn2, 1e-12);
  const double v = risk_pcomp_unbiased(std::vector<double>{5}, std::vector<double>{-5}, 0.5).value;
  EXPECT_NEAR(v, 2 * ref_loss(5) - ref_loss(-5), 1e-12);
  EXPECT_NEAR(v, -4.993285, 1e-6);
  EXPECT_NEAR(risk_pcomp_unbiased(std::vector<double>{0}, std::vector<double>{0}, 1e-9).value, kLn2, 1e-9);
  EXPECT_THROW(risk_pcomp_unbiased(std::vector<double>{0}, std::vector<double>{0, 1}, 0.5), std::invalid_argument);
}

TEST(PcompCorrected, Values) {
  const std::vector<double> p{5}, n{-5};
  EXPECT_NEAR(risk_pcomp_corrected(p, n, 0.5, Correction::kReLU).value, 0.0, 1e-12);
  EXPECT_NEAR(risk_pcomp_corrected(p, n, 0.5, Correction::kAbs).value, 4.993285, 1e-6);
  const std::vector<double> z(3, 0.0);
  for (auto g : {Correction::kReLU, Correction::kAbs}) {
    EXPECT_NEAR(risk_pcomp_corrected(z, z, 0.4, g).value, kLn2, 1e-12);
  }
}

TEST(PcompCorrected, EqualsUnbiasedWhenBracketsNonNegative) {
  std::mt19937_64 gen(3);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const double pi = std::uniform_real_distribution<double>(0.1, 0.9)(gen);
    const auto p = random_scores(gen, 6, 1.0);
    const auto n = random_scores(gen, 6, 1.0);
    double lpp = 0, lnp = 0, lnn = 0, lpn = 0;
    for (double s : p) { lpp += ref_loss(s); lpn += ref_loss(-s); }
    for (double s : n) { lnp += ref_loss(s); lnn += ref_loss(-s); }
    const double first = lpp / 6 - (1 - pi) * lnp / 6;
    const double second = lnn / 6 - pi * lpn / 6;
    if (first < 0 || second < 0) continue;
    ++checked;
    const double u = risk_pcomp_unbiased(p, n, pi).value;
    EXPECT_NEAR(risk_pcomp_corrected(p, n, pi, Correction::kReLU).value, u, 1e-12);
    EXPECT_NEAR(risk_pcomp_corrected(p, n, pi, Correction::kAbs).value, u, 1e-12);
  }
  EXPECT_GT(checked, 50);
}

TEST(PcompUnbiased, MeanMatchesSupervisedRisk) {
  // Scorer f(x) = x on x | y ~ N(y, 1); pairs from the comparison sampler.
  const double pi = 0.4;
  auto integrate = [](double mean, double sign) {
    double acc = 0.0;
    const double step = 1e-3;
    for (double x = -12.0; x <= 12.0; x += step) {
      const double dens = std::exp(-0.5 * (x - mean) * (x - mean)) / std::sqrt(2 * M_PI);
      acc += dens * ref_loss(sign * x) * step;
    }
    return acc;
  };
  const double truth = pi * integrate(1.0, 1.0) + (1 - pi) * integrate(-1.0, -1.0);

  std::mt19937_64 gen(4);
  std::bernoulli_distribution coin(pi);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int batches = 10000;
  const std::size_t batch = 32;
  double sum = 0.0, sq = 0.0;
  for (int b = 0; b < batches; ++b) {
    std::vector<double> p, n;
    while (p.size() < batch) {
      const bool y1 = coin(gen), y2 = coin(gen);
      if (!y1 && y2) continue;
      p.push_back((y1 ? 1.0 : -1.0) + nd(gen));
      n.push_back((y2 ? 1.0 : -1.0) + nd(gen));
    }
    const double r = risk_pcomp_unbiased(p, n, pi).value;
    sum += r;
    sq += r * r;
  }
  const double mean = sum / batches;
  const double se = std::sqrt((sq / batches - mean * mean) / batches);
  EXPECT_NEAR(mean, truth, 3 * se) << "truth " << truth << " se " << se;
}

TEST(NoiseRates, FromPrior) {
  auto r = noise_rates_from_prior(0.5);
  EXPECT_NEAR(r.eta_pos, 1.0 / 3, 1e-12);
  EXPECT_NEAR(r.eta_neg, 1.0 / 3, 1e-12);
  r = noise_rates_from_prior(0.6);
  EXPECT_NEAR(r.eta_pos, 0.210526, 1e-6);
  EXPECT_NEAR(r.eta_neg, 0.473684, 1e-6);
  r = noise_rates_from_prior(1 - 1e-6);
  EXPECT_NEAR(r.eta_pos, 0.0, 1e-9);
  EXPECT_LT(r.eta_neg, 1.0);
  EXPECT_GT(r.eta_neg, 0.999);
  // Rates complement the mixture weights.
  const auto w = mixture_weights(0.3);
  r = noise_rates_from_prior(0.3);
  EXPECT_NEAR(r.eta_pos, 1 - w.pos, 1e-12);
  EXPECT_NEAR(r.eta_neg, w.neg, 1e-12);
}

TEST(NoiseRates, FlipRatesFromPrior) {
  auto r = flip_rates_from_prior(0.5);
  EXPECT_NEAR(r.eta_pos, 1.0 / 3, 1e-12);
  EXPECT_NEAR(r.eta_neg, 1.0 / 3, 1e-12);
  r = flip_rates_from_prior(0.6);
  EXPECT_NEAR(r.eta_pos, 0.375, 1e-12);
  EXPECT_NEAR(r.eta_neg, 2.0 / 7, 1e-12);
  for (double pi : {0.05, 0.3, 0.7, 0.95}) {
    r = flip_rates_from_prior(pi);
    EXPECT_LT(r.eta_pos + r.eta_neg, 1.0) << pi;
  }
}

TEST(NoisyUnbiased, PairSetsRecoverCleanRisk) {
  // Noisy labels come from set membership; the corrected risk must match the
  // clean logistic risk of the same instances.
  for (double pi : {0.3, 0.6}) {
    std::mt19937_64 gen(17);
    const std::size_t n = 4000;
    std::vector<Label> y(n);
    std::vector<double> s(n);
    std::normal_distribution<double> nd(0, 1.5);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::bernoulli_distribution(pi)(gen) ? Label::kPositive : Label::kNegative;
      s[i] = 0.8 * to_int(y[i]) + nd(gen);
    }
    const auto sets = split_pointwise(generate_pairs(y, 40000, 5).pairs);
    std::vector<double> sp, sn;
    for (std::size_t i : sets.pos_set) sp.push_back(s[i]);
    for (std::size_t i : sets.neg_set) sn.push_back(s[i]);
    const double noisy = risk_noisy_unbiased(sp, sn, flip_rates_from_prior(pi)).value;
    double clean = 0, sq = 0;
    const auto r = flip_rates_from_prior(pi);
    auto add = [&](std::size_t i, Label noisy_label) {
      const double c = logistic_loss(s[i], y[i]);
      const double d = loss_noisy_unbiased(s[i], noisy_label, r) - c;
      clean += c;
      sq += d * d;
    };
    for (std::size_t i : sets.pos_set) add(i, Label::kPositive);
    for (std::size_t i : sets.neg_set) add(i, Label::kNegative);
    const double m = static_cast<double>(sets.pos_set.size());
    clean /= m;
    const double se = 2 * std::sqrt(sq / (2 * m) / (2 * m));
    EXPECT_NEAR(noisy, clean, 4 * se) << pi;
    // The inverse rates do not correct this noise away from pi = 0.5.
    EXPECT_GT(std::abs(risk_noisy_unbiased(sp, sn, noise_rates_from_prior(pi)).value - clean), 10 * se) << pi;
  }
}

TEST(NoisyUnbiased, Values) {
  std::mt19937_64 gen(5);
  const NoiseRates clean{0, 0};
  for (double s : random_scores(gen, 50, 5.0)) {
    EXPECT_EQ(loss_noisy_unbiased(s, Label::kPositive, clean), logistic_loss(s, Label::kPositive));
    EXPECT_EQ(loss_noisy_unbiased(s, Label::kNegative, clean), logistic_loss(s, Label::kNegative));
  }
  for (const NoiseRates& r : {NoiseRates{0.1, 0.3}, NoiseRates{0.4, 0.2}}) {
    EXPECT_NEAR(loss_noisy_unbiased(0.0, Label::kPositive, r), kLn2, 1e-12);
    EXPECT_NEAR(loss_noisy_unbiased(0.0, Label::kNegative, r), kLn2, 1e-12);
  }
  const NoiseRates third{1.0 / 3, 1.0 / 3};
  EXPECT_NEAR(loss_noisy_unbiased(5.0, Label::kPositive, third),
              ((2.0 / 3) * ref_loss(5) - (1.0 / 3) * ref_loss(-5)) / (1.0 / 3), 1e-12);
  EXPECT_NEAR(loss_noisy_unbiased(5.0, Label::kPositive, third), -4.993285, 1e-6);
  EXPECT_THROW(loss_noisy_unbiased(1.0, Label::kPositive, NoiseRates{0.5, 0.5}), std::invalid_argument);
}

TEST(NoisyUnbiased, ExpectationUnderNoiseIsCleanLoss) {
  // The rates act as flip probabilities: a true +1 is observed as -1 with
  // probability eta_pos, a true -1 as +1 with probability eta_neg.
  const NoiseRates r{0.2, 0.35};
  for (double s : {-3.0, -0.4, 0.0, 1.2, 4.0}) {
    const double pos = (1 - r.eta_pos) * loss_noisy_unbiased(s, Label::kPositive, r) +
                       r.eta_pos * loss_noisy_unbiased(s, Label::kNegative, r);
    const double neg = (1 - r.eta_neg) * loss_noisy_unbiased(s, Label::kNegative, r) +
                       r.eta_neg * loss_noisy_unbiased(s, Label::kPositive, r);
    EXPECT_NEAR(pos, logistic_loss(s, Label::kPositive), 1e-12);
    EXPECT_NEAR(neg, logistic_loss(s, Label::kNegative), 1e-12);
  }
}

TEST(Gradients, EveryRiskAgainstFiniteDifferences) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_scores(gen, 5);
    const auto n = random_scores(gen, 5);
    const auto b = random_scores(gen, 4);
    expect_gradients([](const auto& x, const auto& y) { return risk_binary_biased(x, y, 1.3, 0.7); }, p, n);
    expect_gradients([](const auto& x, const auto& y) { return risk_uu(x, y, 0.7, 0.2, 0.4); }, p, b);
    expect_gradients([](const auto& x, const auto& y) { return risk_pcomp_unbiased(x, y, 0.6); }, p, n);
    expect_gradients([](const auto& x, const auto& y) { return risk_pcomp_corrected(x, y, 0.3, Correction::kReLU); }, p, n);
    expect_gradients([](const auto& x, const auto& y) { return risk_pcomp_corrected(x, y, 0.3, Correction::kAbs); }, p, n);
    expect_gradients([](const auto& x, const auto& y) { return risk_noisy_unbiased(x, y, NoiseRates{0.2, 0.3}); }, p, n);
    const auto tp = random_scores(gen, 5);
    const auto tn = random_scores(gen, 5);
    expect_gradients(
        [&](const auto& x, const auto& y) {
          RiskValue r = risk_binary_biased(x, y);
          add_consistency(r, x, y, tp, tn, 0.8);
          return r;
        },
        p, n);
  }
}

TEST(Consistency, Value) {
  RiskValue r{0.0, {0.0, 0.0}, {0.0}};
  const std::vector<double> s{0.0, 0.0}, t{0.0, 0.0}, sn{0.0}, tn{std::log(3.0)};
  add_consistency(r, s, sn, t, tn, 2.0);
  // (0.5 - 0.75)^2 over three members, times 2.
  EXPECT_NEAR(r.value, 2.0 * 0.0625 / 3, 1e-15);
}

TEST(Objective, Dispatch) {
  std::mt19937_64 gen(7);
  const auto p = random_scores(gen, 6);
  const auto n = random_scores(gen, 6);
  EstimatorConfig cfg;
  cfg.pi_plus = 0.4;
  cfg.method = Estimator::kPcompUnbiased;
  EXPECT_DOUBLE_EQ(objective(cfg, p, n).value, risk_pcomp_unbiased(p, n, 0.4).value);
  cfg.method = Estimator::kPcompABS;
  EXPECT_DOUBLE_EQ(objective(cfg, p, n).value, risk_pcomp_corrected(p, n, 0.4, Correction::kAbs).value);
  cfg.method = Estimator::kNoisyUnbiased;
  EXPECT_DOUBLE_EQ(objective(cfg, p, n).value, risk_noisy_unbiased(p, n, flip_rates_from_prior(0.4)).value);
  cfg.method = Estimator::kRankPruning;
  ObjectiveContext ctx;
  ctx.weight_pos = 1.5;
  ctx.weight_neg = 1.2;
  EXPECT_DOUBLE_EQ(objective(cfg, p, n, ctx).value, risk_binary_biased(p, n, 1.5, 1.2).value);
  cfg.method = Estimator::kUU;
  cfg.uu_thetas = std::make_pair(0.7, 0.3);
  EXPECT_DOUBLE_EQ(objective(cfg, p, n).value, risk_uu(p, n, 0.7, 0.3, 0.4).value);
}

TEST(EstimatorConfig, Validation) {
  EstimatorConfig cfg;
  cfg.pi_plus = 1.2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.pi_plus = 0.5;
  EXPECT_NO_THROW(cfg.validate());
  cfg.method = Estimator::kUU;
  cfg.uu_thetas = std::make_pair(0.5, 0.5);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.method = Estimator::kPcompTeacher;
  cfg.teacher.ema_decay = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(EstimatorNames, RoundTrip) {
  for (Estimator e : kAllEstimators) EXPECT_EQ(parse_estimator(to_string(e)), e);
  EXPECT_EQ(to_string(Estimator::kPcompUnbiased), "pcomp_unbiased");
  EXPECT_THROW(parse_estimator("svm"), std::invalid_argument);
}
