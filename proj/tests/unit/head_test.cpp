#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "relkit/attnmap.hpp"
#include "relkit/head.hpp"
#include "test_support.hpp"

using namespace relkit;

namespace {

FeatureMatrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t dim) {
  std::normal_distribution<double> nd(1.0, 2.0);
  FeatureMatrix x(rows, dim);
  for (double& v : x.data) v = nd(gen);
  return x;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

LinearHead identity_head(std::vector<double> w, double b) {
  Rng rng(1);
  LinearHead h = LinearHead::initialize(w.size(), 0.0, rng);
  h.w = std::move(w);
  h.b = b;
  h.has_running_stats = true;
  h.bn_eps = 0.0;
  return h;
}

}  // namespace

TEST(PairFeature, AveragePoolsAndConcatenates) {
  EmbeddingRecord emb;
  emb.sentence_id = "e";
  emb.n = 4;
  emb.d = 2;
  emb.values = {1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(pair_feature(emb, {0, 1}, {3, 3}), (std::vector<double>{2, 3, 7, 8}));
  EXPECT_THROW(pair_feature(emb, {0, 1}, {3, 4}), DataError);
}

TEST(PairFeature, BuildFromPack) {
  relkit::testing::ScratchDir dir("features");
  const Corpus corpus = relkit::testing::write_synthetic_pack(dir.path(), 5, 3, 3);
  const TensorPack pack = TensorPack::open(dir.path());
  const FeatureMatrix x = build_features(corpus, pack, 12);
  ASSERT_EQ(x.rows, 5u);
  ASSERT_EQ(x.dim, 6u);
  const auto& e = pack.entry("syn2");
  const auto expected = pair_feature(pack.embedding("syn2", 12), e.tok_e1, e.tok_e2);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(x.row(2)[j], expected[j]);
  EXPECT_EQ(build_features(corpus, pack, 12, 3).data, x.data);
  EXPECT_THROW(build_features(corpus, pack, 11), DataError);
}

TEST(Head, ZeroWeightsScoreZero) {
  std::mt19937_64 gen(1);
  const auto x = random_matrix(gen, 10, 3);
  auto h = identity_head({0, 0, 0}, 0.0);
  for (double s : forward_infer(h, x, all_rows(10))) EXPECT_EQ(s, 0.0);
}

TEST(Head, IdentityNormalisationIsDotProduct) {
  std::mt19937_64 gen(2);
  const auto x = random_matrix(gen, 10, 3);
  const auto h = identity_head({0.5, -1.0, 2.0}, 0.25);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto r = x.row(i);
    EXPECT_NEAR(forward_infer(h, r), 0.25 + 0.5 * r[0] - r[1] + 2 * r[2], 1e-12);
  }
}

TEST(Head, InferBeforeTrainingIsLogicError) {
  Rng rng(1);
  const auto h = LinearHead::initialize(2, 0.3, rng);
  const std::vector<double> r{1, 2};
  EXPECT_THROW(forward_infer(h, r), std::logic_error);
  auto trained = identity_head({1, 1}, 0);
  EXPECT_THROW(forward_infer(trained, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Head, InitializeValidates) {
  Rng rng(1);
  EXPECT_THROW(LinearHead::initialize(0, 0.3, rng), std::invalid_argument);
  EXPECT_THROW(LinearHead::initialize(3, 1.0, rng), std::invalid_argument);
  const auto h = LinearHead::initialize(16, 0.3, rng);
  for (double w : h.w) EXPECT_LE(std::abs(w), 0.25);
}

TEST(Head, TrainModeReproducibleWithSameRng) {
  std::mt19937_64 gen(3);
  const auto x = random_matrix(gen, 12, 4);
  Rng init(5);
  const auto h = LinearHead::initialize(4, 0.3, init);
  Rng a(9), b(9), c(10);
  const auto ra = forward_train(h, x, all_rows(12), a).scores;
  EXPECT_EQ(ra, forward_train(h, x, all_rows(12), b).scores);
  EXPECT_NE(ra, forward_train(h, x, all_rows(12), c).scores);
}

TEST(Head, DropoutMaskIsInvertedAndRateMatches) {
  std::mt19937_64 gen(4);
  const auto x = random_matrix(gen, 400, 25);
  Rng init(1);
  const auto h = LinearHead::initialize(25, 0.3, init);
  Rng rng(2);
  const auto cache = forward_train(h, x, all_rows(400), rng);
  double kept = 0;
  for (double m : cache.mask) {
    ASSERT_TRUE(m == 0.0 || std::abs(m - 1.0 / 0.7) < 1e-12);
    kept += m != 0.0;
  }
  EXPECT_NEAR(kept / static_cast<double>(cache.mask.size()), 0.7, 0.01);
}

TEST(Head, BatchStatisticsNormalise) {
  std::mt19937_64 gen(5);
  const auto x = random_matrix(gen, 64, 3);
  Rng init(1), rng(2);
  const auto h = LinearHead::initialize(3, 0.0, init);
  const auto c = forward_train(h, x, all_rows(64), rng);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 64; ++i) m += c.xhat[i * 3 + j];
    m /= 64;
    for (std::size_t i = 0; i < 64; ++i) v += (c.xhat[i * 3 + j] - m) * (c.xhat[i * 3 + j] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 64, 1.0, 1e-4);
  }
}

TEST(Head, RunningStatsFirstBatchThenMomentum) {
  std::mt19937_64 gen(6);
  const auto x = random_matrix(gen, 20, 2);
  Rng init(1), rng(2);
  auto h = LinearHead::initialize(2, 0.0, init);
  const std::vector<std::size_t> first{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::vector<std::size_t> second{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  const auto c1 = forward_train(h, x, first, rng);
  update_running_stats(h, c1);
  EXPECT_TRUE(h.has_running_stats);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_DOUBLE_EQ(h.running_mean[j], c1.batch_mean[j]);
    EXPECT_NEAR(h.running_var[j], c1.batch_var[j] * 10.0 / 9.0, 1e-12);
  }
  const auto mean1 = h.running_mean;
  const auto var1 = h.running_var;
  const auto c2 = forward_train(h, x, second, rng);
  update_running_stats(h, c2);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(h.running_mean[j], 0.9 * mean1[j] + 0.1 * c2.batch_mean[j], 1e-12);
    EXPECT_NEAR(h.running_var[j], 0.9 * var1[j] + 0.1 * c2.batch_var[j] * 10.0 / 9.0, 1e-12);
  }
}

TEST(Head, InferIsDeterministic) {
  std::mt19937_64 gen(7);
  const auto x = random_matrix(gen, 30, 4);
  Rng init(1), rng(2);
  auto h = LinearHead::initialize(4, 0.5, init);
  update_running_stats(h, forward_train(h, x, all_rows(30), rng));
  const auto a = forward_infer(h, x, all_rows(30));
  forward_train(h, x, all_rows(30), rng);
  EXPECT_EQ(a, forward_infer(h, x, all_rows(30)));
}

TEST(Head, BackwardMatchesFiniteDifferencesWithDropout) {
  // A fixed seed reproduces the same dropout mask, so the objective is a
  // smooth function of the parameters.
  std::mt19937_64 gen(8);
  const auto x = random_matrix(gen, 16, 3);
  Rng init(1);
  auto h = LinearHead::initialize(3, 0.3, init);
  h.gamma = {1.2, 0.7, -0.4};
  h.beta = {0.1, -0.3, 0.5};
  const auto rows = all_rows(16);
  std::vector<double> coef(16);
  for (auto& c : coef) c = std::normal_distribution<double>(0, 1)(gen);
  auto value = [&](const LinearHead& head) {
    Rng r(77);
    const auto s = forward_train(head, x, rows, r).scores;
    double v = 0;
    for (std::size_t i = 0; i < s.size(); ++i) v += coef[i] * s[i] + 0.5 * s[i] * s[i];
    return v;
  };
  Rng r(77);
  const auto cache = forward_train(h, x, rows, r);
  std::vector<double> ds(16);
  for (std::size_t i = 0; i < 16; ++i) ds[i] = coef[i] + cache.scores[i];
  const HeadGradient g = backward(h, cache, ds);
  const double eps = 1e-6;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + eps;
    const double up = value(h);
    param = keep - eps;
    const double down = value(h);
    param = keep;
    EXPECT_NEAR(analytic, (up - down) / (2 * eps), 1e-5 * std::max(1.0, std::abs(analytic)));
  };
  for (std::size_t j = 0; j < 3; ++j) {
    check(h.w[j], g.w[j]);
    check(h.gamma[j], g.gamma[j]);
    check(h.beta[j], g.beta[j]);
  }
  check(h.b, g.b);
}

TEST(Head, PredictLabelsUsesSignWithTiesPositive) {
  FeatureMatrix x(3, 1);
  x.data = {1.0, -1.0, 0.0};
  const auto h = identity_head({1.0}, 0.0);
  EXPECT_EQ(predict_labels(h, x, all_rows(3)),
            (std::vector<Label>{Label::kPositive, Label::kNegative, Label::kPositive}));
}
