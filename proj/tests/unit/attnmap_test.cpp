#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "relkit/attnmap.hpp"
#include "relkit/eval.hpp"
#include "test_support.hpp"

using namespace relkit;
using relkit::testing::ScratchDir;

namespace {

AttentionRecord make_record(int n, std::vector<double> weights, TokenSpan e1, TokenSpan e2,
                            std::vector<bool> mask = {}) {
  AttentionRecord rec;
  rec.sentence_id = "r";
  rec.n = n;
  rec.weights = std::move(weights);
  rec.special_mask = mask.empty() ? std::vector<bool>(static_cast<std::size_t>(n), false) : mask;
  rec.tok_e1 = e1;
  rec.tok_e2 = e2;
  return rec;
}

ContextDistribution ctx_of(std::vector<double> w) { return {std::move(w), false}; }

const AttentionOptions kNoMask{false};

}  // namespace

TEST(EntityAttention, SingleTokenSpanReturnsRow) {
  const auto rec = make_record(3, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2}, {1, 1}, {2, 2});
  EXPECT_EQ(entity_attention(rec, {1, 1}, kNoMask), (std::vector<double>{0.1, 0.1, 0.8}));
}

TEST(EntityAttention, SpanMeanOfRows) {
  const auto rec = make_record(4,
                               {0.5, 0.5, 0, 0,  //
                                0.5, 0, 0.5, 0,  //
                                0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25},
                               {0, 1}, {3, 3});
  const auto a = entity_attention(rec, {0, 1}, kNoMask);
  EXPECT_EQ(a, (std::vector<double>{0.5, 0.25, 0.25, 0.0}));
}

TEST(EntityAttention, UniformMatrixGivesUniform) {
  const int n = 6;
  const auto rec = make_record(n, std::vector<double>(n * n, 1.0 / n), {0, 2}, {4, 5});
  for (double v : entity_attention(rec, {0, 2})) EXPECT_NEAR(v, 1.0 / n, 1e-15);
}

TEST(EntityAttention, MaskingZeroesSpecialColumnsAndRenormalises) {
  const auto rec = make_record(4,
                               {0.5, 0.25, 0.25, 0,  //
                                0.5, 0.25, 0.25, 0,  //
                                0.5, 0.25, 0.25, 0,  //
                                0.5, 0.25, 0.25, 0},
                               {1, 1}, {2, 2}, {true, false, false, true});
  EXPECT_EQ(entity_attention(rec, {1, 1}), (std::vector<double>{0, 0.5, 0.5, 0}));
  EXPECT_EQ(entity_attention(rec, {1, 1}, kNoMask), (std::vector<double>{0.5, 0.25, 0.25, 0}));
}

TEST(EntityAttention, AllMassOnSpecialTokensIsDomainError) {
  const auto rec = make_record(3, {1, 0, 0, 1, 0, 0, 1, 0, 0}, {1, 1}, {2, 2}, {true, false, false});
  EXPECT_THROW(entity_attention(rec, {1, 1}), std::domain_error);
  EXPECT_THROW(entity_attention(rec, {1, 3}), std::invalid_argument);
}

TEST(ContextDistribution, HandExamples) {
  const std::vector<double> a1{0.5, 0.5, 0, 0}, a2{0.5, 0, 0.5, 0};
  const auto l = localized_context_distribution(a1, a2);
  EXPECT_EQ(l.weights, (std::vector<double>{1, 0, 0, 0}));
  EXPECT_FALSE(l.degenerate);

  const std::vector<double> u(5, 0.2);
  for (double v : localized_context_distribution(u, u).weights) EXPECT_NEAR(v, 0.2, 1e-15);

  const auto d = localized_context_distribution(std::vector<double>{1, 0}, std::vector<double>{0, 1});
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.weights, (std::vector<double>{0.5, 0.5}));
}

TEST(ContextDistribution, DegenerateFallbackUsesContentTokens) {
  const std::vector<bool> mask{true, false, false, true};
  const auto d = localized_context_distribution(std::vector<double>{0, 1, 0, 0},
                                                std::vector<double>{0, 0, 1, 0}, &mask);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.weights, (std::vector<double>{0, 0.5, 0.5, 0}));
}

TEST(ContextDistribution, LengthMismatch) {
  EXPECT_THROW(localized_context_distribution(std::vector<double>{1}, std::vector<double>{0.5, 0.5}),
               std::invalid_argument);
}

TEST(ContextDistribution, PropertiesOnRandomInputs) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 30)(gen);
    const auto a1 = relkit::testing::random_distribution(gen, n, 0.4);
    const auto a2 = relkit::testing::random_distribution(gen, n, 0.4);
    const auto l = localized_context_distribution(a1, a2);
    EXPECT_NEAR(std::accumulate(l.weights.begin(), l.weights.end(), 0.0), 1.0, 1e-6);
    const auto oracle = relkit::testing::hadamard_oracle(a1, a2);
    EXPECT_EQ(l.degenerate, oracle.empty());
    const auto r = localized_context_distribution(a2, a1);
    std::vector<double> s1 = a1, s2 = a2;
    for (double& v : s1) v *= 3.7;
    for (double& v : s2) v *= 0.021;
    const auto s = localized_context_distribution(s1, s2);
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      EXPECT_NEAR(r.weights[k], l.weights[k], 1e-9);
      EXPECT_NEAR(s.weights[k], l.weights[k], 1e-9);
      if (!oracle.empty()) EXPECT_NEAR(oracle[k], l.weights[k], 1e-12);
    }
  }
}

TEST(Kl, Examples) {
  const std::vector<double> u(4, 0.25);
  EXPECT_NEAR(kl_divergence(u, u), 0.0, 1e-12);
  EXPECT_NEAR(kl_divergence(std::vector<double>{1, 0, 0, 0}, u), std::log(4.0), 1e-12);
  EXPECT_NEAR(kl_divergence(std::vector<double>{0.7, 0.3}, std::vector<double>{0.5, 0.5}), 0.082282, 1e-6);
  EXPECT_THROW(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), std::domain_error);
  EXPECT_THROW(kl_divergence(std::vector<double>{1}, u), std::invalid_argument);
}

TEST(Kl, NonNegativeAndMatchesOracle) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 25)(gen);
    const auto p = relkit::testing::random_distribution(gen, n, 0.3);
    const auto q = relkit::testing::random_distribution(gen, n, 0.0);
    const double kl = kl_divergence(p, q);
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl, relkit::testing::kl_oracle(p, q), 1e-9);
    EXPECT_NEAR(kl_divergence(q, q), 0.0, 1e-12);
  }
}

TEST(PicMI, Decisions) {
  const auto l = ctx_of({0.1, 0.7, 0.2});
  EXPECT_GE(picmi_statistic(l), 0.5);
  EXPECT_LT(picmi_statistic(l), 0.75);
  EXPECT_EQ(picmi_statistic(ctx_of({1, 0, 0})), 1.0);
  EXPECT_EQ(picmi_statistic({{0.5, 0.5}, true}), -std::numeric_limits<double>::infinity());
}

TEST(PicMIUp, Decisions) {
  // Argmax at index 1 carries entity attention 0.4 and 0.2: mean exactly 0.3.
  const auto l = ctx_of({0.1, 0.6, 0.3});
  const std::vector<double> a1{0.3, 0.4, 0.3}, a2{0.5, 0.2, 0.3};
  EXPECT_DOUBLE_EQ(picmi_up_statistic(l, a1, a2), 0.3);
  EXPECT_GE(picmi_up_statistic(l, a1, a2), 0.3);
  const std::vector<double> b{0.1, 0.1, 0.8};
  EXPECT_LT(picmi_up_statistic(l, b, b), 0.2);
  // Argmax at index 2 with entity values 0.6 and 0.2.
  const auto m = ctx_of({0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(picmi_up_statistic(m, std::vector<double>{0.2, 0.2, 0.6}, std::vector<double>{0.4, 0.4, 0.2}), 0.4);
  // Ties take the lowest index.
  EXPECT_DOUBLE_EQ(picmi_up_statistic(ctx_of({0.5, 0.5}), std::vector<double>{0.9, 0.1}, std::vector<double>{0.7, 0.3}), 0.8);
}

TEST(ConEx, Statistics) {
  EXPECT_NEAR(conex_statistic(ctx_of({0.25, 0.25, 0.25, 0.25})), 0.0, 1e-12);
  EXPECT_NEAR(conex_statistic(ctx_of({1, 0, 0, 0})), std::log(4.0), 1e-12);
  const double kl = conex_statistic(ctx_of({0.4, 0.3, 0.2, 0.1}));
  EXPECT_NEAR(kl, 0.4 * std::log(1.6) + 0.3 * std::log(1.2) + 0.2 * std::log(0.8) + 0.1 * std::log(0.4), 1e-12);
  EXPECT_NEAR(kl, 0.106440, 1e-6);
  EXPECT_GE(kl, 0.05);
  EXPECT_LT(kl, 0.14);
  EXPECT_EQ(conex_statistic({{0.5, 0.5}, true}), 0.0);
  // Support restricted to content tokens.
  const std::vector<bool> mask{true, false, false};
  EXPECT_NEAR(conex_statistic(ctx_of({0, 0.5, 0.5}), &mask), 0.0, 1e-12);
}

TEST(Predict, RecordLevelDecisions) {
  // Both entity rows concentrate on token 2.
  const auto rec = make_record(3, {0, 0, 1, 0.1, 0, 0.9, 0.2, 0.2, 0.6}, {0, 0}, {1, 1});
  EXPECT_EQ(picmi(rec, 0.5), Label::kPositive);
  EXPECT_EQ(conex(rec, 0.1), Label::kPositive);
  EXPECT_THROW(conex(rec, 0.0), std::invalid_argument);
  const auto uni = make_record(3, std::vector<double>(9, 1.0 / 3), {0, 0}, {1, 1});
  EXPECT_EQ(conex(uni, 0.01), Label::kNegative);
  // Disjoint attention: degenerate, PicMI rejects at any threshold.
  const auto dis = make_record(3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0}, {1, 1});
  EXPECT_EQ(picmi(dis, 0.0), Label::kNegative);
  EXPECT_EQ(picmi_up(dis, 0.0), Label::kNegative);
}

TEST(Thresholds, DefaultRanges) {
  const auto picmi_grid = ThresholdRange::defaults(AttnMethod::kPicMI).values();
  ASSERT_EQ(picmi_grid.size(), 9u);
  EXPECT_DOUBLE_EQ(picmi_grid.front(), 0.30);
  EXPECT_DOUBLE_EQ(picmi_grid.back(), 0.70);
  const auto conex_grid = ThresholdRange::defaults(AttnMethod::kConEx).values();
  ASSERT_EQ(conex_grid.size(), 10u);
  EXPECT_DOUBLE_EQ(conex_grid.front(), 0.05);
  EXPECT_DOUBLE_EQ(conex_grid.back(), 0.14);
  EXPECT_DOUBLE_EQ(conex_grid[3], 0.08);
  EXPECT_EQ(ThresholdRange::defaults(AttnMethod::kPicMIUp).values().size(), 9u);
  EXPECT_THROW((ThresholdRange{0.5, 0.4, 0.1}.values()), std::invalid_argument);
  EXPECT_THROW((ThresholdRange{0.1, 0.4, 0.0}.values()), std::invalid_argument);
}

TEST(Methods, ParseNames) {
  EXPECT_EQ(parse_attn_method("picmi"), AttnMethod::kPicMI);
  EXPECT_EQ(parse_attn_method("picmi-up"), AttnMethod::kPicMIUp);
  EXPECT_EQ(parse_attn_method("conex"), AttnMethod::kConEx);
  EXPECT_THROW(parse_attn_method("max"), std::invalid_argument);
  for (auto m : {AttnMethod::kPicMI, AttnMethod::kPicMIUp, AttnMethod::kConEx}) {
    EXPECT_EQ(parse_attn_method(to_string(m)), m);
  }
}

TEST(Pack, WriteOpenRoundTrip) {
  ScratchDir dir("pack");
  const Corpus corpus = relkit::testing::write_synthetic_pack(dir.path(), 2, 5);
  const TensorPack pack = TensorPack::open(dir.path());
  EXPECT_EQ(pack.size(), 2u);
  EXPECT_EQ(pack.manifest().at("encoder"), "synthetic");
  const auto rec = pack.attention("syn0", 10);
  EXPECT_EQ(rec.n, corpus[0].token_count() + 2);
  EXPECT_EQ(rec.tok_e1.start, corpus[0].e1.start + 1);
  rec.validate();
  EXPECT_TRUE(pack.has_layer("syn1", 11));
  EXPECT_FALSE(pack.has_layer("syn1", 3));
  EXPECT_THROW(pack.attention("syn1", 3), DataError);
  EXPECT_THROW(pack.attention("zzz", 10), DataError);
  const auto emb = pack.embedding("syn0", 12);
  EXPECT_EQ(emb.row(0).size(), 4u);
}

TEST(Pack, BlobSizeMismatch) {
  ScratchDir dir("pack_bad");
  relkit::testing::write_synthetic_pack(dir.path(), 1, 5);
  std::filesystem::resize_file(dir / "syn0.L10.attn", 12);
  try {
    TensorPack::open(dir.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("size mismatch"), std::string::npos);
  }
}

TEST(Pack, NonFiniteValueRejected) {
  ScratchDir dir("pack_nan");
  PackWriter w(dir.path());
  std::vector<float> m(9, 1.0f / 3);
  m[4] = std::numeric_limits<float>::quiet_NaN();
  w.add("a", {false, false, false}, {0, 0}, {2, 2}, {{10, m}});
  w.finish();
  const TensorPack pack = TensorPack::open(dir.path());
  try {
    pack.attention("a", 10);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(Pack, IndexValidation) {
  ScratchDir dir("pack_idx");
  EXPECT_THROW(TensorPack::open(dir.path()), DataError);
  relkit::testing::write_text(dir / "index.json", "{ not json");
  EXPECT_THROW(TensorPack::open(dir.path()), DataError);
  relkit::testing::write_text(dir / "index.json",
                              R"({"sentences": {"a": {"n": 3, "special_mask": [1,0,0], "tok_e1": [0,0], "tok_e2": [2,2], "layers": []}}})");
  EXPECT_THROW(TensorPack::open(dir.path()), DataError);  // entity on a special token
  relkit::testing::write_text(dir / "index.json",
                              R"({"sentences": {"a": {"n": 3, "special_mask": [0,0,0], "tok_e1": [0,1], "tok_e2": [1,2], "layers": []}}})");
  EXPECT_THROW(TensorPack::open(dir.path()), DataError);  // overlap
  relkit::testing::write_text(dir / "index.json",
                              R"({"sentences": {"a": {"n": 3, "special_mask": [0,0,0], "tok_e1": [0,0], "tok_e2": [2,2], "layers": [10]}}})");
  EXPECT_THROW(TensorPack::open(dir.path()), DataError);  // missing blob
}

TEST(Record, RowSumValidation) {
  auto rec = make_record(2, {0.5, 0.5, 0.9, 0.3}, {0, 0}, {1, 1});
  EXPECT_THROW(rec.validate(), DataError);
  rec.weights = {0.5, 0.5, 0.7, 0.3};
  EXPECT_NO_THROW(rec.validate());
}

TEST(Sweep, MonotoneAndSorted) {
  ScratchDir dir("sweep");
  const Corpus corpus = relkit::testing::write_synthetic_pack(dir.path(), 60, 77);
  const TensorPack pack = TensorPack::open(dir.path());
  for (AttnMethod m : {AttnMethod::kPicMI, AttnMethod::kPicMIUp, AttnMethod::kConEx}) {
    const auto rows = sweep_thresholds(m, corpus, pack, 10, ThresholdRange::defaults(m));
    ASSERT_EQ(rows.size(), ThresholdRange::defaults(m).values().size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_LT(rows[i - 1].threshold, rows[i].threshold);
      EXPECT_LE(rows[i].predicted_positive, rows[i - 1].predicted_positive);
      EXPECT_LE(rows[i].metrics.recall, rows[i - 1].metrics.recall);
    }
    // Sweep agrees with the single-threshold path.
    const auto preds = attention_predict_corpus(m, corpus, pack, 10, rows[2].threshold);
    const auto metrics = score(preds, corpus.gold_labels());
    EXPECT_EQ(metrics.tp, rows[2].metrics.tp);
    EXPECT_EQ(metrics.fp, rows[2].metrics.fp);
    EXPECT_EQ(attention_predict_corpus(m, corpus, pack, 10, rows[2].threshold, {}, 4), preds);
  }
}

TEST(Sweep, DegeneratePackGivesZeroRecall) {
  // Uniform attention everywhere: ConEx statistic is 0, so nothing passes.
  ScratchDir dir("sweep_uniform");
  PackWriter w(dir.path());
  std::vector<SentenceRecord> records;
  for (int s = 0; s < 5; ++s) {
    const std::string id = "u" + std::to_string(s);
    w.add(id, {false, false, false, false}, {0, 0}, {3, 3}, {{10, std::vector<float>(16, 0.25f)}});
    records.push_back({id, {"a", "b", "c", "d"}, {0, 0}, {3, 3}, Label::kPositive});
  }
  w.finish();
  const Corpus corpus(records);
  const auto rows = sweep_thresholds(AttnMethod::kConEx, corpus, TensorPack::open(dir.path()), 10,
                                     ThresholdRange::defaults(AttnMethod::kConEx));
  for (const auto& r : rows) EXPECT_EQ(r.metrics.recall, 0.0);
}

TEST(Sweep, MissingLayerIsDataError) {
  ScratchDir dir("sweep_missing");
  const Corpus corpus = relkit::testing::write_synthetic_pack(dir.path(), 3, 1);
  EXPECT_THROW(sweep_thresholds(AttnMethod::kPicMI, corpus, TensorPack::open(dir.path()), 7,
                                ThresholdRange::defaults(AttnMethod::kPicMI)),
               DataError);
}
