#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <psvf/error.hpp>
#include <psvf/model.hpp>

#include "oracle.hpp"

using namespace psvf;

namespace {

Matrix<float> random_input(int frames, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  Matrix<float> x(frames, channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return x;
}

}  // namespace

TEST(Tdnn, DefaultShapes) {
  const TdnnConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.input_channels(), 24);
  EXPECT_EQ(cfg.pooled_dim(), 768);
  // 1 + 4*1 + 2*2 + 2*3
  EXPECT_EQ(cfg.receptive_field(), 15);
  std::size_t want = 0;
  for (const BlockSpec& b : cfg.blocks)
    want += std::size_t(b.kernel) * b.in_channels * b.out_channels + b.out_channels;
  want += 768 * 64 + 64 + 64 + 1;
  EXPECT_EQ(parameter_count(cfg), want);
  const auto p = Parameters<float>::zeros(cfg);
  EXPECT_EQ(p.size(), want);
  EXPECT_EQ(p.tensors.size(), 14u);
  EXPECT_EQ(p.block_weight(0).rows(), 128);
  EXPECT_EQ(p.block_weight(0).cols(), 5 * 24);
  EXPECT_EQ(p.embed_weight().rows(), 64);
  EXPECT_EQ(p.embed_weight().cols(), 768);
}

TEST(Tdnn, ConfigValidation) {
  TdnnConfig c;
  c.frozen_blocks = 6;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.blocks[1].in_channels = 64;
  EXPECT_THROW(c.validate(false), ConfigError);
  c = {};
  c.embed_dim = 32;
  EXPECT_THROW(c.validate(true), ConfigError);
  EXPECT_NO_THROW(c.validate(false));
  EXPECT_NO_THROW(oracle::reduced_config().validate(false));
}

TEST(Tdnn, ScoreInUnitIntervalAndEmbeddingNonNegative) {
  const TdnnConfig cfg;
  const auto p = Parameters<float>::he_uniform(cfg, 1);
  for (int frames : {15, 16, 100, 298}) {
    const auto o = forward(random_input(frames, 24, frames), p, cfg);
    EXPECT_GT(o.score, 0.f);
    EXPECT_LT(o.score, 1.f);
    ASSERT_EQ(o.embedding.size(), 64);
    EXPECT_TRUE((o.embedding.array() >= 0).all());
    EXPECT_FALSE(o.cache.has_value());
  }
}

TEST(Tdnn, TooFewFrames) {
  const TdnnConfig cfg;
  const auto p = Parameters<float>::he_uniform(cfg, 1);
  EXPECT_THROW(forward(random_input(14, 24, 0), p, cfg), TooFewFrames);
}

TEST(Tdnn, PrefixThenSuffixEqualsFullPass) {
  const TdnnConfig cfg;
  const auto p = Parameters<float>::he_uniform(cfg, 3);
  const auto x = random_input(120, 24, 4);
  const auto full = forward(x, p, cfg);
  const auto mid = run_blocks(x, p, cfg, 0, 2);
  EXPECT_EQ(mid.rows(), 120 - 4 - 4);
  const auto rest = forward(mid, p, cfg, false, 2);
  EXPECT_EQ(full.score, rest.score);
  EXPECT_EQ(full.embedding, rest.embedding);
}

TEST(Tdnn, HeInitIsSeededAndBounded) {
  const TdnnConfig cfg;
  const auto a = Parameters<float>::he_uniform(cfg, 7);
  EXPECT_EQ(a, Parameters<float>::he_uniform(cfg, 7));
  EXPECT_NE(a, Parameters<float>::he_uniform(cfg, 8));
  for (int b = 0; b < 5; ++b) {
    const double bound = std::sqrt(6.0 / a.block_weight(b).cols());
    EXPECT_LE(a.block_weight(b).cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(a.block_bias(b).cwiseAbs().maxCoeff(), 0.f);
  }
}

TEST(Tdnn, ConvolutionMatchesDirectSum) {
  TdnnConfig cfg;
  cfg.blocks = {{3, 2, 3, 2}};
  cfg.embed_dim = 2;
  cfg.frozen_blocks = 0;
  auto p = Parameters<double>::he_uniform(cfg, 5);
  p.block_bias(0) << 0.1, -0.2;
  Matrix<double> x(9, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::sin(1.0 + i);
  const Matrix<double> y = run_blocks(x, p, cfg, 0, 1);
  ASSERT_EQ(y.rows(), 5);
  for (int t = 0; t < 5; ++t)
    for (int o = 0; o < 2; ++o) {
      double s = p.block_bias(0)(o, 0);
      for (int j = 0; j < 3; ++j)
        for (int c = 0; c < 3; ++c) s += p.block_weight(0)(o, j * 3 + c) * x(t + 2 * j, c);
      EXPECT_NEAR(y(t, o), std::max(0.0, s), 1e-12);
    }
}

TEST(StatsPool, MatchesTwoPass) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 2.0);
  Matrix<double> m(50, 6);
  std::vector<std::vector<double>> rows(50, std::vector<double>(6));
  for (int t = 0; t < 50; ++t)
    for (int c = 0; c < 6; ++c) rows[t][c] = m(t, c) = n(rng);
  const Vector<double> s = stats_pool(m);
  const auto want = oracle::two_pass_stats(rows);
  ASSERT_EQ(s.size(), 12);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(s[i], want[i], 1e-12);
}

TEST(Gradient, MatchesFiniteDifferencesOverSeeds) {
  const TdnnConfig cfg = oracle::reduced_config();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const oracle::GradCheck r = oracle::finite_difference_check(seed, cfg, 20);
    EXPECT_GT(r.checked, r.skipped) << seed;
    EXPECT_LT(r.max_rel_error, 1e-4) << seed;
  }
}

TEST(Gradient, FrozenBlocksGetNothing) {
  const TdnnConfig cfg;
  auto p = Parameters<float>::he_uniform(cfg, 2);
  apply_freeze(p, 2);
  const auto o = forward(random_input(60, 24, 1), p, cfg, true);
  auto g = Parameters<float>::zeros(cfg);
  backward(o, 1.0f, p, cfg, g);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(g.tensors[t].value.cwiseAbs().maxCoeff(), 0.f);
  EXPECT_GT(g.head_weight().cwiseAbs().maxCoeff(), 0.f);
  EXPECT_GT(g.tensors[4].value.cwiseAbs().maxCoeff(), 0.f);
}

TEST(Gradient, NeedsTrainingCache) {
  const TdnnConfig cfg;
  const auto p = Parameters<float>::he_uniform(cfg, 2);
  const auto o = forward(random_input(30, 24, 1), p, cfg);
  auto g = Parameters<float>::zeros(cfg);
  EXPECT_THROW(backward(o, 1.0f, p, cfg, g), MissingCache);
}

TEST(Freeze, Range) {
  auto p = Parameters<float>::zeros(TdnnConfig{});
  apply_freeze(p, 5);
  for (std::size_t t = 0; t < 10; ++t) EXPECT_TRUE(p.tensors[t].frozen);
  for (std::size_t t = 10; t < 14; ++t) EXPECT_FALSE(p.tensors[t].frozen);
  apply_freeze(p, 0);
  for (const auto& t : p.tensors) EXPECT_FALSE(t.frozen);
  EXPECT_THROW(apply_freeze(p, 6), ConfigError);
  EXPECT_THROW(apply_freeze(p, -1), ConfigError);
}

TEST(L1, LossAndGradient) {
  EXPECT_DOUBLE_EQ(l1_loss({0.2, 0.9}, {0.5, 0.5}), 0.35);
  EXPECT_EQ(l1_grad({0.2, 0.9, 0.5}, {0.5, 0.5, 0.5}), (std::vector<double>{-1.0 / 3, 1.0 / 3, 0.0}));
  EXPECT_THROW(l1_loss({0.1}, {0.1, 0.2}), LengthMismatch);
  EXPECT_THROW(l1_loss({}, {}), LengthMismatch);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TdnnConfig cfg = oracle::reduced_config();
  auto p = Parameters<float>::he_uniform(cfg, 1);
  apply_freeze(p, 1);
  const auto before = p;
  auto g = Parameters<float>::zeros(cfg);
  for (auto& t : g.tensors) t.value.setConstant(0.25f);
  g.head_bias()(0, 0) = -3.0f;
  Adam opt({}, p);
  opt.step(p, g);
  EXPECT_EQ(opt.steps(), 1);
  for (int t = 0; t < 2; ++t) EXPECT_EQ(p.tensors[t], before.tensors[t]);
  EXPECT_NEAR(p.tensors[2].value(0, 0) - before.tensors[2].value(0, 0), -1e-3, 1e-7);
  EXPECT_NEAR(p.head_bias()(0, 0) - before.head_bias()(0, 0), 1e-3, 1e-7);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  TdnnConfig cfg = oracle::reduced_config();
  auto p = Parameters<float>::he_uniform(cfg, 1);
  const auto before = p;
  auto g = Parameters<float>::zeros(cfg);
  for (auto& t : g.tensors) t.value.setConstant(1.0f);
  AdamConfig ac;
  ac.lr = 0.0;
  Adam opt(ac, p);
  for (int i = 0; i < 10; ++i) opt.step(p, g);
  EXPECT_EQ(p, before);
}
