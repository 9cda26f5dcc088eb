// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pointshade/training.hpp"
#include "support/gradcheck.hpp"
#include "support/stats.hpp"

namespace pointshade {
namespace {

Tensor<double> constant_rgba(std::size_t h, std::size_t w, double r, double g, double b, double a) {
  Tensor<double> t({4, h, w});
  const double v[4] = {r, g, b, a};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < h * w; ++i) t[c * h * w + i] = v[c];
  return t;
}

TEST(Loss, IdenticalImagesGiveZero) {
  auto t = constant_rgba(3, 5, 0.2, 0.4, 0.6, 0.8);
  auto [total, comp] = loss(t, t, LossWeights{});
  EXPECT_EQ(total, 0.0);
  EXPECT_EQ(comp.mse_rgb, 0.0);
  EXPECT_EQ(comp.l1_magnitude, 0.0);
  EXPECT_EQ(comp.l1_alpha, 0.0);
}

TEST(Loss, ConstantRgbOffsetClosedForm) {
  auto t = constant_rgba(4, 4, 0.2, 0.3, 0.4, 1.0);
  auto p = constant_rgba(4, 4, 0.3, 0.4, 0.5, 1.0);
  auto [total, comp] = loss(p, t, LossWeights{});
  EXPECT_NEAR(comp.mse_rgb, 0.01, 1e-12);
  const double mag = std::sqrt(0.09 + 0.16 + 0.25) - std::sqrt(0.04 + 0.09 + 0.16);
  EXPECT_NEAR(comp.l1_magnitude, mag, 1e-12);
  EXPECT_EQ(comp.l1_alpha, 0.0);
  EXPECT_NEAR(total, 0.01 + mag, 1e-12);
}

TEST(Loss, AlphaTermIsolated) {
  auto t = constant_rgba(2, 3, 0.5, 0.5, 0.5, 0.3);
  auto p = constant_rgba(2, 3, 0.5, 0.5, 0.5, 0.5);
  auto [total, comp] = loss(p, t, LossWeights{1.0, 1.0, 2.5});
  EXPECT_NEAR(comp.l1_alpha, 0.2, 1e-12);
  EXPECT_NEAR(total, 2.5 * 0.2, 1e-12);
}

TEST(Loss, NonNegativeAndZeroOnlyWhenEqual) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    auto a = testing::random_tensor({4, 3, 3}, rng, 0.0, 1.0), b = a;
    EXPECT_EQ(loss(a, b, LossWeights{}).first, 0.0);
    b[std::uniform_int_distribution<std::size_t>(0, b.numel() - 1)(rng)] += 0.01;
    EXPECT_GT(loss(a, b, LossWeights{}).first, 0.0);
  }
}

TEST(Loss, ShapeMismatchAndBadWeightsThrow) {
  auto a = constant_rgba(2, 2, 0, 0, 0, 0);
  auto b = constant_rgba(2, 3, 0, 0, 0, 0);
  EXPECT_THROW(loss(a, b, LossWeights{}), std::invalid_argument);
  EXPECT_THROW(loss(a, a, LossWeights{0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(loss(a, a, LossWeights{-1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(loss(Tensor<double>({3, 2, 2}), Tensor<double>({3, 2, 2}), LossWeights{}),
               std::invalid_argument);
}

TEST(Noise, ZeroFractionLeavesCloudUnchanged) {
  std::mt19937_64 rng(1);
  PointCloud c{{{0, 0, 0}, {1, 2, 3}}};
  EXPECT_EQ(add_uniform_noise(c, 0.0, rng).points, c.points);
  EXPECT_THROW(add_uniform_noise(c, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(add_uniform_noise(c, -0.1, rng), std::invalid_argument);
}

TEST(Noise, AddsPointsInsideBoundingBox) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  PointCloud c;
  for (int i = 0; i < 100; ++i) c.points.push_back({u(rng), 0.5 * u(rng), 3.0 * u(rng)});
  Vec3 lo = c.points[0], hi = lo;
  for (const auto& p : c.points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  auto out = add_uniform_noise(c, 0.1, rng);
  ASSERT_EQ(out.size(), 110u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out.points[i], c.points[i]);
  for (std::size_t i = 100; i < 110; ++i) {
    const auto& p = out.points[i];
    EXPECT_TRUE(p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z);
  }
}

TEST(Noise, UniformPerAxisByKolmogorovSmirnov) {
  std::mt19937_64 rng(77);
  PointCloud c{{{-1, 0, 2}, {3, 1, 5}}};
  // Large enough base so that rho * N = 1e5 noise points.
  PointCloud base;
  for (int i = 0; i < 200000; ++i) base.points.push_back(c.points[std::size_t(i % 2)]);
  auto out = add_uniform_noise(base, 0.5, rng);
  ASSERT_EQ(out.size(), 300000u);
  std::vector<double> xs, ys, zs;
  for (std::size_t i = base.size(); i < out.size(); ++i) {
    xs.push_back(out.points[i].x);
    ys.push_back(out.points[i].y);
    zs.push_back(out.points[i].z);
  }
  const double crit = testing::ks_critical_1pct(xs.size());
  EXPECT_LT(testing::ks_uniform(xs, -1, 3), crit);
  EXPECT_LT(testing::ks_uniform(ys, 0, 1), crit);
  EXPECT_LT(testing::ks_uniform(zs, 2, 5), crit);
}

TEST(Adam, MatchesHandComputedUpdates) {
  std::vector<Parameter<double>> ps{Parameter<double>("p", Tensor<double>({1}, 1.0))};
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Adam<double> adam(cfg, ps);
  double m = 0, v = 0, x = 1.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.0 * x;  // d/dx x^2
    ps[0].grad[0] = g;
    adam.step(ps);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(ps[0].value[0], x, 1e-14);
  }
  EXPECT_EQ(adam.steps(), 5u);
}

TEST(Adam, LrScaleMultipliesTheStep) {
  std::vector<Parameter<double>> ps{Parameter<double>("a", Tensor<double>({1}, 1.0)),
                                    Parameter<double>("b", Tensor<double>({1}, 1.0))};
  ps[1].lr_scale = 0.25;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Adam<double> adam(cfg, ps);
  for (int t = 0; t < 3; ++t) {
    ps[0].grad[0] = ps[1].grad[0] = 0.7 + t;
    adam.step(ps);
  }
  EXPECT_NEAR(1.0 - ps[1].value[0], 0.25 * (1.0 - ps[0].value[0]), 1e-15);
}

TEST(Adam, StepFactorMatchesScaledLearningRate) {
  std::vector<Parameter<double>> a{Parameter<double>("p", Tensor<double>({2}, std::vector<double>{1, -1}))};
  auto b = a;
  AdamConfig full, half;
  full.learning_rate = 0.2;
  half.learning_rate = 0.1;
  Adam<double> fa(full, a), hb(half, b);
  for (int t = 0; t < 3; ++t) {
    a[0].grad[0] = b[0].grad[0] = 0.3 * t - 0.2;
    a[0].grad[1] = b[0].grad[1] = 1.5;
    fa.step(a, 0.5);
    hb.step(b);
  }
  EXPECT_NEAR(a[0].value[0], b[0].value[0], 1e-15);
  EXPECT_NEAR(a[0].value[1], b[0].value[1], 1e-15);
}

TEST(Adam, ZeroGradientFirstStepLeavesParametersUnchanged) {
  std::vector<Parameter<float>> ps{Parameter<float>("p", Tensor<float>({3}, std::vector<float>{1, -2, 3}))};
  const auto before = ps[0].value;
  Adam<float> adam(AdamConfig{}, ps);
  adam.step(ps);
  EXPECT_EQ(ps[0].value, before);
}

std::vector<TrainingExample> tiny_dataset(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.zbuffer.width = ex.zbuffer.height = 8;
    ex.zbuffer.intensities.resize(64);
    ex.target = RgbaImage(8, 8);
    ex.settings.color = {u(rng), u(rng), u(rng)};
    ex.settings.light = {u(rng) * 6.0, u(rng), 3.0};
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const bool in = (x - 4) * (x - 4) + (y - 3) * (y - 3) < 6 + i % 3;
        ex.zbuffer.intensities[std::size_t(y) * 8 + x] = in ? float(0.5 + 0.05 * x) : 0.0f;
        for (int c = 0; c < 3; ++c) ex.target.at(x, y, c) = in ? float(ex.settings.color[c]) : 0.0f;
        ex.target.at(x, y, 3) = in ? 1.0f : 0.0f;
      }
    out.push_back(ex);
  }
  return out;
}

UNetConfig tiny_config() {
  UNetConfig c;
  c.levels = 1;
  c.base_channels = 4;
  c.style_dim = 16;
  c.init_seed = 3;
  return c;
}

TEST(Train, ZeroLearningRateLeavesParametersBitwiseUnchanged) {
  auto data = tiny_dataset(3, 1);
  auto m = Model<float>::create(tiny_config(), 1);
  const auto before = m;
  TrainConfig tc;
  tc.steps = 3;
  tc.adam.learning_rate = 0.0;
  train(m, std::span<const TrainingExample>(data), tc);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    EXPECT_EQ(m.parameters()[i].value, before.parameters()[i].value);
}

TEST(Train, SameSeedGivesIdenticalLossCurves) {
  auto data = tiny_dataset(4, 2);
  TrainConfig tc;
  tc.steps = 6;
  tc.batch_size = 2;
  tc.seed = 8;
  auto a = Model<float>::create(tiny_config(), 1), b = a;
  auto ha = train(a, std::span<const TrainingExample>(data), tc);
  auto hb = train(b, std::span<const TrainingExample>(data), tc);
  ASSERT_EQ(ha.size(), 6u);
  for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].total, hb[i].total);
}

TEST(Train, SingleExampleOverfits) {
  auto data = tiny_dataset(1, 3);
  TrainConfig tc;
  tc.steps = 500;
  tc.adam.learning_rate = 1e-3;
  auto m = Model<float>::create(tiny_config(), 1);
  auto h = train(m, std::span<const TrainingExample>(data), tc);
  const double final_loss = evaluate_loss(m, std::span<const TrainingExample>(data), LossWeights{}).first;
  EXPECT_LT(final_loss, h.front().total / 10.0);
}

TEST(Train, WarmupRampsTheLearningRate) {
  // A single-example dataset makes every step see the same batch, so the ramped run
  // must match a manual loop that scales each step by (k + 1) / warmup.
  auto data = tiny_dataset(1, 6);
  TrainConfig tc;
  tc.steps = 5;
  tc.warmup_steps = 4;
  tc.adam.learning_rate = 1e-3;
  auto a = Model<float>::create(tiny_config(), 1), b = a;
  train(a, std::span<const TrainingExample>(data), tc);

  Adam<float> adam(tc.adam, b.parameters());
  Tensor<float> zb, st, tgt;
  const std::size_t idx[1] = {0};
  assemble_batch<float>(std::span<const TrainingExample>(data), idx, zb, st, tgt);
  for (int k = 0; k < tc.steps; ++k) {
    b.zero_grad();
    Tape<float> tape;
    tape.backward(rgba_loss(b.forward(tape, zb, st), tgt, tc.weights).total);
    b.accumulate_gradients(tape);
    adam.step(b.parameters(), std::min(1.0, double(k + 1) / 4.0));
  }
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value) << a.parameters()[i].name;

  tc.warmup_steps = -1;
  EXPECT_THROW(train(a, std::span<const TrainingExample>(data), tc), std::invalid_argument);
}

TEST(Train, NonFiniteLossAborts) {
  auto data = tiny_dataset(1, 4);
  data[0].target.at(2, 2, 3) = std::nanf("");
  auto m = Model<float>::create(tiny_config(), 1);
  TrainConfig tc;
  tc.steps = 2;
  EXPECT_THROW(train(m, std::span<const TrainingExample>(data), tc), TrainingError);
}

TEST(Train, RejectsEmptyDataAndMixedSizes) {
  auto m = Model<float>::create(tiny_config(), 1);
  std::vector<TrainingExample> none;
  EXPECT_THROW(train(m, std::span<const TrainingExample>(none), TrainConfig{}), std::invalid_argument);
  auto data = tiny_dataset(2, 5);
  data[1].zbuffer.width = 4;
  data[1].zbuffer.intensities.resize(32);
  TrainConfig tc;
  tc.steps = 2;
  tc.batch_size = 2;
  EXPECT_THROW(train(m, std::span<const TrainingExample>(data), tc), std::invalid_argument);
}

TEST(Train, CheckpointCallbackCadence) {
  auto data = tiny_dataset(2, 6);
  auto m = Model<float>::create(tiny_config(), 1);
  TrainConfig tc;
  tc.steps = 5;
  tc.checkpoint_every = 2;
  std::vector<int> seen;
  TrainCallbacks<float> cb;
  cb.on_checkpoint = [&](int step, const Model<float>&) { seen.push_back(step); };
  train(m, std::span<const TrainingExample>(data), tc, cb);
  EXPECT_EQ(seen, (std::vector<int>{2, 4}));
}

}  // namespace
}  // namespace pointshade
