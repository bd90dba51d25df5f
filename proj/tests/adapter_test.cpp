// Copyright 2026 The SMART Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "smart/adapter.hpp"
#include "smart/toy_bench.hpp"
#include "test_util.hpp"

namespace smart {
namespace {

// Straight-line LN -> projection -> normalize for one row, written without
// any of the library's helpers.
std::vector<double> straight_line_forward(const std::vector<double>& h,
                                          const AdapterParams<double>& p) {
  const std::size_t H = h.size(), d = p.output_dim();
  double mean = 0;
  for (double v : h) mean += v;
  mean /= H;
  double var = 0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= H;
  std::vector<double> ln(H);
  for (std::size_t k = 0; k < H; ++k) {
    ln[k] = p.ln_scale[k] * (h[k] - mean) / std::sqrt(var + p.ln_epsilon) +
            p.ln_shift[k];
  }
  std::vector<double> z(d);
  for (std::size_t o = 0; o < d; ++o) {
    z[o] = p.proj_bias[o];
    for (std::size_t k = 0; k < H; ++k) z[o] += ln[k] * p.proj_weight(k, o);
  }
  double n = 0;
  for (double v : z) n += v * v;
  n = std::sqrt(n);
  for (double& v : z) v /= n;
  return z;
}

TEST(AdapterParams, InitializationFollowsFanBalancedRule) {
  auto p = AdapterParams<double>::initialize(64, 128, 1);
  double limit = std::sqrt(6.0 / (64 + 128));
  for (double w : p.proj_weight.data()) {
    EXPECT_LE(std::abs(w), limit);
  }
  for (double v : p.ln_scale) EXPECT_EQ(v, 1.0);
  for (double v : p.ln_shift) EXPECT_EQ(v, 0.0);
  for (double v : p.proj_bias) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p, AdapterParams<double>::initialize(64, 128, 1));
  EXPECT_NE(p, AdapterParams<double>::initialize(64, 128, 2));
  EXPECT_EQ(p.num_parameters(), 64u * 2 + 64u * 128 + 128);
}

TEST(AdapterParams, RejectsNonFinite) {
  auto p = AdapterParams<double>::initialize(4, 2, 1);
  p.proj_bias[0] = std::nan("");
  EXPECT_THROW(p.validate(), Error);
}

TEST(AdapterForward, RowsAreUnitNorm) {
  Rng rng(1);
  auto p = testing::random_params(rng, 16, 8);
  auto x = testing::random_matrix(rng, 20, 16, 3.0);
  auto r = adapter_forward<double>(x, p);
  for (std::size_t i = 0; i < r.rows(); ++i) {
    EXPECT_NEAR(norm64(r.row(i)), 1.0, 1e-6);
  }
}

TEST(AdapterForward, PositiveScaleInvariance) {
  Rng rng(2);
  auto p = testing::random_params(rng, 32, 8);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = testing::random_matrix(rng, 4, 32).cast<double>();
    double alpha = rng.uniform(0.5, 8.0);
    MatrixD scaled = x;
    for (auto& v : scaled.data()) v *= alpha;
    auto a = adapter_forward<double>(x, p);
    auto b = adapter_forward<double>(scaled, p);
    for (std::size_t k = 0; k < a.data().size(); ++k) {
      EXPECT_NEAR(a.data()[k], b.data()[k], 1e-6);
    }
  }
}

TEST(AdapterForward, MatchesStraightLineRecomputation) {
  Rng rng(42);
  auto p = testing::random_params(rng, 8, 4);
  MatrixD x(1, 8);
  for (auto& v : x.data()) v = rng.normal();
  auto r = adapter_forward<double>(x, p);
  auto expect = straight_line_forward({x.data().begin(), x.data().end()}, p);
  for (std::size_t o = 0; o < 4; ++o) EXPECT_NEAR(r(0, o), expect[o], 1e-6);
}

TEST(AdapterForward, CollapsedProjectionIsAnError) {
  auto p = AdapterParams<double>::initialize(4, 2, 1);
  for (auto& w : p.proj_weight.data()) w = 0.0;
  MatrixD x(2, 4, 1.0);
  x(1, 0) = 3.0;
  try {
    adapter_forward<double>(x, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroNormProjection);
    EXPECT_EQ(e.index(), 0u);
  }
}

TEST(AdaptedLateScore, SelfScoreAndRange) {
  Rng rng(5);
  auto p = testing::random_params(rng, 16, 8);
  for (int trial = 0; trial < 30; ++trial) {
    auto q = testing::random_embedding(rng, 0, 1 + rng.below(10), 16);
    auto c = testing::random_embedding(rng, 1, 1 + rng.below(10), 16);
    EXPECT_NEAR(adapted_late_score(q, q, p, {}), 1.0, 1e-5);
    double s = adapted_late_score(q, c, p, {});
    EXPECT_GE(s, -1.0 - 1e-9);
    EXPECT_LE(s, 1.0 + 1e-9);
  }
}

TEST(AdaptedLateScore, EqualsReferenceOnPrecomputedOutputs) {
  Rng rng(6);
  auto p = testing::random_params(rng, 16, 8);
  for (int trial = 0; trial < 30; ++trial) {
    auto q = testing::random_embedding(rng, 0, 1 + rng.below(10), 16);
    auto c = testing::random_embedding(rng, 1, 1 + rng.below(10), 16);
    auto qr = adapter_forward<double>(valid_rows(q, RoleSet::structural()), p);
    auto cr = adapter_forward<double>(valid_rows(c, RoleSet::structural()), p);
    double via_ref = maxsim_reference_normalized(qr, cr);
    EXPECT_NEAR(adapted_late_score(q, c, p, {}), via_ref, 1e-6);
    // the float kernel over the readout agrees at kernel tolerance
    auto readout = make_readout(p);
    auto qp = prepare(q, RoleSet::structural(), true, &readout);
    auto cp = prepare(c, RoleSet::structural(), true, &readout);
    EXPECT_NEAR(maxsim_kernel(qp.tokens, cp.tokens), via_ref, 1e-5);
  }
}

TEST(InfoNce, UniformScoresGiveLogN) {
  for (std::size_t negs : {1, 3, 7, 511}) {
    std::vector<double> n(negs, 0.37);
    EXPECT_NEAR(infonce_loss(0.37, n, 0.05), std::log(negs + 1.0), 1e-9);
  }
}

TEST(InfoNce, SaturatedCase) {
  std::vector<double> n{-1.0};
  double l = infonce_loss(1.0, n, 0.05);
  EXPECT_GE(l, 0.0);
  EXPECT_NEAR(l, std::exp(-40.0), 1e-20);
}

TEST(InfoNce, MatchesDirectEvaluation) {
  std::vector<double> n{0.7, 0.6};
  const double tau = 0.05;
  double direct = -std::log(std::exp(0.8 / tau) /
                            (std::exp(0.8 / tau) + std::exp(0.7 / tau) +
                             std::exp(0.6 / tau)));
  EXPECT_NEAR(infonce_loss(0.8, n, tau), direct, 1e-12);
}

TEST(InfoNce, NonNegativeOnRandomInputs) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> n(1 + rng.below(10));
    for (auto& v : n) v = rng.uniform(-1, 1);
    EXPECT_GE(infonce_loss(rng.uniform(-1, 1), n, rng.uniform(0.01, 1.0)), 0.0);
  }
}

TEST(InfoNce, RejectsBadArguments) {
  std::vector<double> n{0.1};
  std::vector<double> none;
  EXPECT_THROW(infonce_loss(0.1, n, 0.0), Error);
  EXPECT_THROW(infonce_loss(0.1, none, 0.05), Error);
}

TEST(AdapterGradients, LossMatchesInfoNceDefinition) {
  Rng rng(13);
  auto p = testing::random_params(rng, 8, 4);
  auto batch = testing::random_batch(rng, 4, 8);
  TrainConfig cfg;
  auto lg = adapter_gradients<double>(batch, p, cfg);
  double expect = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto qr = adapter_forward<double>(batch[b].query, p);
    double pos = 0.0;
    std::vector<double> negs;
    for (std::size_t c = 0; c < batch.size(); ++c) {
      double s = maxsim_reference_normalized(
          qr, adapter_forward<double>(batch[c].positive, p));
      if (c == b) pos = s; else negs.push_back(s);
    }
    expect += infonce_loss(pos, negs, cfg.temperature);
  }
  EXPECT_NEAR(lg.loss, expect / batch.size(), 1e-10);
}

TEST(AdapterGradients, MatchFiniteDifferences) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Rng rng(seed);
    auto p = testing::random_params(rng, 8, 4);
    auto batch = testing::random_batch(rng, 3, 8);
    auto check = testing::check_gradients(batch, p, 0.05);
    EXPECT_EQ(check.coordinates, 8u + 8 + 32 + 4);
    EXPECT_LE(check.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(AdapterGradients, FiniteEverywhere) {
  Rng rng(31);
  auto p = testing::random_params(rng, 16, 8);
  auto batch = testing::random_batch(rng, 6, 16, 12);
  auto g = adapter_gradients<double>(batch, p, {}).grad;
  g.for_each_field([](std::span<const double> s) {
    for (double v : s) EXPECT_TRUE(std::isfinite(v));
  });
}

TEST(AdapterGradients, AveragingIdenticalEvaluationsIsANoOp) {
  Rng rng(32);
  auto p = testing::random_params(rng, 8, 4);
  auto batch = testing::random_batch(rng, 3, 8);
  auto a = adapter_gradients<double>(batch, p, {}).grad;
  auto b = adapter_gradients<double>(batch, p, {}).grad;
  std::vector<double> fa, fb;
  a.for_each_field([&](std::span<const double> s) { fa.insert(fa.end(), s.begin(), s.end()); });
  b.for_each_field([&](std::span<const double> s) { fb.insert(fb.end(), s.begin(), s.end()); });
  for (std::size_t i = 0; i < fa.size(); ++i) {
    EXPECT_NEAR(0.5 * (fa[i] + fb[i]), fa[i], 1e-10);
  }
}

TEST(AdapterGradients, NeedsTwoItems) {
  Rng rng(1);
  auto p = testing::random_params(rng, 8, 4);
  auto batch = testing::random_batch(rng, 1, 8);
  EXPECT_THROW(adapter_gradients<double>(batch, p, {}), Error);
}

TEST(TrainAdapter, ZeroLearningRateLeavesParamsUntouched) {
  Rng rng(3);
  auto p = testing::random_params(rng, 8, 4);
  auto data = testing::random_batch(rng, 16, 8);
  for (auto opt : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.steps = 10;
    cfg.batch_size = 4;
    cfg.optimizer = opt;
    auto result = train_adapter<double>(data, p, cfg);
    EXPECT_EQ(result.params, p);
    EXPECT_EQ(result.loss_trace.size(), 10u);
  }
}

TEST(TrainAdapter, SameSeedSameResult) {
  Rng rng(4);
  auto p = testing::random_params(rng, 8, 4);
  auto data = testing::random_batch(rng, 20, 8);
  TrainConfig cfg;
  cfg.steps = 25;
  cfg.batch_size = 4;
  cfg.seed = 17;
  auto a = train_adapter<double>(data, p, cfg);
  auto b = train_adapter<double>(data, p, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  cfg.seed = 18;
  EXPECT_NE(train_adapter<double>(data, p, cfg).loss_trace, a.loss_trace);
}

TEST(TrainAdapter, SgdReducesLossOnBindingTask) {
  BindingTaskConfig task_cfg;
  task_cfg.pairs = 64;
  task_cfg.seed = 5;
  auto task = make_binding_task(task_cfg);
  auto init = AdapterParams<double>::initialize(task_cfg.dim, 32, 1);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.5;
  cfg.steps = 60;
  cfg.batch_size = 8;
  double before = mean_infonce_loss<double>(task.train, init, cfg.temperature, 8);
  auto result = train_adapter<double>(task.train, init, cfg);
  double after = mean_infonce_loss<double>(task.train, result.params, cfg.temperature, 8);
  EXPECT_LT(after, before);
}

TEST(TrainAdapter, ValidatesConfig) {
  Rng rng(1);
  auto p = testing::random_params(rng, 8, 4);
  auto data = testing::random_batch(rng, 4, 8);
  TrainConfig cfg;
  cfg.batch_size = 1;
  EXPECT_THROW(train_adapter<double>(data, p, cfg), Error);
  cfg.batch_size = 8;
  EXPECT_THROW(train_adapter<double>(data, p, cfg), Error);
  cfg.batch_size = 2;
  cfg.temperature = 0.0;
  EXPECT_THROW(train_adapter<double>(data, p, cfg), Error);
}

TEST(TrainAdapter, NonFiniteLossAborts) {
  Rng rng(1);
  auto p = testing::random_params(rng, 8, 4);
  auto data = testing::random_batch(rng, 4, 8);
  data[0].query(0, 0) = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.steps = 3;
  try {
    train_adapter<double>(data, p, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::kNonFiniteLoss ||
                e.code() == ErrorCode::kZeroNormProjection);
  }
}

TEST(TrainAdapter, FloatModeRuns) {
  Rng rng(8);
  auto p = testing::random_params(rng, 8, 4).cast<float>();
  auto data64 = testing::random_batch(rng, 16, 8);
  std::vector<TrainingPair<float>> data;
  for (const auto& d : data64) {
    data.push_back({d.query.cast<float>(), d.positive.cast<float>()});
  }
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 4;
  auto r = train_adapter<float>(data, p, cfg);
  EXPECT_EQ(r.loss_trace.size(), 5u);
}

}  // namespace
}  // namespace smart
