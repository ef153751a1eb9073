// Copyright 2026 The asyvr Authors. All Rights Reserved.
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
// =============================================================================

#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace asyvr {
namespace {

using testing::random_point;
using testing::same_bits;
using testing::synthetic;
using testing::two_point_quadratic;

TEST(SnapshotTest, HoldsPointGradientAndEpoch) {
  LeastSquares prob(synthetic(100, 6, 3, 1), 1e-3);
  const Vec x = random_point(6, 2);
  const Snapshot s = take_snapshot(prob, x, 4);
  EXPECT_EQ(s.x_tilde, x);
  EXPECT_TRUE(same_bits(s.mu, grad_full(prob, x)));
  EXPECT_EQ(s.epoch, 4);
}

TEST(VrGradientTest, TwoPointHandCase) {
  const auto prob = two_point_quadratic();
  const Snapshot snap = take_snapshot(prob, Vec{0.0}, 0);
  EXPECT_EQ(snap.mu[0], -1.0);
  // f_1 = ½x²: 3 − 0 + (−1)
  EXPECT_EQ(vr_gradient(prob, {{Vec{3.0}}, {}}, snap, {{0}})[0], 2.0);
  // f_2 = ½(x−2)²: 1 − (−2) + (−1)
  EXPECT_EQ(vr_gradient(prob, {{Vec{3.0}}, {}}, snap, {{1}})[0], 2.0);
}

TEST(VrGradientTest, CancelsAtSnapshot) {
  Mlp prob(synthetic(80, 5, 3, 2), 4, 1e-3);
  const Vec xt = prob.initial_point(3);
  const Snapshot snap = take_snapshot(prob, xt, 0);
  Rng rng(5, 0);
  for (int k = 0; k < 10; ++k) {
    const MiniBatch batch = sample_batch(rng, 80, 7);
    EXPECT_TRUE(same_bits(ideal_vr_gradient(prob, xt, snap, batch), snap.mu));
    EXPECT_TRUE(same_bits(vr_gradient(prob, {{xt}, {}}, snap, batch), snap.mu));
  }
}

TEST(VrGradientTest, IdealMatchesConsistentStaleReads) {
  LeastSquares prob(synthetic(50, 4, 3, 2), 1e-3);
  const Snapshot snap = take_snapshot(prob, random_point(4, 1), 0);
  const Vec x = random_point(4, 2);
  Rng rng(1, 0);
  const MiniBatch batch = sample_batch(rng, 50, 5);
  const StaleReads per_sample{std::vector<Vec>(5, x), {}};
  EXPECT_TRUE(same_bits(ideal_vr_gradient(prob, x, snap, batch),
                        vr_gradient(prob, per_sample, snap, batch)));
}

TEST(VrGradientTest, PerSampleReadsFollowDefinition) {
  LeastSquares prob(synthetic(30, 3, 3, 2), 0.0);
  const Snapshot snap = take_snapshot(prob, random_point(3, 1), 0);
  const MiniBatch batch{{4, 9}};
  const StaleReads reads{{random_point(3, 5), random_point(3, 6)}, {1, 2}};
  const Vec v = vr_gradient(prob, reads, snap, batch);
  for (Index j = 0; j < 3; ++j) {
    const double want =
        ((grad_sample(prob, reads.points[0], 4)[j] +
          grad_sample(prob, reads.points[1], 9)[j]) -
         (grad_sample(prob, snap.x_tilde, 4)[j] +
          grad_sample(prob, snap.x_tilde, 9)[j])) /
            2.0 +
        snap.mu[j];
    EXPECT_NEAR(v[j], want, 1e-14);
  }
}

TEST(VrGradientTest, RejectsMisalignedReads) {
  const auto prob = two_point_quadratic();
  const Snapshot snap = take_snapshot(prob, Vec{0.0}, 0);
  EXPECT_THROW(vr_gradient(prob, {{Vec{1.0}, Vec{2.0}}, {}}, snap, {{0, 1, 1}}),
               InvalidInput);
  EXPECT_THROW(vr_gradient(prob, {{Vec{1.0}}, {0, 0}}, snap, {{0}}),
               InvalidInput);
  EXPECT_THROW(vr_gradient(prob, {{Vec{1.0}}, {}}, snap, {{2}}), InvalidInput);
}

TEST(VrGradientTest, DyadicFullBatchAndSingletonAverageAreExact) {
  const auto prob = testing::dyadic_least_squares(64, 4, 8);
  const Vec xt{0.25, -0.5, 0.75, 1.0}, x{-1.0, 0.5, 0.125, 2.0};
  const Snapshot snap = take_snapshot(prob, xt, 0);
  const Vec g = grad_full(prob, x);
  MiniBatch all;
  for (Index i = 0; i < 64; ++i) all.indices.push_back(i);
  EXPECT_TRUE(same_bits(ideal_vr_gradient(prob, x, snap, all), g));
  Vec avg(4, 0.0);
  for (Index i = 0; i < 64; ++i) {
    const Vec u = ideal_vr_gradient(prob, x, snap, MiniBatch{{i}});
    for (Index j = 0; j < 4; ++j) avg[j] += u[j];
  }
  for (double& a : avg) a /= 64.0;
  EXPECT_TRUE(same_bits(avg, g));
}

TEST(VrGradientTest, GenericSingletonAverageMatchesFullGradient) {
  Mlp prob(synthetic(90, 5, 3, 4), 4, 1e-3);
  const Snapshot snap = take_snapshot(prob, prob.initial_point(1), 0);
  const Vec x = prob.initial_point(2);
  const Vec g = grad_full(prob, x);
  Vec avg(prob.dim(), 0.0);
  for (Index i = 0; i < 90; ++i) {
    const Vec u = ideal_vr_gradient(prob, x, snap, MiniBatch{{i}});
    for (Index j = 0; j < avg.size(); ++j) avg[j] += u[j];
  }
  for (Index j = 0; j < avg.size(); ++j)
    EXPECT_NEAR(avg[j] / 90.0, g[j], 1e-12 * (1.0 + norm_inf(g)));
}

TEST(VrGradientTest, VarianceVanishesAtSnapshotAndIsBoundedAway) {
  LeastSquares prob(synthetic(120, 6, 3, 6), 1e-3);
  const double L = estimate_L(prob, 1, 0);
  const Vec xt = random_point(6, 1);
  const Snapshot snap = take_snapshot(prob, xt, 0);
  auto variance = [&](const Vec& x) {
    const Vec g = grad_full(prob, x);
    double var = 0.0;
    for (Index i = 0; i < 120; ++i) {
      const Vec u = ideal_vr_gradient(prob, x, snap, MiniBatch{{i}});
      for (Index j = 0; j < 6; ++j) var += (u[j] - g[j]) * (u[j] - g[j]);
    }
    return var / 120.0;
  };
  EXPECT_EQ(variance(xt), 0.0);
  for (std::uint64_t s = 2; s < 6; ++s) {
    const Vec x = random_point(6, s);
    Vec diff(6);
    for (Index j = 0; j < 6; ++j) diff[j] = x[j] - xt[j];
    EXPECT_LE(variance(x), 2.0 * L * L * norm_sq(diff));
  }
}

TEST(PolyLrTest, Cases) {
  EXPECT_EQ(poly_lr({0.3, 0.0}, 0), 0.3);
  EXPECT_EQ(poly_lr({0.3, 0.0}, 17), 0.3);
  EXPECT_EQ(poly_lr({0.3, 0.7}, 0), 0.3);
  EXPECT_NEAR(poly_lr({0.1, 1.0}, 9), 0.01, 1e-17);
  EXPECT_THROW(poly_lr({0.1, 1.0}, -1), InvalidInput);
  EXPECT_THROW(poly_lr({0.0, 1.0}, 0), InvalidInput);
  EXPECT_THROW(poly_lr({0.1, 1.5}, 0), InvalidInput);
}

TEST(SampleBatchTest, WithReplacementAndFullBatch) {
  Rng rng(1, 0);
  const MiniBatch b = sample_batch(rng, 10, 30);
  EXPECT_EQ(b.size(), 30u);
  for (Index i : b.indices) EXPECT_LT(i, 10u);
  Rng r2(1, 0);
  const MiniBatch full = sample_batch(r2, 6, 6);
  EXPECT_EQ(full.indices, (std::vector<Index>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(r2(), Rng(1, 0)());  // no draws consumed
}

// -----------------------------------------------------------------------------
// SGD

TEST(SgdTest, ScalarContractionHalvesError) {
  // f = ½(x − 2)², η = ½: x − 2 halves every step.
  LeastSquares prob(testing::make_regression(1, {1.0}, {2.0}));
  SgdConfig cfg;
  cfg.epochs = 2;
  cfg.iters_per_epoch = 5;
  cfg.b = 1;
  cfg.sched = {0.5, 0.0};
  cfg.grad_stride = 1;
  cfg.clock = ClockMode::logical;
  const Trace t = run_sgd(prob, cfg);
  EXPECT_EQ(t.final_x[0], 2.0 - 2.0 * std::pow(0.5, 10));
  // Loss ½e² drops by 4 per step on the mid-epoch rows.
  for (Index k = 1; k + 1 < 5; ++k)
    EXPECT_EQ(t.records[k + 1].loss * 4.0, t.records[k].loss);
}

TEST(SgdTest, ZeroEpochsGiveOnlyInitialRecord) {
  LeastSquares prob(synthetic(40, 3, 3, 1));
  SgdConfig cfg;
  cfg.epochs = 0;
  const Trace t = run_sgd(prob, cfg);
  ASSERT_EQ(t.records.size(), 1u);
  EXPECT_EQ(t.records[0].epoch, 0);
  EXPECT_EQ(t.records[0].iter, 0);
}

TEST(SgdTest, DeterministicForSeed) {
  Mlp prob(synthetic(60, 4, 3, 1), 3, 1e-3);
  SgdConfig cfg;
  cfg.epochs = 3;
  cfg.iters_per_epoch = 10;
  cfg.b = 4;
  cfg.sched = {0.1, 0.5};
  cfg.clock = ClockMode::logical;
  const Trace a = run_sgd(prob, cfg), b = run_sgd(prob, cfg);
  EXPECT_EQ(a.records, b.records);
  EXPECT_TRUE(same_bits(a.final_x, b.final_x));
}

TEST(SgdTest, DivergenceAbortsWithDiagnostic) {
  LeastSquares prob(synthetic(40, 3, 3, 1));
  SgdConfig cfg;
  cfg.epochs = 200;
  cfg.iters_per_epoch = 10;
  cfg.sched = {50.0, 0.0};
  const Trace t = run_sgd(prob, cfg);
  EXPECT_TRUE(t.diverged);
  EXPECT_NE(t.diagnostic.find("diverged"), std::string::npos);
  EXPECT_LT(t.records.size(), 200u);
}

// -----------------------------------------------------------------------------
// Serial SVRG

// Independent scalar SVRG on the two-point quadratic: f_1 = ½x², f_2 = ½(x−2)².
double scalar_svrg_oracle(std::uint64_t seed, double eta, int S, int m) {
  auto g = [](double x, Index i) { return i == 0 ? x : x - 2.0; };
  Rng rng(seed, 0);
  double x = 0.0;
  for (int s = 0; s < S; ++s) {
    const double xt = x;
    const double mu = (g(xt, 0) + g(xt, 1)) / 2.0;
    for (int t = 0; t < m; ++t) {
      const Index i = rng.below(2);
      const double v = (g(x, i) / 1.0 - g(xt, i) / 1.0) + mu;
      x = x - eta * v;
    }
  }
  return x;
}

TEST(SerialSvrgTest, TwoPointQuadraticMatchesScalarOracle) {
  const auto prob = two_point_quadratic();
  SvrgConfig cfg;
  cfg.S = 30;
  cfg.m = 20;
  cfg.b = 1;
  cfg.eta = 0.1;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    cfg.seed = seed;
    const Trace t = run_serial_svrg(prob, cfg);
    EXPECT_EQ(t.final_x[0], scalar_svrg_oracle(seed, 0.1, 30, 20));
    EXPECT_LE(t.last().grad_norm_sq, 1e-8);
    EXPECT_NEAR(t.final_x[0], 1.0, 1e-4);
  }
}

TEST(SerialSvrgTest, WarmStartSetsFirstLoss) {
  LeastSquares prob(synthetic(50, 4, 3, 1), 1e-3);
  SvrgConfig cfg;
  cfg.S = 1;
  cfg.m = 5;
  cfg.warm_start_x = random_point(4, 9);
  const Trace t = run_serial_svrg(prob, cfg);
  EXPECT_EQ(t.records.front().loss, eval_loss(prob, *cfg.warm_start_x));
}

TEST(SerialSvrgTest, FullBatchIsGradientDescent) {
  LeastSquares prob(synthetic(70, 5, 3, 2), 1e-2);
  SvrgConfig cfg;
  cfg.S = 4;
  cfg.m = 6;
  cfg.b = 70;
  cfg.eta = 0.3;
  cfg.seed = 11;
  const Trace t = run_serial_svrg(prob, cfg);
  Vec x(5, 0.0);
  for (int k = 0; k < 24; ++k) {
    const Vec g = grad_full(prob, x);
    for (Index j = 0; j < 5; ++j) x[j] -= 0.3 * g[j];
  }
  for (Index j = 0; j < 5; ++j)
    EXPECT_NEAR(t.final_x[j], x[j], 1e-12 * (1.0 + std::abs(x[j])));
}

TEST(SerialSvrgTest, TraceLayoutAndAccounting) {
  LeastSquares prob(synthetic(50, 4, 3, 1), 1e-3);
  SvrgConfig cfg;
  cfg.S = 3;
  cfg.m = 8;
  cfg.b = 2;
  cfg.grad_stride = 1;
  cfg.clock = ClockMode::logical;
  const Trace t = run_serial_svrg(prob, cfg);
  // (0,0), then per epoch rows t = 1..m−1 and the epoch-end row.
  ASSERT_EQ(t.records.size(), 1u + 3u * 8u);
  EXPECT_EQ(t.iters_per_epoch, 8);
  const auto ends = t.epoch_summaries();
  ASSERT_EQ(ends.size(), 3u);
  for (const auto& r : ends) {
    EXPECT_EQ(r.sum_v_sq, r.sum_u_sq);
    EXPECT_GT(r.sum_v_sq, 0.0);
  }
  EXPECT_EQ(t.grad_evals, 4u * 50u + 3u * 8u * 2u * 2u);
  for (Index k = 1; k < t.records.size(); ++k)
    EXPECT_GE(t.records[k].wall_ns, t.records[k - 1].wall_ns);
}

TEST(SerialSvrgTest, RejectsBadConfig) {
  LeastSquares prob(synthetic(50, 4, 3, 1));
  SvrgConfig cfg;
  cfg.eta = 0.0;
  EXPECT_THROW(run_serial_svrg(prob, cfg), InvalidInput);
  cfg.eta = 0.1;
  cfg.m = 0;
  EXPECT_THROW(run_serial_svrg(prob, cfg), InvalidInput);
}

// -----------------------------------------------------------------------------
// Trace I/O

TEST(TraceCsvTest, RoundTripsBitwise) {
  Mlp prob(synthetic(40, 3, 3, 1), 3, 1e-3);
  SvrgConfig cfg;
  cfg.S = 2;
  cfg.m = 5;
  cfg.b = 3;
  cfg.grad_stride = 2;
  const Trace t = run_serial_svrg(prob, cfg);
  std::stringstream ss;
  write_trace_csv(ss, t);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kTraceHeader);
  const Trace back = read_trace_csv(ss, 5);
  ASSERT_EQ(back.records.size(), t.records.size());
  for (Index k = 0; k < t.records.size(); ++k)
    EXPECT_EQ(back.records[k], t.records[k]);
  EXPECT_EQ(back.epoch_summaries().size(), 2u);
}

TEST(TraceCsvTest, NanAccumulatorSurvives) {
  Trace t;
  t.records.push_back({0, 4, 1.0, 2.0, 3, 4.0, std::nan("")});
  std::stringstream ss;
  write_trace_csv(ss, t);
  const Trace back = read_trace_csv(ss, 4);
  EXPECT_TRUE(std::isnan(back.records[0].sum_u_sq));
}

TEST(TraceCsvTest, RejectsMalformed) {
  std::stringstream bad_header("epoch,iter\n");
  EXPECT_THROW(read_trace_csv(bad_header, 1), FormatError);
  std::stringstream short_row(std::string(kTraceHeader) + "\n0,1,2\n");
  EXPECT_THROW(read_trace_csv(short_row, 1), FormatError);
  std::stringstream bad_num(std::string(kTraceHeader) + "\n0,1,x,1,1,1,1\n");
  EXPECT_THROW(read_trace_csv(bad_num, 1), FormatError);
}

TEST(TraceTest, ErgodicMeanSkipsFinalRecord) {
  Trace t;
  t.iters_per_epoch = 2;
  t.records = {{0, 0, 0, 4.0, 0, 0, 0}, {0, 1, 0, 2.0, 0, 0, 0},
               {0, 2, 0, 100.0, 0, 0, 0}};
  EXPECT_DOUBLE_EQ(ergodic_mean_grad_norm_sq(t), 3.0);
}

}  // namespace
}  // namespace asyvr
