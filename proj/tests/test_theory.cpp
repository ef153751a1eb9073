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

#include <gtest/gtest.h>

#include "asyvr/theory.hpp"
#include "asyvr/core.hpp"

namespace asyvr::theory {
namespace {

Params one_step() {
  Params p;
  p.mode = Mode::distributed;
  p.L = 1.0;
  p.eta = 0.1;
  p.b = 1.0;
  p.beta = 0.0;
  p.m = 1;
  p.Delta = 0.0;
  return p;
}

/// Random parameter set with κ ≥ D/2.
Params random_feasible(Rng& rng, Mode mode) {
  Params p;
  p.mode = mode;
  p.L = 0.5 + 4.5 * rng.uniform();
  p.b = static_cast<double>(1 + rng.below(20));
  p.m = static_cast<std::int64_t>(1 + rng.below(500));
  p.d = static_cast<double>(1 + rng.below(100));
  p.n = 1000.0;
  p.Delta = static_cast<double>(rng.below(11));
  p.beta = 4.0 * p.L * rng.uniform();
  const double D = mode == Mode::shared ? p.d : 1.0;
  double eta = std::pow(10.0, -4.0 + 3.0 * rng.uniform()) / p.L;
  if (p.Delta > 0) eta = std::min(eta, 0.5 * std::sqrt(D) / (p.L * p.Delta));
  p.eta = eta;
  return p;
}

TEST(TheoryTest, OneStepHandCase) {
  const Params p = one_step();
  const Vec c = c_sequence(p);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_NEAR(c[0], 0.02, 1e-12);
  EXPECT_NEAR(c0_closed_form(p), 0.02, 1e-12);
  EXPECT_NEAR(increment(p), 0.02, 1e-12);
  const auto g = gamma(p);
  EXPECT_NEAR(g.gamma, 0.03, 1e-12);
  EXPECT_TRUE(g.feasible);
}

TEST(TheoryTest, SharedModeScalesByDimension) {
  Params p = one_step();
  p.mode = Mode::shared;
  p.d = 4.0;
  // κ = 4, θ = 4·0.01/4 = 0.01, r = (4/4)(0.005) = 0.005.
  EXPECT_NEAR(theta(p), 0.01, 1e-15);
  EXPECT_NEAR(c_sequence(p)[0], 0.005, 1e-15);
  EXPECT_NEAR(gamma(p).gamma, 0.1 / 8.0 - 0.005, 1e-15);
}

TEST(TheoryTest, TerminalValueIsZero) {
  Rng rng(11, 0);
  for (int k = 0; k < 20; ++k) {
    const Params p = random_feasible(rng, k % 2 ? Mode::shared : Mode::distributed);
    const Vec c = c_sequence(p);
    EXPECT_EQ(c.back(), 0.0);
    EXPECT_EQ(c.size(), static_cast<std::size_t>(p.m + 1));
  }
}

TEST(TheoryTest, ClosedFormMatchesRecurrence) {
  for (Mode mode : {Mode::shared, Mode::distributed}) {
    Rng rng(2026, mode == Mode::shared ? 1 : 2);
    for (int k = 0; k < 100; ++k) {
      const Params p = random_feasible(rng, mode);
      const double rec = c_sequence(p)[0];
      const double closed = c0_closed_form(p);
      EXPECT_LE(std::abs(rec - closed), 1e-10 * std::abs(rec)) << k;
    }
  }
}

TEST(TheoryTest, ClosedFormSingleStepIsIncrement) {
  Rng rng(5, 0);
  for (int k = 0; k < 10; ++k) {
    Params p = random_feasible(rng, Mode::shared);
    p.m = 1;
    EXPECT_NEAR(c0_closed_form(p), increment(p), 1e-14 * increment(p));
  }
}

TEST(TheoryTest, ZeroGrowthLimit) {
  // θ underflows to zero relative to 1, so the closed form takes r·m.
  Params p = one_step();
  p.eta = 1e-200;
  p.m = 7;
  EXPECT_EQ(theta(p), 0.0);
  EXPECT_EQ(c0_closed_form(p), increment(p) * 7.0);
}

TEST(TheoryTest, SequencesAreMonotone) {
  Rng rng(3, 0);
  for (int k = 0; k < 50; ++k) {
    const Params p = random_feasible(rng, k % 2 ? Mode::shared : Mode::distributed);
    const Vec c = c_sequence(p);
    const Vec g = gamma_sequence(p);
    for (std::size_t t = 0; t + 1 < c.size(); ++t) EXPECT_GE(c[t], c[t + 1]);
    for (std::size_t t = 0; t + 1 < g.size(); ++t) EXPECT_LE(g[t], g[t + 1]);
    EXPECT_EQ(gamma(p).gamma, g[0]);
  }
}

TEST(TheoryTest, TinyStepIsFeasible) {
  Params p = one_step();
  p.eta = 1e-8;
  p.m = 1000;
  p.Delta = 3.0;
  p.beta = 2.0;
  const auto g = gamma(p);
  EXPECT_TRUE(g.feasible);
  EXPECT_GT(g.gamma, 0.0);
  EXPECT_NEAR(g.gamma, p.eta / 2.0, 1e-12);
}

TEST(TheoryTest, GammaNonincreasingInDelay) {
  Params p = one_step();
  p.eta = 0.01;
  p.m = 50;
  p.beta = 2.0;
  double prev = gamma(p).gamma;
  for (double delta = 1.0; delta <= 60.0; delta += 1.0) {
    p.Delta = delta;
    const double g = gamma(p).gamma;
    EXPECT_LE(g, prev);
    prev = g;
  }
}

TEST(TheoryTest, InfeasibleDenominatorThrows) {
  Params p = one_step();
  p.Delta = 10.0;
  p.eta = 0.1;  // 2·1·100·0.01 = 2 > 1
  EXPECT_THROW(c_sequence(p), InfeasibleParams);
  EXPECT_THROW(gamma(p), InfeasibleParams);
  const Report r = make_report(p);
  EXPECT_FALSE(r.feasible);
  EXPECT_FALSE(r.error.empty());
  p = one_step();
  p.eta = -1.0;
  EXPECT_THROW(c_sequence(p), InvalidInput);
}

TEST(TheoryTest, LargeStepIsInfeasible) {
  Params p = one_step();
  p.eta = 1.0;  // Γ_0 = 0.5 − 2
  const auto g = gamma(p);
  EXPECT_FALSE(g.feasible);
  EXPECT_THROW(ergodic_bound(p, 1.0, 0.0, 10.0), InfeasibleParams);
}

TEST(TheoryTest, LyapunovConditionFlag) {
  Params p = one_step();
  EXPECT_FALSE(lyapunov_condition(p));  // β = 0
  p.beta = 2.0;
  EXPECT_TRUE(lyapunov_condition(p));
  p.m = 2;
  p.beta = 0.01;  // c_1/β ≈ 2 > ½
  EXPECT_FALSE(lyapunov_condition(p));
}

TEST(TheoryTest, DelayBoundHandCases) {
  EXPECT_NEAR(delay_bound(Mode::shared, 0.01, 10, 100), 20.0 / 0.28, 1e-12);
  EXPECT_NEAR(delay_bound(Mode::shared, 0.01, 10, 100), 71.42857142857143, 1e-12);
  EXPECT_NEAR(delay_bound(Mode::distributed, 0.001, 10, 1), 50.0, 1e-12);
  EXPECT_NEAR(delay_bound(Mode::distributed, 0.001, 10, 77), 50.0, 1e-12);
  EXPECT_LE(delay_bound(Mode::distributed, 0.02, 10, 1), 0.0);  // u0·b > 3/28
  EXPECT_THROW(delay_bound(Mode::shared, 0.0, 10, 10), InvalidInput);
  EXPECT_THROW(delay_bound(Mode::shared, 0.1, 0.5, 10), InvalidInput);
}

TEST(TheoryTest, RecommendedSettingsHandCases) {
  const Settings s = recommended_settings(Mode::shared, 1000, 1.0, 0.1, 10, 50, 2.0);
  EXPECT_NEAR(s.eta, 5e-4, 1e-15);
  EXPECT_EQ(s.beta, 4.0);
  EXPECT_EQ(s.m, 8333);
  const Settings t = recommended_settings(Mode::distributed, 1000, 1.0, 0.1, 10, 50, 2.0);
  EXPECT_EQ(t.m, 166);
  EXPECT_EQ(t.eta, s.eta);
  EXPECT_THROW(recommended_settings(Mode::shared, 1000, 0.0, 0.1, 10, 50, 2.0), InvalidInput);
  EXPECT_THROW(recommended_settings(Mode::shared, 1000, 1.5, 0.1, 10, 50, 2.0), InvalidInput);
  EXPECT_THROW(recommended_settings(Mode::distributed, 10, 0.5, 0.1, 10, 1, 2.0), InvalidInput);
}

TEST(TheoryTest, RecommendedSettingsFeasibleWithinDelayBound) {
  for (Mode mode : {Mode::shared, Mode::distributed}) {
    for (double u0 : {0.001, 0.005}) {
      const double bound = delay_bound(mode, u0, 10, 50);
      ASSERT_GT(bound, 0.0);
      const Settings s = recommended_settings(mode, 1000, 0.5, u0, 10, 50, 3.0);
      Params p;
      p.mode = mode;
      p.L = 3.0;
      p.eta = s.eta;
      p.beta = s.beta;
      p.m = s.m;
      p.b = 10;
      p.d = 50;
      p.n = 1000;
      p.Delta = std::floor(std::sqrt(bound * 0.999));
      EXPECT_TRUE(gamma(p).feasible) << to_string(mode) << " u0=" << u0;
    }
  }
}

TEST(TheoryTest, SideCondition) {
  EXPECT_TRUE(side_condition(Mode::distributed, 1000, 0.5, 0.001, 10, 1, 5));
  EXPECT_FALSE(side_condition(Mode::distributed, 1, 1.0, 0.1, 10, 1, 1));
}

TEST(TheoryTest, ErgodicBound) {
  EXPECT_NEAR(ergodic_bound(0.03, 1.0, 0.0, 100.0), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(ergodic_bound(0.03, 2.0, 2.0, 100.0), 0.0);
  EXPECT_DOUBLE_EQ(ergodic_bound(0.03, 1.0, 0.0, 200.0),
                   ergodic_bound(0.03, 1.0, 0.0, 100.0) / 2.0);
  EXPECT_NEAR(ergodic_bound(one_step(), 1.0, 0.0, 100.0), 1.0 / 3.0, 1e-12);
  EXPECT_THROW(ergodic_bound(0.0, 1.0, 0.0, 10.0), InfeasibleParams);
  EXPECT_THROW(ergodic_bound(0.03, 0.0, 1.0, 10.0), InvalidInput);
}

TEST(TheoryTest, Speedup) {
  const auto s = speedup({{1, 100.0}, {2, 60.0}, {4, 25.0}});
  EXPECT_EQ(s.at(1), 1.0);
  EXPECT_NEAR(s.at(2), 5.0 / 3.0, 1e-15);
  EXPECT_EQ(s.at(4), 4.0);
  EXPECT_THROW(speedup({{2, 1.0}}), InvalidInput);
  EXPECT_THROW(speedup({{1, 1.0}, {2, 0.0}}), InvalidInput);
}

TEST(TheoryTest, ReportJson) {
  const Report r = make_report(one_step(), 1.0, 100.0);
  EXPECT_TRUE(r.feasible);
  ASSERT_TRUE(r.bound_value);
  EXPECT_NEAR(*r.bound_value, 1.0 / 3.0, 1e-12);
  const auto j = to_json(r);
  EXPECT_EQ(j["params"]["mode"], "distributed");
  EXPECT_EQ(j["c"].size(), 2u);
  EXPECT_EQ(j["Gamma"].size(), 1u);
  EXPECT_TRUE(j["feasible"].get<bool>());
  EXPECT_FALSE(j.contains("error"));
  const auto none = to_json(make_report(one_step()));
  EXPECT_TRUE(none["bound_value"].is_null());
}

}  // namespace
}  // namespace asyvr::theory
