/*
 Copyright 2026 The lmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "lmpc/experiment.hpp"

#include <gtest/gtest.h>

using namespace lmpc;

namespace {

using Log = SimLog<4, 2>;

SimSample<4, 2> sample(double t, double x, double y) {
  SimSample<4, 2> s;
  s.t = t;
  s.mode = ball::kInside;
  s.x = Eigen::Vector4d(x, y, 0, 0);
  s.u.setZero();
  s.w.setZero();
  return s;
}

Log run(const ball::RunConfig& c) {
  const auto b = ball::build_run(c);
  const auto& e = b.experiment;
  return run_closed_loop(*e.sys, e.x0, e.cfg, e.rates, e.dist, e.pd, e.tube, e.opt);
}

}  // namespace

TEST(Disturbance, BoundedOnListedChannelsAndHeld) {
  DisturbanceModel m;
  m.eta = 0.7;
  m.hold = 0.05;
  m.seed = 42;
  m.channels = {2, 3};
  DisturbanceSignal<4> w(m, 3.0);
  for (int i = 0; i < 3000; ++i) {
    const double t = i * 1e-3;
    const auto& v = w.at(t);
    EXPECT_LE(v.norm(), m.eta * (1 + 1e-15));
    EXPECT_EQ(v(0), 0.0);
    EXPECT_EQ(v(1), 0.0);
    EXPECT_EQ(v, w.at(std::floor(t / m.hold + 1e-9) * m.hold));
  }
  EXPECT_NE(w.at(0.0), w.at(0.05));
}

TEST(Disturbance, SameSeedSameSignalDifferentSeedDifferentSignal) {
  DisturbanceModel m;
  m.eta = 1.0;
  m.channels = {2, 3};
  DisturbanceSignal<4> a(m, 1.0), b(m, 1.0);
  m.seed = 2;
  DisturbanceSignal<4> c(m, 1.0);
  bool differs = false;
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(a.at(i * 0.02), b.at(i * 0.02));
    differs = differs || a.at(i * 0.02) != c.at(i * 0.02);
  }
  EXPECT_TRUE(differs);
}

TEST(Disturbance, ZeroEtaIsZeroAndBadModelsThrow) {
  DisturbanceModel m;
  m.channels = {2, 3};
  DisturbanceSignal<4> w(m, 1.0);
  EXPECT_EQ(w.at(0.5), Eigen::Vector4d::Zero());
  m.eta = -1;
  EXPECT_THROW(DisturbanceSignal<4>(m, 1.0), std::invalid_argument);
  m.eta = 1;
  m.channels = {4};
  EXPECT_THROW(DisturbanceSignal<4>(m, 1.0), std::invalid_argument);
}

TEST(LayerRates, PeriodRatioMustBeInteger) {
  EXPECT_EQ(period_ratio(0.1, 0.1), 1);
  EXPECT_EQ(period_ratio(0.1, 0.05), 2);
  EXPECT_EQ(period_ratio(0.1, 0.025), 4);
  EXPECT_THROW(period_ratio(0.1, 0.03), std::invalid_argument);
  EXPECT_THROW(period_ratio(0.1, 0.2), std::invalid_argument);
}

TEST(LowLevelPd, GainActsOnPositionsAndVelocities) {
  const auto K = pd_gain<4, 2>({0, 1}, 5.0, 2.0);
  Eigen::Matrix<double, 2, 4> expect;
  expect << 5, 0, 2, 0, 0, 5, 0, 2;
  EXPECT_EQ(K, expect);
  EXPECT_THROW((pd_gain<4, 2>({0, 1, 2}, 1, 1)), std::invalid_argument);
}

TEST(Stability, TrivialVerdicts) {
  const auto sys = ball::ball_system(ball::BallParams{});
  const double cx = sys.equilibrium(0), cy = sys.equilibrium(1);
  Log log;
  EXPECT_FALSE(classify_stability(sys, log, 0.05, 1.0));  // empty
  for (int i = 0; i <= 100; ++i) log.samples.push_back(sample(i * 0.01, cx + 0.01, cy));
  EXPECT_TRUE(classify_stability(sys, log, 0.05, 0.5));
  EXPECT_NEAR(final_distance(sys, log), 0.01, 1e-12);
  log.samples[80].x(0) = cx + 1.0;  // inside the final window
  EXPECT_FALSE(classify_stability(sys, log, 0.05, 0.5));
  log.samples[80].x(0) = cx;
  log.samples[10].x(0) = cx + 1.0;  // before the window
  EXPECT_TRUE(classify_stability(sys, log, 0.05, 0.5));
  log.degrade(0.3, "test");
  EXPECT_FALSE(classify_stability(sys, log, 0.05, 0.5));
}

TEST(ClosedLoop, NominalRunConvergesWithPlannedImpacts) {
  ball::RunConfig c;
  c.t_sim = 4.0;
  const Log log = run(c);
  const auto sys = ball::ball_system(c.ball);

  EXPECT_FALSE(log.degraded);
  EXPECT_TRUE(classify_stability(sys, log, c.tol_pos, c.stable_window));
  EXPECT_LT(final_distance(sys, log), 1e-2);
  // One sample per sample period, both ends included.
  EXPECT_EQ(static_cast<int>(log.samples.size()), static_cast<int>(std::lround(c.t_sim / c.sample_period)) + 1);

  ASSERT_FALSE(log.impacts.empty());
  for (const auto& imp : log.impacts) {
    EXPECT_LE(imp.guard_residual, 1e-9);
    EXPECT_TRUE(imp.planned);
    EXPECT_EQ(imp.purges, 1);
    EXPECT_LE(std::abs(imp.t - imp.planned_contact_time), ball::RunConfig{}.dt_d + 1e-9);
  }

  // Cost does not increase until the terminal region is reached.
  double prev = kInf;
  for (const auto& s : log.solves) {
    ASSERT_TRUE(s.feasible);
    if (s.in_terminal) break;
    EXPECT_LE(s.cost, prev + 1e-6) << "t=" << s.t;
    prev = s.cost;
  }

  // Every stored plan re-simulates to its own states.
  const auto b = ball::build_run(c);
  auto cfg = b.experiment.cfg;
  cfg.dt = c.mpc_period;
  for (const auto& s : log.solves) {
    if (!s.plan) continue;
    EXPECT_LE(resimulation_error(sys, *s.plan, cfg), 1e-5) << "t=" << s.t;
  }
}

TEST(ClosedLoop, DisturbedRunStaysInsideTheTube) {
  ball::RunConfig c;
  c.t_sim = 2.0;
  c.eta = 1.0;
  c.seed = 3;
  const Log log = run(c);
  EXPECT_GT(log.tube.checked, 0);
  EXPECT_EQ(log.tube.violations, 0);
  for (const auto& imp : log.impacts) EXPECT_LE(imp.guard_residual, 1e-9);
  for (const auto& s : log.samples) EXPECT_LE(s.w.norm(), c.eta * (1 + 1e-12));
}

TEST(MonteCarlo, ZeroRealizationsGiveNoRows) {
  ball::RunConfig c;
  const auto b = ball::build_run(c);
  EXPECT_TRUE(monte_carlo(std::vector<Experiment<4, 2>>{b.experiment}, 0, 1).empty());
  EXPECT_THROW(monte_carlo(std::vector<Experiment<4, 2>>{b.experiment}, -1, 1), std::invalid_argument);
}

TEST(MonteCarlo, RowsAreDeterministicAndSeedsShared) {
  ball::RunConfig c;
  c.t_sim = 0.8;
  c.eta = 0.5;
  const auto b1 = ball::build_run(c);
  auto c2 = c;
  c2.name = "fast";
  c2.mpc_period = 0.05;
  const auto b2 = ball::build_run(c2);
  const std::vector<Experiment<4, 2>> cs{b1.experiment, b2.experiment};
  const auto r1 = monte_carlo(cs, 2, 7);
  const auto r2 = monte_carlo(cs, 2, 7);
  ASSERT_EQ(r1.size(), 4u);
  EXPECT_EQ(r1[0].seed, 7u);
  EXPECT_EQ(r1[1].seed, 8u);
  EXPECT_EQ(r1[2].seed, 7u);
  EXPECT_EQ(r1[3].seed, 8u);
  EXPECT_EQ(r1[2].config, "fast");
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].stable, r2[i].stable);
    EXPECT_EQ(r1[i].final_distance, r2[i].final_distance);
    EXPECT_EQ(r1[i].min_clearance, r2[i].min_clearance);
  }
}
