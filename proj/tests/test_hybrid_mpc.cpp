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

#include "lmpc/ball_model.hpp"
#include "lmpc/hybrid_mpc.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace lmpc;
using ball::Input;
using ball::State;

namespace {

struct HybridFixture : ::testing::Test {
  ball::BallParams params;
  ball::System sys;
  MpcConfig<4, 2> cfg;
  HybridConfig h;

  void SetUp() override {
    params.softmin_width = 1e-3;
    sys = ball::ball_system(params);
    cfg.N = 16;
    cfg.dt_d = 0.1;
    cfg.dt = 0.1;
    cfg.Q = Eigen::Vector4d(10, 10, 1, 1).asDiagonal();
    cfg.R = 1e-3 * Eigen::Matrix2d::Identity();
    cfg.terminal = make_terminal(sys, cfg);
    h.max_transitions = 2;
    h.dwell_min = 3;
    h.dwell_max = 5;
    h.dwell_stride = 2;
  }
  // Moving right while falling: needs a floor bounce to rise into the circle.
  State bounce_start() const { return State(1.5, 1.0, 1.0, 0.0); }
};

bool chains_follow_graph(const ball::System& sys, ModeId start, const std::vector<GuardId>& edges) {
  ModeId m = start;
  for (GuardId g : edges) {
    if (sys.guard(g).source_mode != m) return false;
    m = sys.guard(g).target_mode;
  }
  return m == sys.final_mode;
}

}  // namespace

TEST_F(HybridFixture, FinalModeStartIncludesEmptySequence) {
  const auto c = enumerate_candidates(sys, ball::kInside, cfg.N, h, false);
  ASSERT_FALSE(c.empty());
  EXPECT_TRUE(c.front().edges.empty());
  EXPECT_EQ(c.front().dwell, std::vector<int>{cfg.N});
}

TEST_F(HybridFixture, OutsideCandidatesIncludeDirectAndOneBounce) {
  const auto c = enumerate_candidates(sys, ball::kOutside, cfg.N, h, false);
  std::set<std::vector<GuardId>> chains;
  for (const auto& s : c) {
    chains.insert(s.edges);
    EXPECT_TRUE(chains_follow_graph(sys, ball::kOutside, s.edges));
    EXPECT_EQ(std::accumulate(s.dwell.begin(), s.dwell.end(), 0), cfg.N);
    EXPECT_LE(static_cast<int>(s.edges.size()), cfg.N / 2);
  }
  // Graph-path oracle: paths of length <= 2 ending inside the circle.
  const std::set<std::vector<GuardId>> expected{
      {ball::kCircle}, {ball::kFloor, ball::kCircle}, {ball::kWall, ball::kCircle}};
  EXPECT_EQ(chains, expected);
}

TEST_F(HybridFixture, ZeroTransitionsFromNonFinalModeIsEmpty) {
  h.max_transitions = 0;
  EXPECT_TRUE(enumerate_candidates(sys, ball::kOutside, cfg.N, h, false).empty());
  EXPECT_THROW(hybrid_plan(sys, bounce_start(), cfg, nullptr, h), NoFeasibleSequence);
}

TEST_F(HybridFixture, TooManyTransitionsRejected) {
  h.max_transitions = cfg.N / 2 + 1;
  EXPECT_THROW(enumerate_candidates(sys, ball::kOutside, cfg.N, h, false), ContractViolation);
}

TEST_F(HybridFixture, PlanOutsideAllDomainsRejected) {
  // Below the floor is in no domain.
  EXPECT_THROW(hybrid_plan(sys, State(1.0, -0.5, 0.0, 0.0), cfg, nullptr, h), ContractViolation);
}

TEST_F(HybridFixture, TerminalRegionStartGivesAllFinalPlan) {
  const State x0 = sys.equilibrium + State(0.02, -0.01, 0.05, 0.0);
  ASSERT_LE(cfg.terminal.phi(x0 - sys.equilibrium), cfg.terminal.c_f);
  for (auto strat : {HybridStrategy::Enumerate, HybridStrategy::Cem}) {
    h.strategy = strat;
    const auto r = hybrid_plan(sys, x0, cfg, nullptr, h);
    EXPECT_TRUE(r.schedule.all_final(sys.final_mode));
    EXPECT_TRUE(r.candidate.edges.empty());
    EXPECT_LE(r.plan.cost, cfg.terminal.phi(x0 - sys.equilibrium) + 1e-9);
  }
}

TEST_F(HybridFixture, CemSingleCandidateReturnsIt) {
  h.max_transitions = 1;  // only the direct entry
  h.dwell_min = h.dwell_max = 1;
  h.strategy = HybridStrategy::Cem;
  h.cem.population = 3;
  h.cem.elite_frac = 0.5;
  h.cem.iterations = 2;
  const State x0(2.0, 1.2, 0.0, 4.0);  // rising toward the circle
  const auto r = hybrid_plan(sys, x0, cfg, nullptr, h);
  EXPECT_EQ(r.candidate.edges, std::vector<GuardId>{ball::kCircle});
  EXPECT_EQ(r.candidate.dwell, (std::vector<int>{1, cfg.N - 1}));
  EXPECT_EQ(r.evaluated, 1);
}

TEST_F(HybridFixture, CemPrefersFeasibleCandidate) {
  // Direct entry is impossible while falling from below the circle; the one
  // bounce candidate is the only feasible one.
  h.max_transitions = 2;
  h.dwell_min = h.dwell_max = 4;
  h.strategy = HybridStrategy::Cem;
  h.cem.population = 6;
  h.cem.iterations = 2;
  const auto r = hybrid_plan(sys, bounce_start(), cfg, nullptr, h);
  EXPECT_TRUE(r.plan.feasible);
  EXPECT_EQ(r.candidate.edges.back(), ball::kCircle);
  EXPECT_EQ(r.candidate.edges.front(), ball::kFloor);
}

TEST_F(HybridFixture, CemMatchesEnumerationAndHistoryIsMonotone) {
  const auto cands = enumerate_candidates(sys, ball::kOutside, cfg.N, h, false);
  double best_enum = kInf;
  for (const auto& c : cands) {
    const auto p = solve_candidate(sys, ball::kOutside, c, bounce_start(), cfg, nullptr);
    if (p.feasible) best_enum = std::min(best_enum, p.cost);
  }
  ASSERT_TRUE(std::isfinite(best_enum));
  const auto en = hybrid_plan(sys, bounce_start(), cfg, nullptr, h);
  EXPECT_NEAR(en.plan.cost, best_enum, 1e-9 * std::max(1.0, best_enum));
  EXPECT_TRUE(chains_follow_graph(sys, ball::kOutside, en.candidate.edges));

  h.strategy = HybridStrategy::Cem;
  h.cem.population = 8;
  h.cem.iterations = 2;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    h.cem.seed = seed;
    const auto r = hybrid_plan(sys, bounce_start(), cfg, nullptr, h);
    EXPECT_LE(r.plan.cost, 1.05 * best_enum) << "seed " << seed;
    EXPECT_TRUE(chains_follow_graph(sys, ball::kOutside, r.candidate.edges));
    for (std::size_t i = 1; i < r.best_history.size(); ++i)
      EXPECT_LE(r.best_history[i], r.best_history[i - 1]) << "seed " << seed;
  }
}

TEST_F(HybridFixture, CemIsDeterministic) {
  h.strategy = HybridStrategy::Cem;
  h.cem.population = 6;
  h.cem.iterations = 2;
  h.cem.seed = 42;
  const auto a = hybrid_plan(sys, bounce_start(), cfg, nullptr, h);
  const auto b = hybrid_plan(sys, bounce_start(), cfg, nullptr, h);
  EXPECT_EQ(a.candidate, b.candidate);
  EXPECT_EQ(a.plan.cost, b.plan.cost);
}

TEST_F(HybridFixture, RobustPlanSatisfiesTightenedConstraints) {
  const TubeModel tube(TubeParams{0.0, 0.0, 0.3, 0.0});
  h.dwell_min = 3;
  h.dwell_max = 5;
  const auto r = hybrid_plan(sys, bounce_start(), cfg, &tube, h);
  ASSERT_TRUE(r.plan.feasible);
  EXPECT_TRUE(r.schedule.robust);
  const auto prob = build_robust(sys, r.schedule, bounce_start(), cfg, tube);
  const VectorXd z = pack(prob, r.plan.states, r.plan.inputs);
  EXPECT_LE(detail::max_violation(prob.nlp.eval_eq(z), prob.nlp.eval_ineq(z)), cfg.feas_tol);
}

TEST(CemConfigValidation, RejectsBadParameters) {
  CemConfig c;
  c.elite_frac = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.elite_frac = 0.05;
  c.population = 10;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
