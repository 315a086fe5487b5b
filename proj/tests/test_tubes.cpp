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
#include "lmpc/tubes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lmpc;

namespace {

EissParams sample_eiss(std::mt19937_64& rng, double eta) {
  std::uniform_real_distribution<double> u(0.1, 5.0);
  EissParams e;
  e.k1 = u(rng);
  e.k2 = u(rng);
  e.k3 = u(rng);
  // Respect sigma/k1 <= eta.
  e.sigma_eta = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * eta * e.k1;
  e.roa_radius = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * e.saturation();
  return e;
}

}  // namespace

TEST(TrivialDiam, ZeroAtStart) {
  EXPECT_EQ(trivial_diam({0.5, 1.0, 10.0, 0.0}, 0.0), 0.0);
}

TEST(TrivialDiam, ZeroWithoutDisturbanceOrTrackingError) {
  const TubeParams p{3.0, 2.0, 0.0, 0.0};
  for (double t : {0.0, 0.1, 1.0, 10.0}) EXPECT_EQ(trivial_diam(p, t), 0.0);
}

TEST(TrivialDiam, ClosedFormValue) {
  const TubeParams p{0.5, 1.0, 10.0, 0.0};
  EXPECT_NEAR(trivial_diam(p, 0.1), 1.0512710963760241, 1e-14);
}

TEST(EissDiam, ZeroAtStart) { EXPECT_EQ(eiss_diam({1, 1, 2, 4, 1}, 0.0), 0.0); }

TEST(EissDiam, SaturatesAtLimit) {
  const EissParams e{1.0, 1.0, 2.0, 4.0, 1.0};
  EXPECT_NEAR(eiss_diam(e, 60.0), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(e.saturation(), 2.0);
}

TEST(EissDiam, HandEvaluatedPoint) {
  const EissParams e{1.0, 1.0, 2.0, 4.0, 1.0};
  EXPECT_NEAR(eiss_diam(e, std::log(2.0) / 2.0), 1.0, 1e-14);
}

TEST(ExitTime, InfiniteWhenRegionContainsSaturation) {
  EXPECT_EQ(exit_time({1.0, 1.0, 2.0, 4.0, 2.0}), kInf);
  EXPECT_EQ(exit_time({1.0, 1.0, 2.0, 4.0, 3.0}), kInf);
}

TEST(ExitTime, InvertsTheDiameter) {
  EXPECT_NEAR(exit_time({1.0, 1.0, 2.0, 4.0, 1.0}), std::log(2.0) / 2.0, 1e-14);
}

TEST(ExitTime, ZeroRegionGivesZero) { EXPECT_EQ(exit_time({1.0, 1.0, 2.0, 4.0, 0.0}), 0.0); }

TEST(ExitTime, BracketsTheCrossing) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto e = sample_eiss(rng, 10.0);
    const double tau = exit_time(e);
    if (!std::isfinite(tau) || tau <= 0) continue;
    const double eps = 1e-9 * std::max(1.0, tau);
    EXPECT_LT(eiss_diam(e, tau - eps), e.roa_radius);
    EXPECT_LE(e.roa_radius, eiss_diam(e, tau + eps));
  }
}

TEST(CombinedDiam, EqualsTrivialWithoutCertificate) {
  const TubeParams p{0.7, 1.0, 3.0, 0.2};
  const TubeModel m(p);
  for (int i = 0; i <= 100; ++i) {
    const double t = 0.02 * i;
    EXPECT_EQ(combined_diam(m, t), trivial_diam(p, t));
  }
  EXPECT_EQ(m.tau(), kInf);
}

TEST(CombinedDiam, BelowTrivialUpToExitTime) {
  const TubeParams p{0.8, 1.0, 5.0, 0.0};
  const EissParams e{2.0, 1.0, 3.0, 8.0, 1.0};
  const TubeModel m(p, e);
  ASSERT_TRUE(std::isfinite(m.tau()));
  for (int i = 0; i <= 1000; ++i) {
    const double t = m.tau() * i / 1000.0;
    EXPECT_LE(combined_diam(m, t), trivial_diam(p, t) + 1e-15);
  }
  EXPECT_EQ(combined_diam(m, 0.0), 0.0);
}

TEST(CombinedDiam, RejectsViolatedHypothesis) {
  const TubeParams p{0.8, 1.0, 1.0, 0.0};
  const EissParams e{1.0, 1.0, 3.0, 8.0, 1.0};  // sigma/k1 = 8 > eta = 1
  EXPECT_THROW(TubeModel(p, e), std::invalid_argument);
}

TEST(CombinedDiam, RejectsBadConstants) {
  EXPECT_THROW(TubeModel({-1.0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(TubeModel({0, 0, 1.0, 0}, EissParams{0.0, 1.0, 1.0, 0.5, 1.0}), std::invalid_argument);
}

TEST(TubeMonotonicity, AllEvaluatorsNonDecreasing) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const TubeParams p{u(rng), u(rng), 10.0 * u(rng), u(rng)};
    const auto e = sample_eiss(rng, p.eta);
    const TubeModel m(p, e);
    double prev_t = 0, prev_e = 0, prev_c = 0;
    for (int i = 0; i <= 1000; ++i) {
      const double t = 5.0 * i / 1000.0;
      const double dt = trivial_diam(p, t), de = eiss_diam(e, t), dc = combined_diam(m, t);
      EXPECT_GE(dt, prev_t);
      EXPECT_GE(de, prev_e);
      EXPECT_GE(dc, prev_c);
      prev_t = dt;
      prev_e = de;
      prev_c = dc;
    }
  }
}

TEST(EstimateLipschitz, LinearFieldBoundedByOperatorNorm) {
  Eigen::Matrix2d A;
  A << 0.0, 1.0, -4.0, -0.5;
  Mode<2, 1> m;
  m.vector_field = [A](const Eigen::Vector2d& x, const Eigen::Matrix<double, 1, 1>& u) {
    return Eigen::Vector2d(A * x + Eigen::Vector2d(0, 1) * u(0));
  };
  const auto est = estimate_lipschitz<2, 1>(m, Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1),
                                            Eigen::Matrix<double, 1, 1>(-1), Eigen::Matrix<double, 1, 1>(1),
                                            500, 1);
  const double normA = A.operatorNorm();
  EXPECT_LE(est.L_x, 1.25 * normA + 1e-9);
  EXPECT_GE(est.L_x, 0.9 * 1.25 * normA);
  EXPECT_NEAR(est.L_u, 1.25, 1e-6);
}

TEST(EstimateLipschitz, ConstantFieldHasZeroStateConstant) {
  Mode<2, 1> m;
  m.vector_field = [](const Eigen::Vector2d&, const Eigen::Matrix<double, 1, 1>&) {
    return Eigen::Vector2d(1.0, -2.0);
  };
  const auto est = estimate_lipschitz<2, 1>(m, Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1),
                                            Eigen::Matrix<double, 1, 1>(-1), Eigen::Matrix<double, 1, 1>(1),
                                            100, 2);
  EXPECT_EQ(est.L_x, 0.0);
  EXPECT_EQ(est.L_u, 0.0);
}

TEST(EstimateLipschitz, DegenerateRegionIsAnError) {
  Mode<2, 1> m;
  m.vector_field = [](const Eigen::Vector2d& x, const Eigen::Matrix<double, 1, 1>&) { return x; };
  EXPECT_THROW((estimate_lipschitz<2, 1>(m, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0),
                                         Eigen::Matrix<double, 1, 1>(-1), Eigen::Matrix<double, 1, 1>(1),
                                         10, 1)),
               std::invalid_argument);
  EXPECT_THROW((estimate_lipschitz<2, 1>(m, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1),
                                         Eigen::Matrix<double, 1, 1>(-1), Eigen::Matrix<double, 1, 1>(1),
                                         1, 1)),
               std::invalid_argument);
}

TEST(EstimateLipschitz, BallDragWithinSafetyOfJacobianMaximum) {
  const ball::BallParams p;
  const auto sys = ball::ball_system(p);
  const double k = std::abs(p.gamma_drag);
  // Dense-grid oracle: the state Jacobian is [[0, I], [0, -k(|v|^2 I + 2 v v^T)]].
  double oracle = 0.0;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j) {
      const Eigen::Vector2d v(-5.0 + 0.05 * i, -5.0 + 0.05 * j);
      Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
      J.block<2, 2>(0, 2).setIdentity();
      J.block<2, 2>(2, 2) = -k * (v.squaredNorm() * Eigen::Matrix2d::Identity() + 2.0 * v * v.transpose());
      oracle = std::max(oracle, J.operatorNorm());
    }
  const Eigen::Vector4d lo(0.0, 0.0, -5.0, -5.0), hi(5.0, 5.0, 5.0, 5.0);
  const auto est = estimate_lipschitz<4, 2>(sys.mode(ball::kInside), lo, hi, Eigen::Vector2d(-100, -100),
                                            Eigen::Vector2d(100, 100), 20000, 3);
  EXPECT_LE(est.L_x, 1.25 * oracle * (1.0 + 1e-6));
  EXPECT_GE(est.L_x, oracle);
}

TEST(EstimateLipschitz, DeterministicGivenSeed) {
  const auto sys = ball::ball_system({});
  const Eigen::Vector4d lo(0.0, 0.0, -5.0, -5.0), hi(5.0, 5.0, 5.0, 5.0);
  const auto a = estimate_lipschitz<4, 2>(sys.mode(ball::kOutside), lo, hi, Eigen::Vector2d(-100, -100),
                                          Eigen::Vector2d(100, 100), 300, 42);
  const auto b = estimate_lipschitz<4, 2>(sys.mode(ball::kOutside), lo, hi, Eigen::Vector2d(-100, -100),
                                          Eigen::Vector2d(100, 100), 300, 42);
  EXPECT_EQ(a.L_x, b.L_x);
  EXPECT_EQ(a.L_u, b.L_u);
}

TEST(EstimateGuardLipschitz, UnitSlopeGuards) {
  const auto sys = ball::ball_system({});
  const Eigen::Vector4d lo(0.0, 0.0, -5.0, -5.0), hi(5.0, 5.0, 5.0, 5.0);
  for (GuardId g : {ball::kFloor, ball::kWall, ball::kCircle})
    EXPECT_NEAR(estimate_guard_lipschitz(sys.guard(g), lo, hi, 200, 1), 1.0, 1e-6);
}
