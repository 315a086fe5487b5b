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

/**
 * @file ball_model.hpp
 * @brief Planar ball with cubic drag, a floor, a wall, and a circular target.
 *
 * State s = [x, y, vx, vy], input u = [ux, uy]. Outside the circle the ball
 * only accepts non-positive thrust (min{u, 0}) and feels gravity; inside the
 * circle thrust is unrestricted and gravity is off. Hitting the floor (y = 0)
 * flips vy, hitting the wall (x = 0) flips vx, and entering the circle is an
 * identity transition into the final mode. The equilibrium is the circle
 * center at rest.
 */
#pragma once

#include "lmpc/hybrid_system.hpp"

#include <cmath>
#include <stdexcept>

namespace lmpc::ball {

using State = Eigen::Vector4d;
using Input = Eigen::Vector2d;
using System = HybridSystem<4, 2>;

inline constexpr ModeId kOutside = 0;
inline constexpr ModeId kInside = 1;
inline constexpr GuardId kFloor = 0;
inline constexpr GuardId kWall = 1;
inline constexpr GuardId kCircle = 2;

struct BallParams {
  double m = 1.0;
  /// Drag coefficient as quoted for the plant. The drag is applied with
  /// magnitude |gamma_drag| and always opposes the velocity.
  double gamma_drag = -0.02;
  double g = -9.81;
  Eigen::Vector2d circle_center{2.0, 2.0};
  double circle_radius = 0.5;
  double input_lo = -100.0;
  double input_hi = 100.0;
  double eta = 10.0;  ///< per-axis disturbance bound
  /// Width of the softmin replacing min{u, 0} outside the circle. 0 keeps the
  /// exact clamp.
  double softmin_width = 0.0;

  void validate() const {
    if (!(m > 0)) throw std::invalid_argument("ball: mass must be positive");
    if (!(circle_radius > 0)) throw std::invalid_argument("ball: circle radius must be positive");
    if (circle_center.x() - circle_radius < 0 || circle_center.y() - circle_radius < 0)
      throw std::invalid_argument("ball: circle must lie in the first quadrant");
    if (!(input_lo <= 0 && input_hi >= 0)) throw std::invalid_argument("ball: input box must contain 0");
    if (eta < 0) throw std::invalid_argument("ball: eta must be non-negative");
    if (softmin_width < 0) throw std::invalid_argument("ball: softmin width must be non-negative");
  }
};

inline double clamp_thrust(double u, double width) {
  if (width <= 0) return std::min(u, 0.0);
  // Smooth min(u, 0) = -w log(1 + exp(-u/w)), written to avoid overflow.
  const double a = -u / width;
  return a > 0 ? -width * (a + std::log1p(std::exp(-a))) : -width * std::log1p(std::exp(a));
}

inline Eigen::Vector2d drag(const BallParams& p, const State& s) {
  const Eigen::Vector2d v = s.tail<2>();
  return -std::abs(p.gamma_drag) * v.squaredNorm() * v;
}

inline State outside_field(const BallParams& p, const State& s, const Input& u) {
  State ds;
  ds.head<2>() = s.tail<2>();
  const Eigen::Vector2d a = drag(p, s);
  ds(2) = a(0) + clamp_thrust(u(0), p.softmin_width) / p.m;
  ds(3) = a(1) + clamp_thrust(u(1), p.softmin_width) / p.m + p.g;
  return ds;
}

inline State inside_field(const BallParams& p, const State& s, const Input& u) {
  State ds;
  ds.head<2>() = s.tail<2>();
  ds.tail<2>() = drag(p, s) + u / p.m;
  return ds;
}

inline double distance_to_center(const BallParams& p, const State& s) {
  return (s.head<2>() - p.circle_center).norm();
}

inline System ball_system(const BallParams& p) {
  p.validate();
  System sys;
  const Input lo = Input::Constant(p.input_lo), hi = Input::Constant(p.input_hi);
  const double dom_tol = 1e-6;

  Mode<4, 2> outside;
  outside.id = kOutside;
  outside.name = "outside";
  outside.vector_field = [p](const State& s, const Input& u) { return outside_field(p, s, u); };
  outside.input_lo = lo;
  // Positive thrust is inert outside, so the box stops at 0: same reachable
  // thrust, and the planner never searches a flat region.
  outside.input_hi = hi.cwiseMin(0.0);
  outside.domain_check = [p, dom_tol](const State& s) {
    return s(0) >= -dom_tol && s(1) >= -dom_tol && distance_to_center(p, s) >= p.circle_radius - dom_tol;
  };

  Mode<4, 2> inside;
  inside.id = kInside;
  inside.name = "inside";
  inside.vector_field = [p](const State& s, const Input& u) { return inside_field(p, s, u); };
  inside.input_lo = lo;
  inside.input_hi = hi;
  inside.domain_check = [p, dom_tol](const State& s) {
    return distance_to_center(p, s) <= p.circle_radius + dom_tol;
  };
  sys.modes = {outside, inside};

  Guard<4, 2> floor;
  floor.id = kFloor;
  floor.name = "floor";
  floor.source_mode = kOutside;
  floor.target_mode = kOutside;
  floor.h = [](const State& s) { return s(1); };
  floor.c = 0.0;
  floor.crossing_sign = -1;

  Guard<4, 2> wall;
  wall.id = kWall;
  wall.name = "wall";
  wall.source_mode = kOutside;
  wall.target_mode = kOutside;
  wall.h = [](const State& s) { return s(0); };
  wall.c = 0.0;
  wall.crossing_sign = -1;

  Guard<4, 2> circle;
  circle.id = kCircle;
  circle.name = "circle";
  circle.source_mode = kOutside;
  circle.target_mode = kInside;
  circle.h = [p](const State& s) { return distance_to_center(p, s); };
  circle.c = p.circle_radius;
  circle.crossing_sign = -1;
  circle.max_depth = p.circle_radius;
  sys.guards = {floor, wall, circle};

  sys.resets = {
      {kFloor, [](const State& s) { return State(s(0), s(1), s(2), -s(3)); }},
      {kWall, [](const State& s) { return State(s(0), s(1), -s(2), s(3)); }},
      {kCircle, [](const State& s) { return s; }},
  };

  sys.final_mode = kInside;
  sys.equilibrium = State(p.circle_center.x(), p.circle_center.y(), 0.0, 0.0);
  sys.position_indices = {0, 1};
  sys.validate();
  return sys;
}

}  // namespace lmpc::ball
