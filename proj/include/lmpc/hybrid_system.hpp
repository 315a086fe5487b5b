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
 * @file hybrid_system.hpp
 * @brief Hybrid dynamical systems: modes, guards, resets, and guarded flows.
 *
 * A hybrid system is a directed graph of modes. Each mode carries a vector
 * field and an input box; each edge carries a guard (a level set h(x) = c of a
 * continuous function) and a reset map applied when the guard is reached.
 *
 * Flows are integrated with fixed-step RK4. The guarded variant watches the
 * signed guard value of every outgoing guard at each substep and locates the
 * first crossing by bisection.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lmpc {

using ModeId = int;
using GuardId = int;

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Non-finite state produced while integrating.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Two guards fire at the same instant; the transition is not well defined.
class AmbiguousTransition : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IntegratorOptions {
  int substeps = 10;          ///< RK4 substeps per call of flow_fixed
  double event_tol = 1e-9;    ///< |h - c| target when locating a crossing
  int max_bisection = 40;
  double tie_tol = 1e-12;     ///< crossings closer than this (s) are a tie
  double reset_tol = 1e-6;    ///< how far off a guard apply_reset accepts
};

template <int Nx, int Nu>
struct Guard {
  using State = Eigen::Matrix<double, Nx, 1>;

  GuardId id = 0;
  std::string name;
  ModeId source_mode = 0;
  ModeId target_mode = 0;
  std::function<double(const State&)> h;
  double c = 0.0;
  /// +1: fires when h rises to c. -1: fires when h falls to c.
  int crossing_sign = 1;
  /// Supremum of the signed guard value over the state space (how far "past"
  /// the guard a state can be). Used to detect empty tightened sets.
  double max_depth = kInf;
};

template <int Nx, int Nu>
struct ResetMap {
  using State = Eigen::Matrix<double, Nx, 1>;
  GuardId guard_id = 0;
  std::function<State(const State&)> map;
};

template <int Nx, int Nu>
struct Mode {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;

  ModeId id = 0;
  std::string name;
  std::function<State(const State&, const Input&)> vector_field;
  Input input_lo = Input::Constant(-1.0);
  Input input_hi = Input::Constant(1.0);
  std::function<bool(const State&)> domain_check = [](const State&) { return true; };
};

/// Signed guard value: positive means past the guard, zero on it.
template <int Nx, int Nu>
double guard_value(const Guard<Nx, Nu>& g, const Eigen::Matrix<double, Nx, 1>& x) {
  return g.crossing_sign * (g.h(x) - g.c);
}

template <int Nx, int Nu>
struct HybridSystem {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;
  using ModeT = Mode<Nx, Nu>;
  using GuardT = Guard<Nx, Nu>;
  using ResetT = ResetMap<Nx, Nu>;

  std::vector<ModeT> modes;
  std::vector<GuardT> guards;
  std::vector<ResetT> resets;
  ModeId final_mode = 0;
  /// Target equilibrium x*. Costs and terminal sets are written in x - x*.
  State equilibrium = State::Zero();
  /// State components that are positions (used by stability classification).
  std::vector<int> position_indices;

  const ModeT& mode(ModeId id) const {
    for (const auto& m : modes)
      if (m.id == id) return m;
    throw ContractViolation("unknown mode id " + std::to_string(id));
  }

  const GuardT& guard(GuardId id) const {
    for (const auto& g : guards)
      if (g.id == id) return g;
    throw ContractViolation("unknown guard id " + std::to_string(id));
  }

  const ResetT& reset(GuardId id) const {
    for (const auto& r : resets)
      if (r.guard_id == id) return r;
    throw ContractViolation("no reset map for guard " + std::to_string(id));
  }

  bool has_mode(ModeId id) const {
    return std::any_of(modes.begin(), modes.end(), [&](const ModeT& m) { return m.id == id; });
  }

  /// Guards whose source is `m`, in declaration order.
  std::vector<GuardId> outgoing(ModeId m) const {
    std::vector<GuardId> out;
    for (const auto& g : guards)
      if (g.source_mode == m) out.push_back(g.id);
    return out;
  }

  /// First mode whose domain contains x, if any.
  std::optional<ModeId> locate(const State& x) const {
    // The final mode wins ties on shared boundaries.
    if (has_mode(final_mode) && mode(final_mode).domain_check(x)) return final_mode;
    for (const auto& m : modes)
      if (m.domain_check(x)) return m.id;
    return std::nullopt;
  }

  /// Checks graph consistency and the equilibrium condition.
  void validate(double tol = 1e-9) const {
    for (const auto& g : guards) {
      if (!has_mode(g.source_mode) || !has_mode(g.target_mode))
        throw ContractViolation("guard " + g.name + " references a missing mode");
      if (g.crossing_sign != 1 && g.crossing_sign != -1)
        throw ContractViolation("guard " + g.name + " crossing_sign must be +1 or -1");
      int n_resets = 0;
      for (const auto& r : resets) n_resets += (r.guard_id == g.id);
      if (n_resets != 1)
        throw ContractViolation("guard " + g.name + " needs exactly one reset map");
    }
    const auto& fm = mode(final_mode);
    if (!fm.domain_check(equilibrium))
      throw ContractViolation("equilibrium outside the final mode's domain");
    if (fm.vector_field(equilibrium, Input::Zero()).norm() > tol)
      throw ContractViolation("final-mode vector field does not vanish at the equilibrium");
    for (int i = 0; i < Nu; ++i)
      for (const auto& m : modes)
        if (!(m.input_lo(i) <= 0.0 && 0.0 <= m.input_hi(i)))
          throw ContractViolation("input box of mode " + m.name + " must contain the origin");
  }
};

struct GuardEvent {
  GuardId guard_id = 0;
  double time = 0.0;  ///< relative to the start of the flow
};

template <int Nx>
struct FlowResult {
  using State = Eigen::Matrix<double, Nx, 1>;
  State end_state;
  double elapsed = 0.0;
  std::optional<GuardEvent> event;
  State hit_state;  ///< valid when event is set
  std::vector<std::pair<double, State>> samples;
};

namespace detail {

template <int Nx>
void check_finite(const Eigen::Matrix<double, Nx, 1>& x) {
  if (!x.allFinite()) throw DivergenceError("non-finite state during integration");
}

struct NoDisturbance {
  template <class State>
  State operator()(double, const State&) const {
    return State::Zero();
  }
};

template <int Nu>
struct ConstantInput {
  Eigen::Matrix<double, Nu, 1> u;
  template <class State>
  const Eigen::Matrix<double, Nu, 1>& operator()(double, const State&) const {
    return u;
  }
};

/// One classical RK4 step of x' = f(x, u(t, x)) + w(t, x).
template <int Nx, int Nu, class InputFn, class DistFn>
Eigen::Matrix<double, Nx, 1> rk4_step(const Mode<Nx, Nu>& m, const Eigen::Matrix<double, Nx, 1>& x,
                                      double t, double h, const InputFn& u, const DistFn& w) {
  using State = Eigen::Matrix<double, Nx, 1>;
  auto rhs = [&](double tt, const State& xx) -> State {
    return m.vector_field(xx, u(tt, xx)) + w(tt, xx);
  };
  const State k1 = rhs(t, x);
  const State k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
  const State k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
  const State k4 = rhs(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Integrates mode `m` from x0 over [t0, t0 + dt] with `n_steps` equal RK4 steps,
/// driven by an arbitrary input policy u(t, x) and disturbance w(t, x).
template <int Nx, int Nu, class InputFn, class DistFn>
Eigen::Matrix<double, Nx, 1> integrate(const Mode<Nx, Nu>& m, const Eigen::Matrix<double, Nx, 1>& x0,
                                       double t0, double dt, int n_steps, const InputFn& u,
                                       const DistFn& w) {
  if (dt <= 0.0) return x0;
  const double h = dt / n_steps;
  Eigen::Matrix<double, Nx, 1> x = x0;
  for (int i = 0; i < n_steps; ++i) {
    x = detail::rk4_step(m, x, t0 + i * h, h, u, w);
    detail::check_finite(x);
  }
  return x;
}

/// Zero-order-hold flow without guard termination (the transcription dynamics).
template <int Nx, int Nu>
Eigen::Matrix<double, Nx, 1> flow_fixed(const Mode<Nx, Nu>& m, const typename Mode<Nx, Nu>::State& x0,
                                        const typename Mode<Nx, Nu>::Input& u, double dt,
                                        const IntegratorOptions& opts = {}) {
  return integrate(m, x0, 0.0, dt, opts.substeps, detail::ConstantInput<Nu>{u},
                   detail::NoDisturbance{});
}

/// Guarded flow with a general input policy and disturbance. Stops at the
/// earliest crossing of an outgoing guard of `mode_id`. `step` is the maximum
/// RK4 step length; the interval is split into equal steps no longer than it.
template <int Nx, int Nu, class InputFn, class DistFn>
FlowResult<Nx> flow_with_events(const HybridSystem<Nx, Nu>& sys, ModeId mode_id,
                                const typename HybridSystem<Nx, Nu>::State& x0, double t0, double dt,
                                double step, const InputFn& u, const DistFn& w,
                                const IntegratorOptions& opts = {}) {
  using State = Eigen::Matrix<double, Nx, 1>;
  const auto& m = sys.mode(mode_id);
  const auto guard_ids = sys.outgoing(mode_id);
  std::vector<const Guard<Nx, Nu>*> gs;
  for (GuardId id : guard_ids) gs.push_back(&sys.guard(id));

  FlowResult<Nx> res;
  res.end_state = x0;
  res.samples.emplace_back(0.0, x0);
  if (dt <= 0.0) return res;

  std::vector<double> v_prev(gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) {
    v_prev[i] = guard_value(*gs[i], x0);
    if (v_prev[i] > opts.event_tol)
      throw ContractViolation("flow started past guard " + gs[i]->name);
  }

  const int n_steps = std::max(1, static_cast<int>(std::ceil(dt / step - 1e-9)));
  const double h = dt / n_steps;
  State x = x0;
  for (int s = 0; s < n_steps; ++s) {
    const double ts = t0 + s * h;
    const State xn = detail::rk4_step(m, x, ts, h, u, w);
    detail::check_finite(xn);

    // Locate every crossing in this substep, keep the earliest.
    int best = -1;
    double best_tau = kInf;
    State best_state = xn;
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const double vn = guard_value(*gs[i], xn);
      if (!(v_prev[i] < 0.0 && vn >= 0.0) && !(v_prev[i] == 0.0 && vn > 0.0)) continue;
      double lo = 0.0, hi = h;
      State x_lo = x, x_hi = xn;
      for (int it = 0; it < opts.max_bisection; ++it) {
        if (std::abs(guard_value(*gs[i], x_lo)) <= opts.event_tol) break;
        if (std::abs(guard_value(*gs[i], x_hi)) <= opts.event_tol) {
          lo = hi;
          x_lo = x_hi;
          break;
        }
        const double mid = 0.5 * (lo + hi);
        const State xm = detail::rk4_step(m, x, ts, mid, u, w);
        if (guard_value(*gs[i], xm) < 0.0) {
          lo = mid;
          x_lo = xm;
        } else {
          hi = mid;
          x_hi = xm;
        }
      }
      if (best >= 0 && std::abs(lo - best_tau) <= opts.tie_tol)
        throw AmbiguousTransition("guards " + gs[best]->name + " and " + gs[i]->name +
                                  " fire simultaneously");
      if (lo < best_tau) {
        best = static_cast<int>(i);
        best_tau = lo;
        best_state = x_lo;
      }
    }
    if (best >= 0) {
      res.event = GuardEvent{gs[best]->id, s * h + best_tau};
      res.hit_state = best_state;
      res.end_state = best_state;
      res.elapsed = s * h + best_tau;
      res.samples.emplace_back(res.elapsed, best_state);
      return res;
    }
    for (std::size_t i = 0; i < gs.size(); ++i) v_prev[i] = guard_value(*gs[i], xn);
    x = xn;
    res.samples.emplace_back((s + 1) * h, x);
  }
  res.end_state = x;
  res.elapsed = dt;
  return res;
}

/// Guarded zero-order-hold flow with the configured substep count.
template <int Nx, int Nu>
FlowResult<Nx> flow_with_events(const HybridSystem<Nx, Nu>& sys, ModeId mode_id,
                                const typename HybridSystem<Nx, Nu>::State& x0,
                                const typename HybridSystem<Nx, Nu>::Input& u, double dt,
                                const IntegratorOptions& opts = {}) {
  return flow_with_events(sys, mode_id, x0, 0.0, dt, dt / opts.substeps,
                          detail::ConstantInput<Nu>{u}, detail::NoDisturbance{}, opts);
}

/// Applies the reset of `guard_id`; x must lie on that guard.
template <int Nx, int Nu>
Eigen::Matrix<double, Nx, 1> apply_reset(const HybridSystem<Nx, Nu>& sys, GuardId guard_id,
                                         const typename HybridSystem<Nx, Nu>::State& x,
                                         const IntegratorOptions& opts = {}) {
  const auto& g = sys.guard(guard_id);
  if (std::abs(guard_value(g, x)) > opts.reset_tol)
    throw ContractViolation("apply_reset: state is not on guard " + g.name);
  return sys.reset(guard_id).map(x);
}

/// Rate of change of the signed guard value along f(x, u). Negative means the
/// flow is moving away from the guard.
template <int Nx, int Nu>
double guard_rate(const HybridSystem<Nx, Nu>& sys, GuardId guard_id,
                  const typename HybridSystem<Nx, Nu>::State& x,
                  const typename HybridSystem<Nx, Nu>::Input& u, double eps = 1e-7) {
  const auto& g = sys.guard(guard_id);
  const auto f = sys.mode(g.source_mode).vector_field(x, u);
  return (guard_value(g, Eigen::Matrix<double, Nx, 1>(x + eps * f)) -
          guard_value(g, Eigen::Matrix<double, Nx, 1>(x - eps * f))) /
         (2.0 * eps);
}

/// A state is on a guard when it lies on the level set and the unforced flow
/// carries it across. States on the level set but moving away are off it.
template <int Nx, int Nu>
bool on_guard(const HybridSystem<Nx, Nu>& sys, GuardId guard_id,
              const typename HybridSystem<Nx, Nu>::State& x, double tol = 1e-9) {
  const auto& g = sys.guard(guard_id);
  if (std::abs(guard_value(g, x)) > tol) return false;
  return guard_rate<Nx, Nu>(sys, guard_id, x, Eigen::Matrix<double, Nu, 1>::Zero()) >= 0.0;
}

}  // namespace lmpc
