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
 * @file mpc.hpp
 * @brief Fixed-mode MPC over a prescribed mode schedule, nominal and robust.
 *
 * The schedule fixes which mode every node lives in and which guard closes
 * each domain. The transcription is multiple shooting: all node states and
 * inputs are decision variables and each transition k -> k+1 is one of
 *
 *   Flow     x_{k+1} = flow of mode I(k) under u_k for one node interval
 *   Virtual  (robust only) flow past the guard for one recompute period
 *   Reset    x_{k+1} = R_G(x_k), no time passes
 *
 * In the nominal problem the last node of a domain lies on its guard. The
 * robust problem moves contact one node earlier and adds a virtual node
 * whose tube cross section must lie entirely past the guard; the reset then
 * acts on the guard crossing found by interpolating between the contact and
 * virtual nodes. Guard-avoid constraints and the input box are tightened by
 * the tube diameter and the low-level controller's input budget.
 */
#pragma once

#include "lmpc/hybrid_system.hpp"
#include "lmpc/nlp.hpp"
#include "lmpc/riccati.hpp"
#include "lmpc/tubes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmpc {

enum class NodeKind { Regular, Contact, Virtual };
enum class Transition { Flow, Virtual, Reset };

/// Node-wise mode assignment. Domains are identified by a visit index
/// (`segment`) because a guard may lead back into the same mode.
struct ModeSchedule {
  std::vector<ModeId> modes;    ///< I(k), k = 0..N
  std::vector<int> segment;     ///< domain visit of node k, non-decreasing from 0
  std::vector<GuardId> guards;  ///< guard closing each non-final domain
  bool robust = false;

  int N() const { return static_cast<int>(modes.size()) - 1; }
  int n_segments() const { return segment.empty() ? 0 : segment.back() + 1; }
  bool is_final_segment(int s) const { return s == n_segments() - 1; }

  int first_node(int s) const {
    for (int k = 0; k <= N(); ++k)
      if (segment[k] == s) return k;
    throw ContractViolation("schedule has no segment " + std::to_string(s));
  }
  int last_node(int s) const {
    for (int k = N(); k >= 0; --k)
      if (segment[k] == s) return k;
    throw ContractViolation("schedule has no segment " + std::to_string(s));
  }
  int segment_size(int s) const { return last_node(s) - first_node(s) + 1; }

  /// k_n: the last node index of every non-final domain.
  std::vector<int> guard_nodes() const {
    std::vector<int> out;
    for (int s = 0; s + 1 < n_segments(); ++s) out.push_back(last_node(s));
    return out;
  }

  NodeKind kind(int k) const {
    const int s = segment[k];
    if (is_final_segment(s)) return NodeKind::Regular;
    const int last = last_node(s);
    if (robust) {
      if (k == last) return NodeKind::Virtual;
      if (k == last - 1) return NodeKind::Contact;
      return NodeKind::Regular;
    }
    return k == last ? NodeKind::Contact : NodeKind::Regular;
  }

  /// G(k) for contact and virtual nodes.
  std::optional<GuardId> guard_at(int k) const {
    if (kind(k) == NodeKind::Regular) return std::nullopt;
    return guards[segment[k]];
  }

  Transition transition(int k) const {
    if (segment[k] != segment[k + 1]) return Transition::Reset;
    if (robust && kind(k + 1) == NodeKind::Virtual) return Transition::Virtual;
    return Transition::Flow;
  }

  /// Nodes per domain, with node 0 not counted, so the entries sum to N.
  std::vector<int> dwell() const {
    std::vector<int> d(n_segments(), 0);
    for (int k = 1; k <= N(); ++k) ++d[segment[k]];
    return d;
  }

  bool all_final(ModeId final_mode) const {
    return std::all_of(modes.begin(), modes.end(), [&](ModeId m) { return m == final_mode; });
  }

  bool operator==(const ModeSchedule& o) const {
    return modes == o.modes && segment == o.segment && guards == o.guards && robust == o.robust;
  }
};

/// Checks graph consistency and minimum domain lengths.
template <int Nx, int Nu>
void validate_schedule(const HybridSystem<Nx, Nu>& sys, const ModeSchedule& s) {
  if (s.N() < 2) throw ContractViolation("schedule needs N >= 2");
  if (s.segment.size() != s.modes.size()) throw ContractViolation("schedule segment/mode size mismatch");
  if (s.segment.front() != 0) throw ContractViolation("schedule must start in segment 0");
  for (int k = 0; k < s.N(); ++k) {
    const int d = s.segment[k + 1] - s.segment[k];
    if (d != 0 && d != 1) throw ContractViolation("schedule segments must be contiguous");
    if (d == 0 && s.modes[k] != s.modes[k + 1])
      throw ContractViolation("mode changes inside a schedule segment");
  }
  if (static_cast<int>(s.guards.size()) != s.n_segments() - 1)
    throw ContractViolation("schedule needs one guard per non-final segment");
  for (int seg = 0; seg + 1 < s.n_segments(); ++seg) {
    const auto& g = sys.guard(s.guards[seg]);
    if (g.source_mode != s.modes[s.first_node(seg)] || g.target_mode != s.modes[s.first_node(seg + 1)])
      throw ContractViolation("schedule guard " + g.name + " is not an edge between its domains");
    const int size = s.segment_size(seg);
    const int need = seg == 0 ? 2 : (s.robust ? 3 : 2);
    if (size < need)
      throw ContractViolation("schedule domain " + std::to_string(seg) + " is too short");
  }
  if (s.modes.back() != sys.final_mode) throw ContractViolation("schedule must end in the final mode");
}

/// Builds a schedule from a start mode, a chain of guards, and per-domain
/// node counts (node 0 excluded, summing to N).
template <int Nx, int Nu>
ModeSchedule make_schedule(const HybridSystem<Nx, Nu>& sys, ModeId start, const std::vector<GuardId>& edges,
                           const std::vector<int>& dwell, bool robust) {
  if (dwell.size() != edges.size() + 1)
    throw ContractViolation("make_schedule: need one dwell entry per domain");
  ModeSchedule s;
  s.robust = robust;
  s.guards = edges;
  ModeId m = start;
  s.modes.push_back(m);
  s.segment.push_back(0);
  for (std::size_t seg = 0; seg < dwell.size(); ++seg) {
    if (seg > 0) m = sys.guard(edges[seg - 1]).target_mode;
    if (seg > 0 && sys.guard(edges[seg - 1]).source_mode != s.modes.back())
      throw ContractViolation("make_schedule: guard chain does not follow the graph");
    for (int i = 0; i < dwell[seg]; ++i) {
      s.modes.push_back(m);
      s.segment.push_back(static_cast<int>(seg));
    }
  }
  validate_schedule(sys, s);
  return s;
}

/// Drops node 0 (no event) or the whole impacted domain (event) and pads the
/// horizon with final-mode nodes.
inline ModeSchedule shift_schedule(const ModeSchedule& s, std::optional<GuardId> event = std::nullopt) {
  ModeSchedule out = s;
  int drop = 1;
  if (event) {
    if (s.guards.empty() || s.guards.front() != *event)
      throw ContractViolation("shift_schedule: impacted guard is not the next planned guard");
    drop = s.segment_size(0);
  }
  out.modes.erase(out.modes.begin(), out.modes.begin() + drop);
  out.segment.erase(out.segment.begin(), out.segment.begin() + drop);
  const ModeId final_mode = s.modes.back();
  const int final_seg = s.segment.back();
  for (int i = 0; i < drop; ++i) {
    out.modes.push_back(final_mode);
    out.segment.push_back(final_seg);
  }
  if (out.segment.front() > 0) {
    const int off = out.segment.front();
    for (int& v : out.segment) v -= off;
    out.guards.erase(out.guards.begin(), out.guards.begin() + off);
  }
  return out;
}

template <int Nx, int Nu>
struct TerminalIngredients {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;

  Eigen::Matrix<double, Nx, Nx> P = Eigen::Matrix<double, Nx, Nx>::Identity();
  Eigen::Matrix<double, Nu, Nx> K = Eigen::Matrix<double, Nu, Nx>::Zero();
  double c_f = 0.0;
  Input input_lo = Input::Constant(-kInf);
  Input input_hi = Input::Constant(kInf);

  /// Phi on the deviation from the equilibrium.
  double phi(const State& dx) const { return dx.dot(P * dx); }
  /// kappa_f on the deviation, clamped to the input box.
  Input control(const State& dx) const { return (-K * dx).cwiseMax(input_lo).cwiseMin(input_hi); }
};

template <int Nx, int Nu>
struct MpcConfig {
  using StateMat = Eigen::Matrix<double, Nx, Nx>;
  using InputMat = Eigen::Matrix<double, Nu, Nu>;
  using Input = Eigen::Matrix<double, Nu, 1>;

  int N = 20;
  double dt_d = 0.1;  ///< node interval
  double dt = 0.1;    ///< recompute period
  StateMat Q = StateMat::Identity();
  InputMat R = InputMat::Identity();
  TerminalIngredients<Nx, Nu> terminal;
  IntegratorOptions integrator;
  SolverOptions solver;
  double eps_strict = 1e-6;
  double feas_tol = 1e-6;
  /// Per-channel input used by the low-level controller; shrinks the box in
  /// the robust problem.
  Input input_budget = Input::Zero();
  /// Lipschitz constant of each guard function, indexed by guard id (1 when absent).
  std::vector<double> guard_lipschitz;

  double guard_lip(GuardId g) const {
    return g >= 0 && g < static_cast<GuardId>(guard_lipschitz.size()) ? guard_lipschitz[g] : 1.0;
  }

  void validate() const {
    if (N < 2) throw std::invalid_argument("mpc: N must be >= 2");
    if (!(dt > 0 && dt_d > 0)) throw std::invalid_argument("mpc: dt and dt_d must be positive");
    if (dt > dt_d + 1e-12) throw std::invalid_argument("mpc: dt must not exceed dt_d");
    if ((input_budget.array() < 0).any()) throw std::invalid_argument("mpc: input budget must be >= 0");
  }
};

template <int Nx, int Nu>
struct Plan {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;

  std::vector<State> states;
  std::vector<Input> inputs;
  std::vector<double> node_times;  ///< planned time of each node, relative to node 0
  double cost = 0.0;
  ModeSchedule schedule;
  SolveResult solve;
  double first_interval = 0.0;
  double tube_diam = 0.0;  ///< diameter used for tightening (0 for nominal)
  bool feasible = false;
  bool infeasible_by_construction = false;
  bool used_warm_start = false;

  int N() const { return static_cast<int>(inputs.size()); }
};

namespace detail {

/// Shared data captured by the constraint callbacks.
template <int Nx, int Nu>
struct Transcription {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;
  static constexpr int kStride = Nx + Nu;

  const HybridSystem<Nx, Nu>* sys = nullptr;
  ModeSchedule schedule;
  MpcConfig<Nx, Nu> cfg;
  State x0;
  double first_interval = 0.0;
  double diam = 0.0;  ///< tube diameter at the recompute period
  bool robust = false;

  int N() const { return schedule.N(); }
  int n_vars() const { return (N() + 1) * Nx + N() * Nu; }
  static int ix(int k) { return k * kStride; }
  static int iu(int k) { return k * kStride + Nx; }

  State x(const VectorXd& z, int k) const { return z.template segment<Nx>(ix(k)); }
  Input u(const VectorXd& z, int k) const { return z.template segment<Nu>(iu(k)); }

  double margin(GuardId g) const { return robust ? diam * cfg.guard_lip(g) : 0.0; }

  double interval(int k) const {
    switch (schedule.transition(k)) {
      case Transition::Flow: return k == 0 ? first_interval : cfg.dt_d;
      case Transition::Virtual: return cfg.dt;
      case Transition::Reset: return 0.0;
    }
    return 0.0;
  }

  Input input_lo(int k) const {
    Input lo = sys->mode(schedule.modes[k]).input_lo;
    return robust ? Input(lo + cfg.input_budget) : lo;
  }
  Input input_hi(int k) const {
    Input hi = sys->mode(schedule.modes[k]).input_hi;
    return robust ? Input(hi - cfg.input_budget) : hi;
  }

  /// Fraction along the chord from the contact node to the virtual node where
  /// the guard is crossed. Inside the chord the root is refined by bisection;
  /// outside it the secant estimate is extrapolated so the map stays smooth
  /// through the contact configuration (contact node exactly on the guard).
  double crossing_fraction(GuardId gid, const State& xc, const State& xv) const {
    const auto& g = sys->guard(gid);
    const double v0 = guard_value(g, xc), v1 = guard_value(g, xv);
    if (!(v1 > v0)) return 1.0;
    const double secant = -v0 / (v1 - v0);
    if (secant <= 0.0 || secant >= 1.0) return std::clamp(secant, -1.0, 2.0);
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (guard_value(g, State((1.0 - mid) * xc + mid * xv)) < 0.0)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// State handed to the reset map on the transition k -> k+1. In the robust
  /// problem the guard impact lies on the chord between the contact and the
  /// virtual node; the contact equality pins it to the contact node, which is
  /// used directly so the residual stays smooth away from feasibility.
  State pre_reset_state(int k, const State& xk, const std::optional<State>& xkm1) const {
    if (!robust || !xkm1) return xk;
    (void)k;
    return *xkm1;
  }

  /// x_{k+1} predicted from x_k (and x_{k-1} for robust resets).
  State propagate(int k, const State& xk, const Input& uk, const std::optional<State>& xkm1) const {
    const Transition t = schedule.transition(k);
    if (t == Transition::Reset) {
      const GuardId g = schedule.guards[schedule.segment[k]];
      return sys->reset(g).map(pre_reset_state(k, xk, xkm1));
    }
    return flow_fixed(sys->mode(schedule.modes[k]), xk, uk, interval(k), cfg.integrator);
  }

  /// Planned node times relative to node 0.
  std::vector<double> node_times(const std::vector<State>& xs) const {
    std::vector<double> t(N() + 1, 0.0);
    for (int k = 0; k < N(); ++k) {
      const Transition tr = schedule.transition(k);
      if (tr == Transition::Reset && robust && k >= 1) {
        // The reset happens at the crossing between the contact and virtual nodes.
        const GuardId g = schedule.guards[schedule.segment[k]];
        t[k + 1] = t[k - 1] + crossing_fraction(g, xs[k - 1], xs[k]) * cfg.dt;
      } else {
        t[k + 1] = t[k] + interval(k);
      }
    }
    return t;
  }

  double stage_weight(int k) const {
    return schedule.transition(k) == Transition::Flow ? interval(k) / cfg.dt_d : 0.0;
  }
};

template <int Nx, int Nu>
std::vector<int> deps_of(std::initializer_list<std::pair<int, int>> ranges) {
  std::vector<int> d;
  for (auto [start, len] : ranges)
    for (int i = 0; i < len; ++i) d.push_back(start + i);
  return d;
}

}  // namespace detail

template <int Nx, int Nu>
struct MpcProblem {
  NlpProblem nlp;
  std::shared_ptr<const detail::Transcription<Nx, Nu>> tr;
  bool infeasible_by_construction = false;
  std::string reason;
};

namespace detail {

template <int Nx, int Nu>
MpcProblem<Nx, Nu> build(const HybridSystem<Nx, Nu>& sys, const ModeSchedule& schedule,
                         const Eigen::Matrix<double, Nx, 1>& x0, const MpcConfig<Nx, Nu>& cfg,
                         double first_interval, bool robust, double diam) {
  using T = Transcription<Nx, Nu>;
  using State = typename T::State;
  cfg.validate();
  validate_schedule(sys, schedule);
  if (schedule.robust != robust)
    throw ContractViolation(robust ? "robust problem needs a robust schedule"
                                   : "nominal problem needs a nominal schedule");
  if (schedule.N() != cfg.N) throw ContractViolation("schedule length does not match the horizon");
  if (!(first_interval > 0)) throw ContractViolation("first node interval must be positive");

  auto tr = std::make_shared<T>();
  tr->sys = &sys;
  tr->schedule = schedule;
  tr->cfg = cfg;
  tr->x0 = x0;
  tr->first_interval = first_interval;
  tr->diam = diam;
  tr->robust = robust;

  const int N = schedule.N();
  MpcProblem<Nx, Nu> out;
  out.tr = tr;
  NlpProblem& p = out.nlp;
  p = NlpProblem(tr->n_vars());

  // x0 fixed, inputs boxed.
  p.lo.template segment<Nx>(T::ix(0)) = x0;
  p.hi.template segment<Nx>(T::ix(0)) = x0;
  for (int k = 0; k < N; ++k) {
    const auto lo = tr->input_lo(k), hi = tr->input_hi(k);
    if ((lo.array() > hi.array()).any()) {
      out.infeasible_by_construction = true;
      out.reason = "input budget empties the input box";
    }
    p.lo.template segment<Nu>(T::iu(k)) = lo;
    p.hi.template segment<Nu>(T::iu(k)) = hi.cwiseMax(lo);
  }

  // Cost.
  const State xs = sys.equilibrium;
  for (int k = 0; k < N; ++k) {
    const double w = tr->stage_weight(k);
    p.add_cost(
        [tr, k, w, xs](const VectorXd& z) {
          const State dx = tr->x(z, k) - xs;
          const auto uk = tr->u(z, k);
          double c = uk.dot(tr->cfg.R * uk);
          if (w > 0) c = w * (dx.dot(tr->cfg.Q * dx) + c);
          return c;
        },
        deps_of<Nx, Nu>({{T::ix(k), Nx + Nu}}));
  }
  p.add_cost(
      [tr, N, xs](const VectorXd& z) { return tr->cfg.terminal.phi(tr->x(z, N) - xs); },
      deps_of<Nx, Nu>({{T::ix(N), Nx}}));

  // Dynamics.
  for (int k = 0; k < N; ++k) {
    const Transition t = schedule.transition(k);
    const bool uses_prev = robust && t == Transition::Reset && k >= 1;
    std::vector<int> deps;
    if (uses_prev)
      deps = deps_of<Nx, Nu>({{T::ix(k - 1), Nx}, {T::ix(k), Nx}, {T::ix(k + 1), Nx}});
    else if (t == Transition::Reset)
      deps = deps_of<Nx, Nu>({{T::ix(k), Nx}, {T::ix(k + 1), Nx}});
    else
      deps = deps_of<Nx, Nu>({{T::ix(k), Nx + Nu}, {T::ix(k + 1), Nx}});
    p.add_eq(
        Nx,
        [tr, k, uses_prev](const VectorXd& z, Eigen::Ref<VectorXd> r) {
          std::optional<State> prev;
          if (uses_prev) prev = tr->x(z, k - 1);
          try {
            r = tr->x(z, k + 1) - tr->propagate(k, tr->x(z, k), tr->u(z, k), prev);
          } catch (const DivergenceError&) {
            // Non-finite residuals make the solver reject the trial point.
            r.setConstant(std::numeric_limits<double>::quiet_NaN());
          }
        },
        std::move(deps), deps_of<Nx, Nu>({{T::ix(k + 1), Nx}}));
  }

  // Guard contact, pass-through and avoidance.
  for (int k = 1; k <= N; ++k) {
    const NodeKind kind = schedule.kind(k);
    const int seg = schedule.segment[k];
    const auto deps = deps_of<Nx, Nu>({{T::ix(k), Nx}});
    if (kind == NodeKind::Contact) {
      const GuardId g = schedule.guards[seg];
      p.add_eq(
          1,
          [tr, k, g](const VectorXd& z, Eigen::Ref<VectorXd> r) {
            r(0) = guard_value(tr->sys->guard(g), tr->x(z, k));
          },
          deps);
    }
    if (kind == NodeKind::Virtual) {
      const GuardId g = schedule.guards[seg];
      const double m = tr->margin(g);
      if (m > sys.guard(g).max_depth) {
        out.infeasible_by_construction = true;
        out.reason = "tube margin exceeds the depth available past guard " + sys.guard(g).name;
      }
      p.add_ineq(
          1,
          [tr, k, g, m](const VectorXd& z, Eigen::Ref<VectorXd> r) {
            r(0) = m - guard_value(tr->sys->guard(g), tr->x(z, k));
          },
          deps);
      continue;
    }
    std::vector<GuardId> avoid;
    for (GuardId g : sys.outgoing(schedule.modes[k])) {
      if (kind == NodeKind::Contact && g == schedule.guards[seg]) continue;
      // The post-reset node sits on the guard it just crossed.
      if (seg > 0 && k == schedule.first_node(seg) && g == schedule.guards[seg - 1]) continue;
      avoid.push_back(g);
    }
    if (avoid.empty()) continue;
    p.add_ineq(
        static_cast<int>(avoid.size()),
        [tr, k, avoid](const VectorXd& z, Eigen::Ref<VectorXd> r) {
          const State xk = tr->x(z, k);
          for (std::size_t i = 0; i < avoid.size(); ++i)
            r(i) = guard_value(tr->sys->guard(avoid[i]), xk) + tr->cfg.eps_strict + tr->margin(avoid[i]);
        },
        deps);
  }

  // Terminal set.
  p.add_ineq(
      1,
      [tr, N, xs](const VectorXd& z, Eigen::Ref<VectorXd> r) {
        r(0) = tr->cfg.terminal.phi(tr->x(z, N) - xs) - tr->cfg.terminal.c_f;
      },
      deps_of<Nx, Nu>({{T::ix(N), Nx}}));
  return out;
}

}  // namespace detail

/// Nominal fixed-mode problem.
template <int Nx, int Nu>
MpcProblem<Nx, Nu> build_fixed_mode(const HybridSystem<Nx, Nu>& sys, const ModeSchedule& schedule,
                                    const typename HybridSystem<Nx, Nu>::State& x0,
                                    const MpcConfig<Nx, Nu>& cfg, double first_interval = -1.0) {
  return detail::build(sys, schedule, x0, cfg, first_interval > 0 ? first_interval : cfg.dt_d, false, 0.0);
}

/// Robust fixed-mode problem with tube tightening at the recompute period.
template <int Nx, int Nu>
MpcProblem<Nx, Nu> build_robust(const HybridSystem<Nx, Nu>& sys, const ModeSchedule& schedule,
                                const typename HybridSystem<Nx, Nu>::State& x0, const MpcConfig<Nx, Nu>& cfg,
                                const TubeModel& tube, double first_interval = -1.0) {
  return detail::build(sys, schedule, x0, cfg, first_interval > 0 ? first_interval : cfg.dt_d, true,
                       combined_diam(tube, cfg.dt));
}

/// Unpacks a decision vector into node states and inputs.
template <int Nx, int Nu>
void unpack(const MpcProblem<Nx, Nu>& prob, const VectorXd& z, Plan<Nx, Nu>& plan) {
  const auto& tr = *prob.tr;
  plan.states.resize(tr.N() + 1);
  plan.inputs.resize(tr.N());
  for (int k = 0; k <= tr.N(); ++k) plan.states[k] = tr.x(z, k);
  for (int k = 0; k < tr.N(); ++k) plan.inputs[k] = tr.u(z, k);
  plan.node_times = tr.node_times(plan.states);
}

template <int Nx, int Nu>
VectorXd pack(const MpcProblem<Nx, Nu>& prob, const std::vector<Eigen::Matrix<double, Nx, 1>>& xs,
              const std::vector<Eigen::Matrix<double, Nu, 1>>& us) {
  using T = detail::Transcription<Nx, Nu>;
  VectorXd z(prob.tr->n_vars());
  for (int k = 0; k <= prob.tr->N(); ++k) z.template segment<Nx>(T::ix(k)) = xs[k];
  for (int k = 0; k < prob.tr->N(); ++k) z.template segment<Nu>(T::iu(k)) = us[k];
  return z;
}

/// Forward simulation of the transcription dynamics from x0.
template <int Nx, int Nu>
std::vector<Eigen::Matrix<double, Nx, 1>> rollout(const MpcProblem<Nx, Nu>& prob,
                                                  const Eigen::Matrix<double, Nx, 1>& x0,
                                                  const std::vector<Eigen::Matrix<double, Nu, 1>>& us) {
  using State = Eigen::Matrix<double, Nx, 1>;
  const auto& tr = *prob.tr;
  std::vector<State> xs(tr.N() + 1, x0);
  for (int k = 0; k < tr.N(); ++k) {
    std::optional<State> prev;
    if (k >= 1) prev = xs[k - 1];
    try {
      xs[k + 1] = tr.propagate(k, xs[k], us[k], prev);
    } catch (const DivergenceError&) {
      for (int j = k + 1; j <= tr.N(); ++j) xs[j] = xs[k];
      break;
    }
  }
  return xs;
}

/// Policy Y: drop the first `dropped` inputs of the previous plan, pad with the
/// terminal law rolled forward from its last state, clamp to the new boxes, and
/// re-simulate the states from x0.
template <int Nx, int Nu>
VectorXd warm_start(const HybridSystem<Nx, Nu>& sys, const MpcProblem<Nx, Nu>& prob,
                    const Plan<Nx, Nu>* prev, const Eigen::Matrix<double, Nx, 1>& x0, int dropped = 1) {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;
  const auto& tr = *prob.tr;
  const int N = tr.N();
  std::vector<Input> us(N, Input::Zero());
  if (prev && !prev->inputs.empty()) {
    const int n_prev = static_cast<int>(prev->inputs.size());
    dropped = std::clamp(dropped, 0, n_prev);
    int k = 0;
    for (int j = dropped; j < n_prev && k < N; ++j, ++k) us[k] = prev->inputs[j];
    State xe = prev->states.back();
    const auto& fm = sys.mode(sys.final_mode);
    for (; k < N; ++k) {
      us[k] = tr.cfg.terminal.control(xe - sys.equilibrium);
      try {
        xe = flow_fixed(fm, xe, us[k], tr.cfg.dt_d, tr.cfg.integrator);
      } catch (const DivergenceError&) {
      }
    }
  }
  for (int k = 0; k < N; ++k) us[k] = us[k].cwiseMax(tr.input_lo(k)).cwiseMin(tr.input_hi(k).cwiseMax(tr.input_lo(k)));
  return pack(prob, rollout(prob, x0, us), us);
}

/// Closed-loop rollout of the clamped terminal law from x0.
template <int Nx, int Nu>
VectorXd terminal_rollout(const HybridSystem<Nx, Nu>& sys, const MpcProblem<Nx, Nu>& prob,
                          const Eigen::Matrix<double, Nx, 1>& x0) {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;
  const auto& tr = *prob.tr;
  std::vector<State> xs(tr.N() + 1, x0);
  std::vector<Input> us(tr.N(), Input::Zero());
  for (int k = 0; k < tr.N(); ++k) {
    us[k] = tr.cfg.terminal.control(xs[k] - sys.equilibrium)
                .cwiseMax(tr.input_lo(k))
                .cwiseMin(tr.input_hi(k).cwiseMax(tr.input_lo(k)));
    try {
      xs[k + 1] = tr.propagate(k, xs[k], us[k], std::nullopt);
    } catch (const DivergenceError&) {
      xs[k + 1] = xs[k];
    }
  }
  return pack(prob, xs, us);
}

/// Builds (robust if a tube is given), warm-starts, solves. The warm start is
/// kept when it is feasible and no more expensive than the solver's answer.
template <int Nx, int Nu>
Plan<Nx, Nu> solve_mpc(const HybridSystem<Nx, Nu>& sys, const ModeSchedule& schedule,
                       const typename HybridSystem<Nx, Nu>::State& x0, const MpcConfig<Nx, Nu>& cfg,
                       const TubeModel* tube = nullptr, const Plan<Nx, Nu>* prev = nullptr, int dropped = 1,
                       double first_interval = -1.0) {
  const MpcProblem<Nx, Nu> prob = tube ? build_robust(sys, schedule, x0, cfg, *tube, first_interval)
                                       : build_fixed_mode(sys, schedule, x0, cfg, first_interval);
  Plan<Nx, Nu> plan;
  plan.schedule = schedule;
  plan.first_interval = prob.tr->first_interval;
  plan.tube_diam = prob.tr->robust ? prob.tr->diam : 0.0;

  const VectorXd z0 = warm_start(sys, prob, prev, x0, dropped);
  const auto& p = prob.nlp;
  auto violation = [&](const VectorXd& z) {
    return detail::max_violation(p.eval_eq(z), p.eval_ineq(z));
  };

  if (prob.infeasible_by_construction) {
    plan.infeasible_by_construction = true;
    plan.solve.status = SolveStatus::InfeasibleDetected;
    plan.solve.primal = z0;
    plan.solve.cost = p.eval_cost(z0);
    unpack(prob, z0, plan);
    plan.cost = plan.solve.cost;
    return plan;
  }

  SolveResult res = solve(p, z0, cfg.solver);
  const bool solver_ok = res.status != SolveStatus::Diverged && res.max_violation() <= cfg.feas_tol;
  plan.feasible = solver_ok;

  // Feasible initial guesses compete with the solver's answer: the shifted
  // previous plan and, in the final mode, the terminal law rolled out.
  std::vector<VectorXd> candidates{z0};
  if (schedule.all_final(sys.final_mode)) candidates.push_back(terminal_rollout(sys, prob, x0));
  for (const VectorXd& zc : candidates) {
    const double cc = p.eval_cost(zc);
    if (!std::isfinite(cc) || violation(zc) > cfg.feas_tol) continue;
    if (plan.feasible && cc > res.cost) continue;
    res.primal = zc;
    res.cost = cc;
    const VectorXd c = p.eval_eq(zc), g = p.eval_ineq(zc);
    res.max_eq_violation = c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
    res.max_ineq_violation = g.size() ? std::max(0.0, g.maxCoeff()) : 0.0;
    plan.used_warm_start = true;
    plan.feasible = true;
  }
  plan.solve = res;
  plan.cost = res.cost;
  unpack(prob, res.primal, plan);
  return plan;
}

/// Largest deviation between a plan's stored states and an independent
/// forward re-simulation of its inputs with flow_fixed and the reset maps.
/// Robust resets act on the contact-node state, as in the transcription.
template <int Nx, int Nu>
double resimulation_error(const HybridSystem<Nx, Nu>& sys, const Plan<Nx, Nu>& plan, const MpcConfig<Nx, Nu>& cfg) {
  using State = Eigen::Matrix<double, Nx, 1>;
  const ModeSchedule& s = plan.schedule;
  if (plan.states.size() != static_cast<std::size_t>(s.N() + 1) || plan.inputs.size() != static_cast<std::size_t>(s.N()))
    throw ContractViolation("resimulation_error: plan does not match its schedule");
  std::vector<State> xs(plan.states.size());
  xs[0] = plan.states[0];
  double worst = 0.0;
  for (int k = 0; k < s.N(); ++k) {
    const Mode<Nx, Nu>& m = sys.mode(s.modes[k]);
    switch (s.transition(k)) {
      case Transition::Flow:
        xs[k + 1] = flow_fixed(m, xs[k], plan.inputs[k], k == 0 ? plan.first_interval : cfg.dt_d, cfg.integrator);
        break;
      case Transition::Virtual:
        xs[k + 1] = flow_fixed(m, xs[k], plan.inputs[k], cfg.dt, cfg.integrator);
        break;
      case Transition::Reset: {
        const GuardId g = s.guards[s.segment[k]];
        xs[k + 1] = sys.reset(g).map(s.robust && k >= 1 ? xs[k - 1] : xs[k]);
        break;
      }
    }
    worst = std::max(worst, (xs[k + 1] - plan.states[k + 1]).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Discretized linearization of a mode at (x, u) by central differences of
/// the zero-order-hold flow.
template <int Nx, int Nu>
std::pair<Eigen::Matrix<double, Nx, Nx>, Eigen::Matrix<double, Nx, Nu>> linearize_discrete(
    const Mode<Nx, Nu>& m, const Eigen::Matrix<double, Nx, 1>& x, const Eigen::Matrix<double, Nu, 1>& u,
    double dt, const IntegratorOptions& opts = {}, double h = 1e-6) {
  Eigen::Matrix<double, Nx, Nx> A;
  Eigen::Matrix<double, Nx, Nu> B;
  for (int i = 0; i < Nx; ++i) {
    Eigen::Matrix<double, Nx, 1> xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    A.col(i) = (flow_fixed(m, xp, u, dt, opts) - flow_fixed(m, xm, u, dt, opts)) / (2 * h);
  }
  for (int i = 0; i < Nu; ++i) {
    Eigen::Matrix<double, Nu, 1> up = u, um = u;
    up(i) += h;
    um(i) -= h;
    B.col(i) = (flow_fixed(m, x, up, dt, opts) - flow_fixed(m, x, um, dt, opts)) / (2 * h);
  }
  return {A, B};
}

struct TerminalSearch {
  double c_init = 1e4;
  int max_halvings = 80;
  int samples = 2000;
  std::uint64_t seed = 1;
  /// P is scaled by this factor so the sampled one-step decrease keeps a margin
  /// against the nonlinearity and input clamping.
  double inflation = 2.0;
};

/// Checks the terminal-set conditions on samples of {Phi <= c}. Returns the
/// number of failing samples.
template <int Nx, int Nu>
int check_terminal(const HybridSystem<Nx, Nu>& sys, const MpcConfig<Nx, Nu>& cfg,
                   const TerminalIngredients<Nx, Nu>& term, double c, int samples, std::uint64_t seed) {
  using State = Eigen::Matrix<double, Nx, 1>;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const Eigen::Matrix<double, Nx, Nx> L = Eigen::LLT<Eigen::Matrix<double, Nx, Nx>>(term.P).matrixL();
  const auto& fm = sys.mode(sys.final_mode);
  int bad = 0;
  for (int s = 0; s < samples; ++s) {
    State d;
    for (int i = 0; i < Nx; ++i) d(i) = nd(rng);
    d.normalize();
    const double r = (s % 2 == 0) ? 1.0 : std::pow(ud(rng), 1.0 / Nx);
    // x^T P x = c r^2 for x = sqrt(c) r L^{-T} d.
    const State dx = std::sqrt(c) * r * L.transpose().template triangularView<Eigen::Upper>().solve(d);
    const State x = sys.equilibrium + dx;
    bool ok = fm.domain_check(x);
    for (const auto& g : sys.guards) {
      const double v = guard_value(g, x);
      if (g.target_mode == sys.final_mode && g.source_mode != sys.final_mode) ok = ok && v > 0.0;
      if (g.source_mode == sys.final_mode) ok = ok && v < 0.0;
    }
    if (ok) {
      const auto u = term.control(dx);
      try {
        const State xn = flow_fixed(fm, x, u, cfg.dt_d, cfg.integrator);
        const double stage = dx.dot(cfg.Q * dx) + u.dot(cfg.R * u);
        ok = term.phi(xn - sys.equilibrium) <= term.phi(dx) - stage + 1e-12;
      } catch (const DivergenceError&) {
        ok = false;
      }
    }
    bad += !ok;
  }
  return bad;
}

/// LQR terminal ingredients for the final mode: DARE on the discretized
/// linearization at the equilibrium, then the largest level c_f (halving
/// search) on which the sampled conditions hold.
template <int Nx, int Nu>
TerminalIngredients<Nx, Nu> make_terminal(const HybridSystem<Nx, Nu>& sys, const MpcConfig<Nx, Nu>& cfg,
                                          const TerminalSearch& search = {}) {
  using Input = Eigen::Matrix<double, Nu, 1>;
  const auto& fm = sys.mode(sys.final_mode);
  const auto [A, B] = linearize_discrete(fm, sys.equilibrium, Input(Input::Zero()), cfg.dt_d, cfg.integrator);
  const DareSolution dare = solve_dare(A, B, cfg.Q, cfg.R);

  TerminalIngredients<Nx, Nu> term;
  term.P = search.inflation * dare.P;
  term.K = dare.K;
  term.input_lo = fm.input_lo + cfg.input_budget;
  term.input_hi = fm.input_hi - cfg.input_budget;
  double c = search.c_init;
  for (int i = 0; i <= search.max_halvings; ++i, c *= 0.5) {
    if (check_terminal(sys, cfg, term, c, search.samples, search.seed) == 0) {
      term.c_f = c;
      return term;
    }
  }
  throw std::runtime_error("make_terminal: no terminal level verifies");
}

}  // namespace lmpc
