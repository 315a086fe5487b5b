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
 * @file sim_loop.hpp
 * @brief Closed-loop simulation of the layered controller on a disturbed plant.
 *
 * The plant is integrated with guard detection on a grid that contains every
 * low-level controller tick, disturbance switch, log sample and MPC solve
 * time. The MPC runs every `mpc_period` seconds on a robust schedule. Node 0
 * is dropped every dt_d / mpc_period solves. Once the contact node is the
 * next node the loop commits to the plan: it stops re-solving and
 * plays the stored inputs through the contact node and the pass-through
 * window that follows it, until the plant hits the planned guard. Every
 * impact applies the reset and triggers an immediate re-solve; a planned
 * impact first purges the rest of the impacted domain.
 */
#pragma once

#include "lmpc/hybrid_mpc.hpp"
#include "lmpc/mpc.hpp"
#include "lmpc/tubes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmpc {

/// When the sequence search runs in the loop. OnContact searches at every
/// impact (keeping the warm-started continuation when it is cheaper) and
/// whenever the fixed schedule turns infeasible. EveryK replaces every k-th
/// fixed-schedule solve with a search.
enum class HybridPolicy { Never, OnContact, EveryK };

struct LayerRates {
  double mpc_period = 0.1;
  HybridPolicy hybrid_policy = HybridPolicy::Never;
  int every_k = 1;  ///< solves between hybrid re-plans for EveryK

  void validate() const {
    if (!(mpc_period > 0)) throw std::invalid_argument("rates: mpc_period must be positive");
    if (hybrid_policy == HybridPolicy::EveryK && every_k < 1)
      throw std::invalid_argument("rates: every_k must be >= 1");
  }
};

/// Piecewise-constant disturbance: each hold interval draws a vector uniformly
/// from the box [-eta, eta]^m on the listed state channels and clips it to
/// Euclidean norm eta.
struct DisturbanceModel {
  double eta = 0.0;
  double hold = 0.02;
  std::uint64_t seed = 1;
  std::vector<int> channels;

  void validate(int nx) const {
    if (!(eta >= 0) || !std::isfinite(eta)) throw std::invalid_argument("disturbance: eta must be finite and >= 0");
    if (!(hold > 0)) throw std::invalid_argument("disturbance: hold must be positive");
    for (int c : channels)
      if (c < 0 || c >= nx) throw std::invalid_argument("disturbance: channel out of range");
  }
};

template <int Nx>
class DisturbanceSignal {
 public:
  using State = Eigen::Matrix<double, Nx, 1>;

  DisturbanceSignal(const DisturbanceModel& m, double horizon) : model_(m) {
    m.validate(Nx);
    const auto n = static_cast<std::size_t>(std::ceil(horizon / m.hold)) + 2;
    samples_.assign(n, State::Zero());
    if (m.eta == 0.0 || m.channels.empty()) return;
    std::mt19937_64 rng(m.seed);
    std::uniform_real_distribution<double> box(-m.eta, m.eta);
    for (auto& w : samples_) {
      for (int c : m.channels) w(c) = box(rng);
      const double nrm = w.norm();
      if (nrm > m.eta) w *= m.eta / nrm;
    }
  }

  /// Value on the hold interval that contains t (intervals are [k hold, (k+1) hold)).
  const State& at(double t) const {
    const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / model_.hold + 1e-9)));
    return samples_[std::min(k, samples_.size() - 1)];
  }

  const DisturbanceModel& model() const { return model_; }

 private:
  DisturbanceModel model_;
  std::vector<State> samples_;
};

/// Zero-order-hold tracking controller u = u_ff + clamp(K (x_ref - x), +-budget),
/// with the total clamped to the mode's input box.
template <int Nx, int Nu>
struct LowLevelPd {
  Eigen::Matrix<double, Nu, Nx> gain = Eigen::Matrix<double, Nu, Nx>::Zero();
  bool enabled = false;
  double period = 1e-3;

  void validate() const {
    if (!(period > 0)) throw std::invalid_argument("pd: period must be positive");
  }
};

/// Gain acting on position errors (kp) and the matching velocity errors (kd).
/// Velocity i is assumed to follow the positions in the state ordering.
template <int Nx, int Nu>
Eigen::Matrix<double, Nu, Nx> pd_gain(const std::vector<int>& position_indices, double kp, double kd) {
  Eigen::Matrix<double, Nu, Nx> K = Eigen::Matrix<double, Nu, Nx>::Zero();
  const int np = static_cast<int>(position_indices.size());
  if (np > Nu) throw std::invalid_argument("pd_gain: more positions than inputs");
  for (int i = 0; i < np; ++i) {
    const int pi = position_indices[i];
    if (pi + np >= Nx) throw std::invalid_argument("pd_gain: velocity index out of range");
    K(i, pi) = kp;
    K(i, pi + np) = kd;
  }
  return K;
}

template <int Nx, int Nu>
struct SimSample {
  double t = 0.0;
  ModeId mode = 0;
  Eigen::Matrix<double, Nx, 1> x;
  Eigen::Matrix<double, Nu, 1> u;
  Eigen::Matrix<double, Nx, 1> w;
};

template <int Nx>
struct ImpactRecord {
  double t = 0.0;
  GuardId guard = 0;
  Eigen::Matrix<double, Nx, 1> pre;
  Eigen::Matrix<double, Nx, 1> post;
  double guard_residual = 0.0;  ///< |h - c| at the located impact
  bool planned = false;
  double planned_contact_time = std::numeric_limits<double>::quiet_NaN();
  bool containment = false;  ///< the plan carried a feasible virtual node for this guard
  int purges = 0;            ///< schedule purges applied for this impact
};

template <int Nx, int Nu>
struct SolveRecord {
  double t = 0.0;
  bool feasible = false;
  bool hybrid = false;       ///< produced by the sequence search
  bool after_impact = false;
  bool in_terminal = false;  ///< x in the final mode and inside the terminal set
  double cost = 0.0;
  std::shared_ptr<const Plan<Nx, Nu>> plan;
};

struct TubeCheck {
  int checked = 0;
  int violations = 0;
  double max_ratio = 0.0;  ///< max over checks of deviation / diameter
};

template <int Nx, int Nu>
struct SimLog {
  std::vector<SimSample<Nx, Nu>> samples;
  std::vector<ImpactRecord<Nx>> impacts;
  std::vector<SolveRecord<Nx, Nu>> solves;
  TubeCheck tube;
  int missed_contacts = 0;  ///< committed guards not hit within the pass-through window
  bool degraded = false;
  bool initial_failure = false;
  bool aborted = false;
  std::vector<std::string> notes;
  std::uint64_t seed = 0;
  double t_end = 0.0;

  void degrade(double t, const std::string& why) {
    degraded = true;
    notes.push_back("t=" + std::to_string(t) + ": " + why);
  }
};

template <int Nx, int Nu>
struct SimOptions {
  double T_sim = 5.0;
  double sample_period = 0.01;
  double plant_step = 1e-3;  ///< largest RK4 step of the plant
  HybridConfig hybrid;
  IntegratorOptions integrator;
  /// Initial sequence-search result to reuse (it only depends on x0 and the
  /// configuration, so it can be shared across disturbance realizations).
  std::shared_ptr<const HybridResult<Nx, Nu>> initial;

  void validate() const {
    if (!(T_sim > 0)) throw std::invalid_argument("sim: T_sim must be positive");
    if (!(sample_period > 0)) throw std::invalid_argument("sim: sample_period must be positive");
    if (!(plant_step > 0)) throw std::invalid_argument("sim: plant_step must be positive");
  }
};

namespace detail {

inline double next_grid(double t, double step) {
  return (std::floor(t / step + 1e-9) + 1.0) * step;
}

inline bool on_grid(double t, double step) {
  const double k = std::round(t / step);
  return std::abs(t - k * step) <= 1e-9 * std::max(1.0, step);
}

}  // namespace detail

/// Integer ratio dt_d / mpc_period, or an exception if it is not an integer.
inline int period_ratio(double dt_d, double mpc_period) {
  const double r = dt_d / mpc_period;
  const long k = std::lround(r);
  if (k < 1 || std::abs(r - k) > 1e-9 * r) throw std::invalid_argument("dt_d must be an integer multiple of the MPC period");
  return static_cast<int>(k);
}

/// Initial sequence search for a closed-loop run.
template <int Nx, int Nu>
HybridResult<Nx, Nu> initial_plan(const HybridSystem<Nx, Nu>& sys, const Eigen::Matrix<double, Nx, 1>& x0,
                                  const MpcConfig<Nx, Nu>& cfg, const TubeModel& tube, const HybridConfig& h) {
  return hybrid_plan(sys, x0, cfg, &tube, h);
}

template <int Nx, int Nu>
SimLog<Nx, Nu> run_closed_loop(const HybridSystem<Nx, Nu>& sys, const Eigen::Matrix<double, Nx, 1>& x0,
                               MpcConfig<Nx, Nu> cfg, const LayerRates& rates, const DisturbanceModel& dist,
                               const LowLevelPd<Nx, Nu>& pd, const TubeModel& tube,
                               const SimOptions<Nx, Nu>& opt) {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;
  using PlanT = Plan<Nx, Nu>;

  rates.validate();
  pd.validate();
  opt.validate();
  cfg.dt = rates.mpc_period;
  cfg.validate();
  const int r = period_ratio(cfg.dt_d, cfg.dt);
  const double dt = cfg.dt;
  const double diam = combined_diam(tube, dt);
  const DisturbanceSignal<Nx> wsig(dist, opt.T_sim);

  SimLog<Nx, Nu> log;
  log.seed = dist.seed;

  State x = x0;
  const auto located = sys.locate(x0);
  if (!located) throw ContractViolation("run_closed_loop: x0 lies outside every domain");
  ModeId mode = *located;

  auto in_terminal = [&](const State& xx, ModeId m) {
    return m == sys.final_mode && cfg.terminal.phi(xx - sys.equilibrium) <= cfg.terminal.c_f;
  };

  // Current plan and its bookkeeping.
  std::shared_ptr<const PlanT> cur;  // last feasible plan
  double t_plan = 0.0;               // when cur was solved
  int shifts_since_cur = 0;          // node drops applied to the schedule since cur
  ModeSchedule sched;
  int phase = 0;
  bool fallback = false;  // open loop on cur after a failed solve
  int solves_since_hybrid = 0;

  // Committed approach to a planned guard: no re-solves once the contact node
  // is the next node, until the impact or until the pass-through window
  // [t_contact, t_contact + dt] closes.
  struct Window {
    double t_contact;
    double t_end;
    GuardId guard;
  };
  std::optional<Window> window;
  double next_solve = dt;

  auto record_solve = [&](double t, const PlanT& p, bool hybrid, bool after_impact) {
    SolveRecord<Nx, Nu> rec;
    rec.t = t;
    rec.feasible = p.feasible;
    rec.hybrid = hybrid;
    rec.after_impact = after_impact;
    rec.in_terminal = in_terminal(x, mode);
    rec.cost = p.cost;
    rec.plan = std::make_shared<const PlanT>(p);
    log.solves.push_back(rec);
    return rec.plan;
  };

  auto adopt = [&](double t, const std::shared_ptr<const PlanT>& p) {
    cur = p;
    t_plan = t;
    shifts_since_cur = 0;
    sched = p->schedule;
    fallback = false;
  };

  auto hybrid_solve = [&](double t, bool after_impact) -> bool {
    solves_since_hybrid = 0;
    phase = 0;
    try {
      HybridResult<Nx, Nu> res = hybrid_plan(sys, x, cfg, &tube, opt.hybrid, mode);
      adopt(t, record_solve(t, res.plan, true, after_impact));
      return true;
    } catch (const NoFeasibleSequence&) {
      PlanT empty;
      empty.cost = kInf;
      record_solve(t, empty, true, after_impact);
      return false;
    }
  };

  // Fixed-schedule solve from x at time t using the current schedule.
  auto mpc_solve = [&](double t, int dropped, bool after_impact) -> bool {
    ++solves_since_hybrid;
    const double first = (r - phase) * dt;
    const PlanT p = solve_mpc(sys, sched, x, cfg, &tube, cur.get(), dropped, first);
    auto rec = record_solve(t, p, false, after_impact);
    if (!p.feasible) return false;
    adopt(t, rec);
    return true;
  };

  auto solve_now = [&](double t, int dropped, bool after_impact) {
    window.reset();
    bool ok;
    const bool want_hybrid = rates.hybrid_policy == HybridPolicy::EveryK && solves_since_hybrid + 1 >= rates.every_k;
    if (want_hybrid)
      ok = hybrid_solve(t, after_impact);
    else
      ok = mpc_solve(t, dropped, after_impact);
    // With a sequence layer, an infeasible schedule is re-planned first.
    if (!ok && rates.hybrid_policy == HybridPolicy::OnContact) ok = hybrid_solve(t, after_impact);
    if (!ok) {
      if (!fallback) log.degrade(t, "MPC infeasible, open-loop fallback");
      fallback = true;
    }
  };

  // Sequence re-plan at a contact. The warm-started continuation of the
  // current schedule competes with the searched sequence; the cheaper
  // feasible plan is adopted.
  auto contact_replan = [&](double t, int dropped) {
    window.reset();
    solves_since_hybrid = 0;
    phase = 0;
    std::optional<PlanT> best;
    bool from_search = false;
    if (!sched.modes.empty() && mode == sched.modes[0]) {
      PlanT p = solve_mpc(sys, sched, x, cfg, &tube, cur.get(), dropped, r * dt);
      if (p.feasible) best = std::move(p);
    }
    try {
      HybridResult<Nx, Nu> res = hybrid_plan(sys, x, cfg, &tube, opt.hybrid, mode);
      if (!best || res.plan.cost < best->cost) {
        best = std::move(res.plan);
        from_search = true;
      }
    } catch (const NoFeasibleSequence&) {
    }
    if (!best) {
      PlanT empty;
      empty.cost = kInf;
      record_solve(t, empty, true, true);
      if (!fallback) log.degrade(t, "no feasible plan after contact");
      fallback = true;
      return;
    }
    adopt(t, record_solve(t, *best, from_search, true));
  };

  // Initial plan.
  if (opt.initial) {
    adopt(0.0, record_solve(0.0, opt.initial->plan, true, false));
  } else {
    try {
      const auto res = hybrid_plan(sys, x, cfg, &tube, opt.hybrid, mode);
      adopt(0.0, record_solve(0.0, res.plan, true, false));
    } catch (const NoFeasibleSequence&) {
      log.initial_failure = true;
      log.degrade(0.0, "no feasible initial plan");
      log.samples.push_back({0.0, mode, x, Input::Zero(), State::Zero()});
      return log;
    }
  }
  if (!cur->feasible) {
    log.initial_failure = true;
    log.degrade(0.0, "initial plan infeasible");
    log.samples.push_back({0.0, mode, x, Input::Zero(), State::Zero()});
    return log;
  }

  // Feedforward input at time t: the stored input of the node interval of cur
  // that contains t.
  auto feedforward = [&](double t) -> Input {
    const double e = t - t_plan;
    const auto& nt = cur->node_times;
    int k = 0;
    while (k + 1 < cur->N() && nt[k + 1] <= e + 1e-12) ++k;
    return cur->inputs[k];
  };
  auto nominal_mode = [&]() { return cur->schedule.modes[0]; };

  // Commits as soon as node 1 is the contact node.
  auto try_commit = [&](double t) {
    if (fallback || !sched.robust || sched.N() < 2 || sched.kind(1) != NodeKind::Contact) return false;
    const double first = (r - phase) * dt;
    window = Window{t + first, t + first + dt, sched.guards.front()};
    next_solve = window->t_end;
    return true;
  };

  State x_ref = x;  // nominal trajectory in lockstep with the plant
  bool period_clean = true;
  double t = 0.0;
  Input u_pd = Input::Zero();
  Input u_applied = Input::Zero();
  double next_pd = 0.0;

  // The correction is held between controller ticks; the feedforward follows the plan.
  auto update_pd = [&]() {
    if (pd.enabled) u_pd = (pd.gain * (x_ref - x)).cwiseMax(-cfg.input_budget).cwiseMin(cfg.input_budget);
  };
  auto compute_input = [&](double tt) {
    const auto& m = sys.mode(mode);
    u_applied = (feedforward(tt) + u_pd).cwiseMax(m.input_lo).cwiseMin(m.input_hi);
  };

  update_pd();
  compute_input(0.0);
  log.samples.push_back({0.0, mode, x, u_applied, wsig.at(0.0)});
  next_pd = pd.period;

  const double T = opt.T_sim;
  while (t < T - 1e-12) {
    double tb = std::min({T, detail::next_grid(t, opt.sample_period), detail::next_grid(t, dist.hold), next_solve});
    if (pd.enabled) tb = std::min(tb, next_pd);
    if (tb - t < 1e-12) tb = std::min(T, t + 1e-12);
    const State w = wsig.at(0.5 * (t + tb));
    const Input u = u_applied;
    FlowResult<Nx> fr;
    try {
      fr = flow_with_events(
          sys, mode, x, t, tb - t, opt.plant_step, [&u](double, const State&) -> const Input& { return u; },
          [&w](double, const State&) { return w; }, opt.integrator);
    } catch (const std::exception& e) {
      log.degrade(t, std::string("plant integration stopped: ") + e.what());
      log.aborted = true;
      break;
    }
    // Nominal reference follows the plan's mode with the feedforward only.
    if (!fr.event) {
      try {
        const Input uff = feedforward(t);
        x_ref = integrate(sys.mode(nominal_mode()), x_ref, 0.0, tb - t,
                          std::max(1, static_cast<int>(std::ceil((tb - t) / opt.plant_step - 1e-9))),
                          detail::ConstantInput<Nu>{uff}, detail::NoDisturbance{});
      } catch (const DivergenceError&) {
      }
    }
    x = fr.end_state;
    t = fr.event ? t + fr.elapsed : tb;

    if (fr.event) {
      const GuardId g = fr.event->guard_id;
      ImpactRecord<Nx> imp;
      imp.t = t;
      imp.guard = g;
      imp.pre = x;
      imp.guard_residual = std::abs(guard_value(sys.guard(g), x));
      x = apply_reset(sys, g, x, opt.integrator);
      mode = sys.guard(g).target_mode;
      imp.post = x;
      const bool planned = !sched.guards.empty() && sched.guards.front() == g && sched.modes[0] == sys.guard(g).source_mode;
      imp.planned = planned;
      if (planned) {
        // Contact node of the impacted domain in the plan that was executing.
        const ModeSchedule& cs = cur->schedule;
        if (!cs.guards.empty() && cs.guards.front() == g) {
          const int kc = cs.robust ? cs.last_node(0) - 1 : cs.last_node(0);
          imp.planned_contact_time = t_plan + cur->node_times[std::max(0, kc)];
          imp.containment = cur->feasible && cs.robust && !fallback;
        }
        const int cur_post = cs.n_segments() > 1 ? cs.first_node(1) : 1;
        sched = shift_schedule(sched, g);
        imp.purges = 1;
        log.impacts.push_back(imp);
        phase = 0;
        x_ref = x;
        period_clean = true;
        next_solve = t + dt;
        if (rates.hybrid_policy == HybridPolicy::OnContact) {
          contact_replan(t, cur_post);
        } else {
          solve_now(t, cur_post, true);
        }
      } else {
        log.impacts.push_back(imp);
        phase = 0;
        x_ref = x;
        period_clean = true;
        next_solve = t + dt;
        if (rates.hybrid_policy == HybridPolicy::OnContact) {
          contact_replan(t, 0);
        } else if (mode == sched.modes[0]) {
          solve_now(t, 0, true);
        } else {
          // The schedule no longer describes the plant; recover by searching.
          log.degrade(t, "unplanned mode change");
          window.reset();
          if (!hybrid_solve(t, true)) fallback = true;
        }
      }
      try_commit(t);
      update_pd();
      compute_input(t);
      next_pd = t + pd.period;
      continue;
    }

    if (pd.enabled && std::abs(t - next_pd) <= 1e-12) {
      next_pd = t + pd.period;
      update_pd();
    }

    if (std::abs(t - next_solve) <= 1e-12) {
      // Tube premise: deviation from the nominal prediction over one period.
      if (period_clean && !window && !fallback) {
        const double dev = (x - x_ref).norm();
        ++log.tube.checked;
        const double ratio = diam > 0 ? dev / diam : (dev > 1e-9 ? kInf : 0.0);
        log.tube.max_ratio = std::max(log.tube.max_ratio, ratio);
        if (dev > diam * (1 + 1e-6) + 1e-9) ++log.tube.violations;
      }
      period_clean = true;
      if (window) {
        ++log.missed_contacts;
        log.degrade(t, "planned guard not reached within the pass-through window");
        window.reset();
        if (!hybrid_solve(t, false)) fallback = true;
      } else {
        ++phase;
        next_solve = t + dt;
        if (phase >= r) {
          if (sched.robust && sched.kind(1) == NodeKind::Contact && !fallback) {
            // Contact node due now: open the pass-through window.
            window = Window{t, t + dt, sched.guards.front()};
            next_solve = window->t_end;
          } else {
            sched = shift_schedule(sched);
            ++shifts_since_cur;
            phase = 0;
          }
        }
        if (!window && !try_commit(t)) {
          // Warm start from cur, shifted by the drops since it was solved.
          solve_now(t, shifts_since_cur, false);
          try_commit(t);
        }
      }
      x_ref = x;
      update_pd();
    }

    compute_input(t);
    if (detail::on_grid(t, opt.sample_period) || std::abs(t - T) <= 1e-12)
      log.samples.push_back({t, mode, x, u_applied, wsig.at(t)});
  }
  log.t_end = t;
  return log;
}

/// Stable iff no degradation and every logged position in the final window
/// lies within tol_pos of the equilibrium.
template <int Nx, int Nu>
bool classify_stability(const HybridSystem<Nx, Nu>& sys, const SimLog<Nx, Nu>& log, double tol_pos, double window) {
  if (log.degraded || log.samples.empty()) return false;
  const double t_last = log.samples.back().t;
  for (const auto& s : log.samples) {
    if (s.t < t_last - window - 1e-12) continue;
    double d2 = 0.0;
    for (int i : sys.position_indices) d2 += std::pow(s.x(i) - sys.equilibrium(i), 2);
    if (std::sqrt(d2) > tol_pos) return false;
  }
  return true;
}

template <int Nx, int Nu>
double final_distance(const HybridSystem<Nx, Nu>& sys, const SimLog<Nx, Nu>& log) {
  if (log.samples.empty()) return kInf;
  double d2 = 0.0;
  for (int i : sys.position_indices) d2 += std::pow(log.samples.back().x(i) - sys.equilibrium(i), 2);
  return std::sqrt(d2);
}

/// Smallest distance to an outgoing guard of the current mode over the log
/// samples (negative if a sample lies past a guard).
template <int Nx, int Nu>
double min_guard_clearance(const HybridSystem<Nx, Nu>& sys, const SimLog<Nx, Nu>& log) {
  double best = kInf;
  for (const auto& s : log.samples)
    for (GuardId g : sys.outgoing(s.mode)) best = std::min(best, -guard_value(sys.guard(g), s.x));
  return best;
}

/// One controller configuration of a Monte Carlo experiment.
template <int Nx, int Nu>
struct Experiment {
  std::string name;
  const HybridSystem<Nx, Nu>* sys = nullptr;
  Eigen::Matrix<double, Nx, 1> x0 = Eigen::Matrix<double, Nx, 1>::Zero();
  MpcConfig<Nx, Nu> cfg;
  LayerRates rates;
  DisturbanceModel dist;  ///< seed is replaced per realization
  LowLevelPd<Nx, Nu> pd;
  TubeModel tube;
  SimOptions<Nx, Nu> opt;
  double tol_pos = 0.05;
  double window = 1.0;
};

struct McRow {
  std::string config;
  std::uint64_t seed = 0;
  bool stable = false;
  double final_distance = 0.0;
  double min_clearance = 0.0;
};

/// Seed of realization i; shared by every configuration.
inline std::uint64_t realization_seed(std::uint64_t base, int i) { return base + static_cast<std::uint64_t>(i); }

/// Runs every configuration on the same n disturbance realizations. The
/// initial sequence search of each configuration is done once and reused.
/// `on_run` (optional) receives each finished log.
template <int Nx, int Nu, class OnRun>
std::vector<McRow> monte_carlo(const std::vector<Experiment<Nx, Nu>>& configs, int n, std::uint64_t base_seed,
                               OnRun&& on_run) {
  if (n < 0) throw std::invalid_argument("monte_carlo: n must be >= 0");
  std::vector<McRow> rows;
  if (n == 0) return rows;
  for (const auto& e : configs) {
    if (!e.sys) throw std::invalid_argument("monte_carlo: experiment without a system");
    SimOptions<Nx, Nu> opt = e.opt;
    MpcConfig<Nx, Nu> cfg = e.cfg;
    cfg.dt = e.rates.mpc_period;
    if (!opt.initial) {
      try {
        opt.initial = std::make_shared<const HybridResult<Nx, Nu>>(initial_plan(*e.sys, e.x0, cfg, e.tube, opt.hybrid));
      } catch (const NoFeasibleSequence&) {
      }
    }
    for (int i = 0; i < n; ++i) {
      DisturbanceModel d = e.dist;
      d.seed = realization_seed(base_seed, i);
      const SimLog<Nx, Nu> log = run_closed_loop(*e.sys, e.x0, cfg, e.rates, d, e.pd, e.tube, opt);
      McRow row;
      row.config = e.name;
      row.seed = d.seed;
      row.stable = classify_stability(*e.sys, log, e.tol_pos, e.window);
      row.final_distance = final_distance(*e.sys, log);
      row.min_clearance = min_guard_clearance(*e.sys, log);
      rows.push_back(row);
      on_run(e, log, row);
    }
  }
  return rows;
}

template <int Nx, int Nu>
std::vector<McRow> monte_carlo(const std::vector<Experiment<Nx, Nu>>& configs, int n, std::uint64_t base_seed) {
  return monte_carlo(configs, n, base_seed, [](const auto&, const auto&, const auto&) {});
}

}  // namespace lmpc
