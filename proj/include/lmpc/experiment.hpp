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
 * @file experiment.hpp
 * @brief Ball experiment configuration, presets, and CSV/manifest output.
 *
 * RunConfig collects every tunable of a closed-loop ball experiment. Each
 * field is registered under a "section.key" name so configs can be read from
 * files, overridden from the command line, dumped canonically and hashed.
 */
#pragma once

#include "lmpc/ball_model.hpp"
#include "lmpc/config.hpp"
#include "lmpc/csv.hpp"
#include "lmpc/sim_loop.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace lmpc::ball {

struct RunConfig {
  // [experiment]
  std::string name = "ball";
  double t_sim = 6.0;
  double sample_period = 0.01;
  std::vector<double> x0{1.5, 1.0, 1.0, 0.0};
  std::uint64_t seed = 1;
  double tol_pos = 0.05;
  double stable_window = 1.0;

  // [ball]
  BallParams ball;

  // [mpc]
  int N = 16;
  double dt_d = 0.1;
  std::vector<double> q{10.0, 10.0, 1.0, 1.0};
  std::vector<double> r{1e-3, 1e-3};
  double eps_strict = 1e-6;
  double feas_tol = 1e-6;
  double input_budget = 0.0;
  int substeps = 10;
  int max_outer = 30;
  int max_inner = 200;

  // [terminal]
  double terminal_inflation = 2.0;
  double terminal_c_init = 1e4;
  int terminal_samples = 2000;
  std::uint64_t terminal_seed = 1;

  // [rates]
  double mpc_period = 0.1;
  HybridPolicy policy = HybridPolicy::Never;
  int every_k = 1;

  // [hybrid]
  HybridStrategy strategy = HybridStrategy::Enumerate;
  int max_transitions = 2;
  int dwell_min = 3;
  int dwell_max = 5;
  int dwell_stride = 2;
  int final_min = 2;
  int refine_top = 0;
  int cem_population = 12;
  double cem_elite_frac = 0.25;
  int cem_iterations = 4;
  std::uint64_t cem_seed = 1;

  // [disturbance]
  double eta = 0.0;
  double hold = 0.02;

  // [pd]
  bool pd = false;
  double kp = 100.0;
  double kd = 20.0;
  double pd_period = 1e-3;

  // [tube]
  bool tube = true;
  double L_x = 2.0;
  double L_u = 1.0;
  double zeta = 0.0;
  bool eiss = false;
  double k1 = 1.0;
  double k2 = 1.0;
  double k3 = 1.0;
  double sigma_eta = 0.0;
  double roa_radius = 0.0;
  double t_end = 1.0;
  int n_points = 101;
};

inline std::string to_string(HybridPolicy p) {
  switch (p) {
    case HybridPolicy::Never: return "never";
    case HybridPolicy::OnContact: return "on_contact";
    case HybridPolicy::EveryK: return "every_k";
  }
  return "never";
}

inline HybridPolicy parse_policy(const std::string& key, const std::string& v) {
  const std::string s = detail::trim(v);
  if (s == "never") return HybridPolicy::Never;
  if (s == "on_contact") return HybridPolicy::OnContact;
  if (s == "every_k") return HybridPolicy::EveryK;
  throw ConfigError(key + ": expected never, on_contact or every_k, got '" + v + "'");
}

inline std::string to_string(HybridStrategy s) { return s == HybridStrategy::Cem ? "cem" : "enumerate"; }

inline HybridStrategy parse_strategy(const std::string& key, const std::string& v) {
  const std::string s = detail::trim(v);
  if (s == "enumerate") return HybridStrategy::Enumerate;
  if (s == "cem") return HybridStrategy::Cem;
  throw ConfigError(key + ": expected enumerate or cem, got '" + v + "'");
}

namespace detail {

template <class T>
void add_double(ConfigRegistry<RunConfig>& reg, const std::string& key, const std::string& help, T member) {
  reg.add(
      key, help, [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
      [member, key](RunConfig& c, const std::string& v) { member(c) = parse_double(key, v); });
}

template <class T>
void add_int(ConfigRegistry<RunConfig>& reg, const std::string& key, const std::string& help, T member) {
  reg.add(
      key, help, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
      [member, key](RunConfig& c, const std::string& v) {
        const long long x = parse_int(key, v);
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
          throw ConfigError(key + ": integer out of range");
        member(c) = static_cast<int>(x);
      });
}

template <class T>
void add_uint(ConfigRegistry<RunConfig>& reg, const std::string& key, const std::string& help, T member) {
  reg.add(
      key, help, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
      [member, key](RunConfig& c, const std::string& v) { member(c) = parse_uint(key, v); });
}

template <class T>
void add_bool(ConfigRegistry<RunConfig>& reg, const std::string& key, const std::string& help, T member) {
  reg.add(
      key, help, [member](const RunConfig& c) { return format_bool(member(const_cast<RunConfig&>(c))); },
      [member, key](RunConfig& c, const std::string& v) { member(c) = parse_bool(key, v); });
}

template <class T>
void add_list(ConfigRegistry<RunConfig>& reg, const std::string& key, const std::string& help, std::size_t n,
              T member) {
  reg.add(
      key, help, [member](const RunConfig& c) { return format_list(member(const_cast<RunConfig&>(c))); },
      [member, key, n](RunConfig& c, const std::string& v) {
        auto l = parse_list(key, v);
        if (l.size() != n) throw ConfigError(key + ": expected " + std::to_string(n) + " values");
        member(c) = std::move(l);
      });
}

}  // namespace detail

#define LMPC_M(expr) [](RunConfig & c) -> auto& { return c.expr; }

/// Every configurable key, in canonical order.
inline const ConfigRegistry<RunConfig>& run_config_registry() {
  static const ConfigRegistry<RunConfig> reg = [] {
    ConfigRegistry<RunConfig> r;
    using namespace detail;
    r.add(
        "experiment.name", "label used in summaries", [](const RunConfig& c) { return c.name; },
        [](RunConfig& c, const std::string& v) {
          if (v.empty() || v.find_first_of(",\"\n") != std::string::npos)
            throw ConfigError("experiment.name: must be non-empty without commas or quotes");
          c.name = v;
        });
    add_double(r, "experiment.t_sim", "simulated time (s)", LMPC_M(t_sim));
    add_double(r, "experiment.sample_period", "log sample period (s)", LMPC_M(sample_period));
    add_list(r, "experiment.x0", "initial state [x, y, vx, vy]", 4, LMPC_M(x0));
    add_uint(r, "experiment.seed", "first disturbance realization seed", LMPC_M(seed));
    add_double(r, "experiment.tol_pos", "stability radius around the circle center", LMPC_M(tol_pos));
    add_double(r, "experiment.stable_window", "final window checked for stability (s)", LMPC_M(stable_window));

    add_double(r, "ball.m", "mass", LMPC_M(ball.m));
    add_double(r, "ball.gamma_drag", "drag coefficient (magnitude is used)", LMPC_M(ball.gamma_drag));
    add_double(r, "ball.g", "vertical acceleration outside the circle", LMPC_M(ball.g));
    add_double(r, "ball.circle_x", "circle center x", LMPC_M(ball.circle_center.x()));
    add_double(r, "ball.circle_y", "circle center y", LMPC_M(ball.circle_center.y()));
    add_double(r, "ball.circle_radius", "circle radius", LMPC_M(ball.circle_radius));
    add_double(r, "ball.input_lo", "lower input bound per axis", LMPC_M(ball.input_lo));
    add_double(r, "ball.input_hi", "upper input bound per axis", LMPC_M(ball.input_hi));
    add_double(r, "ball.softmin_width", "smoothing of the outside thrust clamp (0 = exact)", LMPC_M(ball.softmin_width));

    add_int(r, "mpc.N", "horizon nodes", LMPC_M(N));
    add_double(r, "mpc.dt_d", "node interval (s)", LMPC_M(dt_d));
    add_list(r, "mpc.q", "state weight diagonal", 4, LMPC_M(q));
    add_list(r, "mpc.r", "input weight diagonal", 2, LMPC_M(r));
    add_double(r, "mpc.eps_strict", "slack turning strict guard avoidance into <=", LMPC_M(eps_strict));
    add_double(r, "mpc.feas_tol", "violation accepted as feasible", LMPC_M(feas_tol));
    add_double(r, "mpc.input_budget", "per-channel input reserved for the low-level controller", LMPC_M(input_budget));
    add_int(r, "mpc.substeps", "RK4 substeps per node interval", LMPC_M(substeps));
    add_int(r, "mpc.max_outer", "augmented Lagrangian outer iterations", LMPC_M(max_outer));
    add_int(r, "mpc.max_inner", "inner iterations per outer iteration", LMPC_M(max_inner));

    add_double(r, "terminal.inflation", "factor applied to the Riccati matrix", LMPC_M(terminal_inflation));
    add_double(r, "terminal.c_init", "first terminal level tried", LMPC_M(terminal_c_init));
    add_int(r, "terminal.samples", "samples per terminal level check", LMPC_M(terminal_samples));
    add_uint(r, "terminal.seed", "terminal sampling seed", LMPC_M(terminal_seed));

    add_double(r, "rates.mpc_period", "MPC recompute period (s); dt_d must be a multiple", LMPC_M(mpc_period));
    r.add(
        "rates.hybrid_policy", "never | on_contact | every_k", [](const RunConfig& c) { return to_string(c.policy); },
        [](RunConfig& c, const std::string& v) { c.policy = parse_policy("rates.hybrid_policy", v); });
    add_int(r, "rates.every_k", "solves between sequence searches for every_k", LMPC_M(every_k));

    r.add(
        "hybrid.strategy", "enumerate | cem", [](const RunConfig& c) { return to_string(c.strategy); },
        [](RunConfig& c, const std::string& v) { c.strategy = parse_strategy("hybrid.strategy", v); });
    add_int(r, "hybrid.max_transitions", "largest number of guards in a sequence", LMPC_M(max_transitions));
    add_int(r, "hybrid.dwell_min", "smallest dwell (nodes) in a non-final domain", LMPC_M(dwell_min));
    add_int(r, "hybrid.dwell_max", "largest dwell (nodes) in a non-final domain", LMPC_M(dwell_max));
    add_int(r, "hybrid.dwell_stride", "dwell grid step", LMPC_M(dwell_stride));
    add_int(r, "hybrid.final_min", "smallest final-domain dwell", LMPC_M(final_min));
    add_int(r, "hybrid.refine_top", "enumeration: refine only the best screened candidates (0 = all)", LMPC_M(refine_top));
    add_int(r, "hybrid.cem_population", "CEM samples per iteration", LMPC_M(cem_population));
    add_double(r, "hybrid.cem_elite_frac", "CEM elite fraction", LMPC_M(cem_elite_frac));
    add_int(r, "hybrid.cem_iterations", "CEM iterations", LMPC_M(cem_iterations));
    add_uint(r, "hybrid.cem_seed", "CEM sampling seed", LMPC_M(cem_seed));

    add_double(r, "disturbance.eta", "disturbance norm bound on the velocity channels", LMPC_M(eta));
    add_double(r, "disturbance.hold", "disturbance hold time (s)", LMPC_M(hold));

    add_bool(r, "pd.enabled", "low-level PD tracking controller", LMPC_M(pd));
    add_double(r, "pd.kp", "position gain", LMPC_M(kp));
    add_double(r, "pd.kd", "velocity gain", LMPC_M(kd));
    add_double(r, "pd.period", "controller tick (s)", LMPC_M(pd_period));

    add_bool(r, "tube.enabled", "tighten constraints with the tube (off = zero tube)", LMPC_M(tube));
    add_double(r, "tube.L_x", "state Lipschitz constant of the vector field", LMPC_M(L_x));
    add_double(r, "tube.L_u", "input Lipschitz constant of the vector field", LMPC_M(L_u));
    add_double(r, "tube.zeta", "bound on the low-level controller input", LMPC_M(zeta));
    add_bool(r, "tube.eiss", "use the E-ISS certificate below", LMPC_M(eiss));
    add_double(r, "tube.k1", "E-ISS lower bound constant", LMPC_M(k1));
    add_double(r, "tube.k2", "E-ISS upper bound constant", LMPC_M(k2));
    add_double(r, "tube.k3", "E-ISS decrease constant", LMPC_M(k3));
    add_double(r, "tube.sigma_eta", "E-ISS gain evaluated at eta", LMPC_M(sigma_eta));
    add_double(r, "tube.roa_radius", "region of attraction radius of the tracking error", LMPC_M(roa_radius));
    add_double(r, "tube.t_end", "tube table end time (s)", LMPC_M(t_end));
    add_int(r, "tube.n_points", "tube table rows", LMPC_M(n_points));
    return r;
  }();
  return reg;
}

#undef LMPC_M

inline std::string canonical_dump(const RunConfig& c) { return run_config_registry().dump(c); }
inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(canonical_dump(c)); }

inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& why) {
    if (!ok) throw ConfigError(why);
  };
  need(c.t_sim > 0, "experiment.t_sim must be positive");
  need(c.sample_period > 0, "experiment.sample_period must be positive");
  need(c.tol_pos > 0 && c.stable_window >= 0, "experiment.tol_pos must be positive and stable_window >= 0");
  need(c.N >= 2, "mpc.N must be >= 2");
  need(c.dt_d > 0 && c.mpc_period > 0, "mpc.dt_d and rates.mpc_period must be positive");
  need(c.mpc_period <= c.dt_d + 1e-12, "rates.mpc_period must not exceed mpc.dt_d");
  need(c.substeps >= 1 && c.max_outer >= 1 && c.max_inner >= 1, "mpc iteration counts must be >= 1");
  for (double v : c.q) need(v >= 0, "mpc.q must be non-negative");
  for (double v : c.r) need(v > 0, "mpc.r must be positive");
  need(c.input_budget >= 0, "mpc.input_budget must be >= 0");
  need(c.terminal_inflation >= 1, "terminal.inflation must be >= 1");
  need(c.terminal_c_init > 0 && c.terminal_samples >= 1, "terminal.c_init and samples must be positive");
  need(c.every_k >= 1, "rates.every_k must be >= 1");
  need(c.max_transitions >= 0, "hybrid.max_transitions must be >= 0");
  need(c.dwell_min >= 1 && c.dwell_max >= c.dwell_min && c.dwell_stride >= 1,
       "hybrid dwell grid needs 1 <= dwell_min <= dwell_max and stride >= 1");
  need(c.final_min >= 1, "hybrid.final_min must be >= 1");
  need(c.refine_top >= 0, "hybrid.refine_top must be >= 0");
  need(c.eta >= 0 && c.hold > 0, "disturbance.eta must be >= 0 and hold positive");
  need(c.pd_period > 0, "pd.period must be positive");
  need(c.L_x >= 0 && c.L_u >= 0 && c.zeta >= 0, "tube constants must be non-negative");
  need(c.t_end > 0 && c.n_points >= 2, "tube.t_end must be positive and n_points >= 2");
  try {
    c.ball.validate();
    period_ratio(c.dt_d, c.mpc_period);
    CemConfig cem;
    cem.population = c.cem_population;
    cem.elite_frac = c.cem_elite_frac;
    cem.iterations = c.cem_iterations;
    cem.validate();
    if (c.eiss) validate(EissParams{c.k1, c.k2, c.k3, c.sigma_eta, c.roa_radius});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Applies a config file (optional) and then the overrides, in order, on top
/// of `base`.
inline RunConfig load_run_config(const std::string& path, const std::vector<ConfigEntry>& overrides,
                                 RunConfig c = RunConfig{}) {
  const auto& reg = run_config_registry();
  if (!path.empty()) reg.apply(c, load_config_file(path));
  reg.apply(c, overrides);
  validate(c);
  return c;
}

inline State initial_state(const RunConfig& c) { return State(c.x0[0], c.x0[1], c.x0[2], c.x0[3]); }

inline TubeModel make_tube(const RunConfig& c) {
  std::optional<EissParams> e;
  if (c.eiss) e = EissParams{c.k1, c.k2, c.k3, c.sigma_eta, c.roa_radius};
  if (!c.tube) return TubeModel(TubeParams{c.L_x, c.L_u, 0.0, 0.0});
  try {
    return TubeModel(TubeParams{c.L_x, c.L_u, c.eta, c.pd ? c.zeta : 0.0}, e);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
}

inline HybridConfig make_hybrid(const RunConfig& c) {
  HybridConfig h;
  h.max_transitions = c.max_transitions;
  h.dwell_min = c.dwell_min;
  h.dwell_max = c.dwell_max;
  h.dwell_stride = c.dwell_stride;
  h.final_min = c.final_min;
  h.strategy = c.strategy;
  h.refine_top = c.refine_top;
  h.cem.population = c.cem_population;
  h.cem.elite_frac = c.cem_elite_frac;
  h.cem.iterations = c.cem_iterations;
  h.cem.seed = c.cem_seed;
  return h;
}

/// Everything needed to simulate one configuration. Owns the system so the
/// Experiment's pointer stays valid.
struct BuiltRun {
  RunConfig config;
  std::shared_ptr<const System> sys;
  Experiment<4, 2> experiment;
};

inline MpcConfig<4, 2> make_mpc_config(const RunConfig& c, const System& sys) {
  MpcConfig<4, 2> m;
  m.N = c.N;
  m.dt_d = c.dt_d;
  m.dt = c.mpc_period;
  m.Q = Eigen::Vector4d(c.q[0], c.q[1], c.q[2], c.q[3]).asDiagonal();
  m.R = Eigen::Vector2d(c.r[0], c.r[1]).asDiagonal();
  m.eps_strict = c.eps_strict;
  m.feas_tol = c.feas_tol;
  m.input_budget = Input::Constant(c.pd ? c.input_budget : 0.0);
  m.integrator.substeps = c.substeps;
  m.solver.max_outer = c.max_outer;
  m.solver.max_inner = c.max_inner;
  // Floor and wall are coordinate planes; the circle guard is a distance.
  m.guard_lipschitz = {1.0, 1.0, 1.0};
  TerminalSearch ts;
  ts.c_init = c.terminal_c_init;
  ts.samples = c.terminal_samples;
  ts.seed = c.terminal_seed;
  ts.inflation = c.terminal_inflation;
  m.terminal = make_terminal(sys, m, ts);
  return m;
}

inline BuiltRun build_run(const RunConfig& c) {
  validate(c);
  BuiltRun b;
  b.config = c;
  b.sys = std::make_shared<const System>(ball_system(c.ball));
  auto& e = b.experiment;
  e.name = c.name;
  e.sys = b.sys.get();
  e.x0 = initial_state(c);
  const auto loc = b.sys->locate(e.x0);
  if (!loc) throw ConfigError("experiment.x0 lies outside every domain");
  try {
    e.cfg = make_mpc_config(c, *b.sys);
  } catch (const std::runtime_error& ex) {
    throw ConfigError(std::string("terminal ingredients: ") + ex.what());
  }
  e.rates.mpc_period = c.mpc_period;
  e.rates.hybrid_policy = c.policy;
  e.rates.every_k = c.every_k;
  e.dist.eta = c.eta;
  e.dist.hold = c.hold;
  e.dist.seed = c.seed;
  e.dist.channels = {2, 3};
  e.pd.enabled = c.pd;
  e.pd.gain = pd_gain<4, 2>(b.sys->position_indices, c.kp, c.kd);
  e.pd.period = c.pd_period;
  e.tube = make_tube(c);
  e.opt.T_sim = c.t_sim;
  e.opt.sample_period = c.sample_period;
  e.opt.hybrid = make_hybrid(c);
  e.opt.integrator.substeps = c.substeps;
  e.tol_pos = c.tol_pos;
  e.window = c.stable_window;
  return b;
}

/// The three controllers compared in the disturbance experiment: A slow
/// without sequence re-planning, B twice as fast, C slow with re-planning at
/// every contact. Everything else is shared.
inline std::vector<RunConfig> figure3_configs(const RunConfig& base) {
  RunConfig a = base, b = base, c = base;
  a.name = "A";
  a.policy = HybridPolicy::Never;
  b.name = "B";
  b.mpc_period = a.mpc_period / 2;
  b.policy = HybridPolicy::Never;
  c.name = "C";
  c.policy = HybridPolicy::OnContact;
  return {a, b, c};
}

/// Defaults of the disturbance experiment.
inline RunConfig figure3_base() {
  RunConfig c;
  c.name = "fig3";
  c.eta = 2.0;
  return c;
}

// ---------------------------------------------------------------- output

inline void write_trajectory_csv(const std::string& path, const SimLog<4, 2>& log) {
  CsvWriter w(path, {"t", "mode", "x", "y", "vx", "vy", "ux", "uy", "wx", "wy", "wvx", "wvy"});
  for (const auto& s : log.samples) {
    w.field(s.t).field(s.mode);
    for (int i = 0; i < 4; ++i) w.field(s.x(i));
    for (int i = 0; i < 2; ++i) w.field(s.u(i));
    for (int i = 0; i < 4; ++i) w.field(s.w(i));
    w.end_row();
  }
}

inline void write_events_csv(const std::string& path, const SimLog<4, 2>& log) {
  CsvWriter w(path, {"t", "guard", "planned", "planned_contact_t", "pre_x", "pre_y", "pre_vx", "pre_vy", "post_x",
                     "post_y", "post_vx", "post_vy", "guard_residual"});
  for (const auto& e : log.impacts) {
    w.field(e.t).field(e.guard).field(e.planned ? 1 : 0).field(e.planned_contact_time);
    for (int i = 0; i < 4; ++i) w.field(e.pre(i));
    for (int i = 0; i < 4; ++i) w.field(e.post(i));
    w.field(e.guard_residual);
    w.end_row();
  }
}

inline void write_solves_csv(const std::string& path, const SimLog<4, 2>& log) {
  CsvWriter w(path, {"t", "feasible", "hybrid", "after_impact", "in_terminal", "cost"});
  for (const auto& s : log.solves)
    w.field(s.t).field(s.feasible ? 1 : 0).field(s.hybrid ? 1 : 0).field(s.after_impact ? 1 : 0)
        .field(s.in_terminal ? 1 : 0).field(s.cost), w.end_row();
}

inline void write_plan_csv(const std::string& path, const System& sys, const Plan<4, 2>& plan) {
  std::vector<std::string> hdr{"node", "t", "mode", "kind", "x", "y", "vx", "vy", "ux", "uy"};
  for (const auto& g : sys.guards) hdr.push_back("h_" + g.name);
  CsvWriter w(path, hdr);
  for (int k = 0; k <= plan.N(); ++k) {
    const NodeKind kind = plan.schedule.kind(k);
    w.field(k).field(plan.node_times[k]).field(plan.schedule.modes[k]);
    w.field(std::string(kind == NodeKind::Contact ? "contact" : kind == NodeKind::Virtual ? "virtual" : "regular"));
    for (int i = 0; i < 4; ++i) w.field(plan.states[k](i));
    if (k < plan.N()) {
      w.field(plan.inputs[k](0)).field(plan.inputs[k](1));
    } else {
      w.empty().empty();
    }
    for (const auto& g : sys.guards) w.field(guard_value(g, plan.states[k]));
    w.end_row();
  }
}

inline void write_tube_csv(const std::string& path, const RunConfig& c) {
  const TubeParams tp{c.L_x, c.L_u, c.eta, c.pd ? c.zeta : 0.0};
  std::optional<EissParams> e;
  if (c.eiss) e = EissParams{c.k1, c.k2, c.k3, c.sigma_eta, c.roa_radius};
  TubeModel m;
  try {
    m = TubeModel(tp, e);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  CsvWriter w(path, {"t", "trivial_diam", "eiss_diam", "combined_diam", "tau"});
  for (int i = 0; i < c.n_points; ++i) {
    const double t = c.t_end * i / (c.n_points - 1);
    w.field(t).field(trivial_diam(tp, t));
    if (e)
      w.field(eiss_diam(*e, t));
    else
      w.empty();
    w.field(m.diam(t));
    if (e)
      w.field(m.tau());
    else
      w.empty();
    w.end_row();
  }
}

inline void write_summary_csv(const std::string& path, const std::vector<McRow>& rows) {
  CsvWriter w(path, {"config", "seed", "verdict", "final_distance", "min_guard_clearance"});
  for (const auto& r : rows)
    w.field(r.config).field(static_cast<unsigned long long>(r.seed)).field(std::string(r.stable ? "stable" : "unstable"))
        .field(r.final_distance).field(r.min_clearance), w.end_row();
}

/// Plain-text key = value manifest.
inline void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv,
                           const std::vector<RunConfig>& configs) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
  for (const auto& c : configs) {
    f << "config." << c.name << ".hash = " << config_hash(c) << "\n";
    std::istringstream lines(canonical_dump(c));
    std::string line;
    while (std::getline(lines, line)) f << "config." << c.name << "." << line << "\n";
  }
}

}  // namespace lmpc::ball
