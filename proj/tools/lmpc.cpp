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

// lmpc: command-line driver for the ball benchmark.
//
//   lmpc simulate   one closed-loop run           exit 0 stable, 2 unstable
//   lmpc montecarlo shared-seed disturbance runs  exit 0 all stable, 2 otherwise
//   lmpc tube       tube diameter table           exit 0
//   lmpc plan       hybrid plan from x0           exit 0 found, 2 none found
//
// Any configuration or usage error exits with 1.

#include "lmpc/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lmpc;
using ball::RunConfig;

namespace {

constexpr int kExitStable = 0;
constexpr int kExitConfig = 1;
constexpr int kExitUnstable = 2;

struct CommonOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> eta;
  std::optional<std::string> pd;
  std::optional<std::string> x0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "configuration file ([section] key = value)");
  cmd->add_option("--preset", o.preset, "built-in preset applied before the file")->check(CLI::IsMember({"fig3"}));
  cmd->add_option("--out", o.out, "output directory (default: $LMPC_OUT_DIR or ./lmpc_out)");
  cmd->add_option("--set", o.sets, "override section.key=value (repeatable, applied in order)");
  cmd->add_option("--seed", o.seed, "experiment.seed");
  cmd->add_option("--eta", o.eta, "disturbance.eta");
  cmd->add_option("--pd", o.pd, "pd.enabled")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--x0", o.x0, "experiment.x0 as x,y,vx,vy");
}

/// preset, then file, then --set in order, then the dedicated flags.
RunConfig resolve(const CommonOptions& o) {
  RunConfig base = o.preset == "fig3" ? ball::figure3_base() : RunConfig{};
  std::vector<ConfigEntry> overrides;
  for (const auto& s : o.sets) overrides.push_back(parse_override(s));
  if (o.seed) overrides.push_back({"experiment.seed", std::to_string(*o.seed), 0});
  if (o.eta) overrides.push_back({"disturbance.eta", format_double(*o.eta), 0});
  if (o.pd) overrides.push_back({"pd.enabled", *o.pd, 0});
  if (o.x0) overrides.push_back({"experiment.x0", *o.x0, 0});
  return ball::load_run_config(o.config, overrides, base);
}

std::string out_dir(const CommonOptions& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("LMPC_OUT_DIR"); env && *env) return env;
  return "lmpc_out";
}

std::string prepare_out(const CommonOptions& o) {
  const std::string dir = out_dir(o);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

using Kv = std::vector<std::pair<std::string, std::string>>;

Kv manifest_head(const std::string& command, const CommonOptions& o) {
  return {{"tool", "lmpc"},
          {"command", command},
          {"preset", o.preset.empty() ? "none" : o.preset},
          {"config_file", o.config.empty() ? "none" : o.config}};
}

std::string guard_list(const ball::System& sys, const std::vector<GuardId>& gs) {
  std::string s = "[";
  for (std::size_t i = 0; i < gs.size(); ++i) s += (i ? ", " : "") + sys.guard(gs[i]).name;
  return s + "]";
}

std::string defaults_footer() {
  std::ostringstream os;
  os << "Configuration keys (section.key = default):\n";
  const RunConfig d;
  for (const auto& f : ball::run_config_registry().fields())
    os << "  " << f.key << " = " << f.get(d) << "\n      " << f.help << "\n";
  const RunConfig fig3 = ball::figure3_base();
  os << "\nPreset fig3 changes:";
  const auto& reg = ball::run_config_registry();
  for (const auto& f : reg.fields())
    if (f.get(fig3) != f.get(d)) os << " " << f.key << "=" << f.get(fig3);
  os << "\n  and runs configs A (rates as set), B (half the MPC period), C (re-plan the sequence on every contact).\n";
  os << "\nEnvironment: LMPC_OUT_DIR sets the default output directory.\n";
  os << "Exit codes: 0 stable / success, 2 unstable / no plan, 1 configuration or usage error.\n";
  return os.str();
}

int cmd_simulate(const CommonOptions& o) {
  const RunConfig c = resolve(o);
  const auto built = ball::build_run(c);
  const std::string dir = prepare_out(o);
  const auto& e = built.experiment;
  DisturbanceModel d = e.dist;
  const auto log = run_closed_loop(*e.sys, e.x0, e.cfg, e.rates, d, e.pd, e.tube, e.opt);
  const bool stable = classify_stability(*e.sys, log, e.tol_pos, e.window);
  ball::write_trajectory_csv(dir + "/trajectory.csv", log);
  ball::write_events_csv(dir + "/events.csv", log);
  ball::write_solves_csv(dir + "/solves.csv", log);
  auto kv = manifest_head("simulate", o);
  kv.push_back({"verdict", stable ? "stable" : "unstable"});
  kv.push_back({"final_distance", format_double(final_distance(*e.sys, log))});
  kv.push_back({"impacts", std::to_string(log.impacts.size())});
  kv.push_back({"solves", std::to_string(log.solves.size())});
  for (std::size_t i = 0; i < log.notes.size(); ++i) kv.push_back({"note." + std::to_string(i), log.notes[i]});
  ball::write_manifest(dir + "/manifest.txt", kv, {c});
  std::cout << "verdict: " << (stable ? "stable" : "unstable") << "\n"
            << "final distance: " << format_double(final_distance(*e.sys, log)) << "\n"
            << "impacts: " << log.impacts.size() << ", solves: " << log.solves.size() << "\n";
  for (const auto& n : log.notes) std::cout << "note: " << n << "\n";
  std::cout << "output: " << dir << "\n";
  return stable ? kExitStable : kExitUnstable;
}

int cmd_montecarlo(const CommonOptions& o, int n, bool write_runs) {
  if (n < 0) throw ConfigError("--n must be >= 0");
  const RunConfig base = resolve(o);
  const std::vector<RunConfig> cfgs = o.preset == "fig3" ? ball::figure3_configs(base) : std::vector<RunConfig>{base};
  std::vector<ball::BuiltRun> built;
  for (const auto& c : cfgs) built.push_back(ball::build_run(c));
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (cfgs[i].name == cfgs[j].name) throw ConfigError("duplicate config name '" + cfgs[i].name + "'");
  std::vector<Experiment<4, 2>> exps;
  for (const auto& b : built) exps.push_back(b.experiment);
  const std::string dir = prepare_out(o);
  if (write_runs) fs::create_directories(dir + "/runs");

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = monte_carlo(exps, n, base.seed, [&](const auto& e, const auto& log, const McRow& row) {
    std::cout << e.name << " seed " << row.seed << ": " << (row.stable ? "stable" : "unstable")
              << " (final distance " << format_double(row.final_distance) << ")" << std::endl;
    if (write_runs) {
      const std::string stem = dir + "/runs/" + e.name + "_" + std::to_string(row.seed);
      ball::write_trajectory_csv(stem + "_trajectory.csv", log);
      ball::write_events_csv(stem + "_events.csv", log);
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ball::write_summary_csv(dir + "/summary.csv", rows);

  auto kv = manifest_head("montecarlo", o);
  kv.push_back({"n", std::to_string(n)});
  kv.push_back({"base_seed", std::to_string(base.seed)});
  bool all = true;
  for (const auto& c : cfgs) {
    int s = 0;
    for (const auto& r : rows) s += (r.config == c.name && r.stable);
    kv.push_back({"stable." + c.name, std::to_string(s) + "/" + std::to_string(n)});
    std::cout << c.name << ": " << s << "/" << n << " stable\n";
    all = all && s == n;
  }
  ball::write_manifest(dir + "/manifest.txt", kv, cfgs);
  std::cout << "runtime: " << secs << " s\noutput: " << dir << "\n";
  return all ? kExitStable : kExitUnstable;
}

int cmd_tube(const CommonOptions& o) {
  const RunConfig c = resolve(o);
  const std::string dir = prepare_out(o);
  ball::write_tube_csv(dir + "/tube.csv", c);
  ball::write_manifest(dir + "/manifest.txt", manifest_head("tube", o), {c});
  std::cout << "output: " << dir << "/tube.csv\n";
  return kExitStable;
}

int cmd_plan(const CommonOptions& o) {
  const RunConfig c = resolve(o);
  const auto built = ball::build_run(c);  // rejects x0 outside every domain
  const auto& e = built.experiment;
  const std::string dir = prepare_out(o);
  auto cfg = e.cfg;
  cfg.dt = e.rates.mpc_period;
  auto kv = manifest_head("plan", o);
  try {
    const auto res = initial_plan(*e.sys, e.x0, cfg, e.tube, e.opt.hybrid);
    ball::write_plan_csv(dir + "/plan.csv", *e.sys, res.plan);
    const std::string seq = guard_list(*e.sys, res.schedule.guards);
    kv.push_back({"sequence", seq});
    kv.push_back({"cost", format_double(res.plan.cost)});
    ball::write_manifest(dir + "/manifest.txt", kv, {c});
    std::cout << "sequence: " << seq << "\n"
              << "cost: " << format_double(res.plan.cost) << "\n"
              << "candidates solved: " << res.evaluated << "\n"
              << "output: " << dir << "/plan.csv\n";
    return kExitStable;
  } catch (const NoFeasibleSequence& ex) {
    kv.push_back({"sequence", "none"});
    ball::write_manifest(dir + "/manifest.txt", kv, {c});
    std::cout << "sequence: none (" << ex.what() << ")\n";
    return kExitUnstable;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered hybrid MPC: closed-loop simulation, Monte Carlo, tubes and hybrid planning"};
  app.require_subcommand(1);
  app.footer(defaults_footer());

  CommonOptions o;
  int n = 10;
  bool no_runs = false;
  auto* sim = app.add_subcommand("simulate", "one closed-loop run; exit 0 if stable, 2 if not");
  auto* mc = app.add_subcommand("montecarlo", "runs every config on n shared disturbance realizations");
  auto* tube = app.add_subcommand("tube", "tube diameter table");
  auto* plan = app.add_subcommand("plan", "hybrid plan (guard sequence and trajectory) from x0");
  for (auto* cmd : {sim, mc, tube, plan}) add_common(cmd, o);
  mc->add_option("--n", n, "realizations per config")->capture_default_str();
  mc->add_flag("--no-runs", no_runs, "skip the per-run trajectory and event files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*mc) return cmd_montecarlo(o, n, !no_runs);
    if (*tube) return cmd_tube(o);
    if (*plan) return cmd_plan(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
