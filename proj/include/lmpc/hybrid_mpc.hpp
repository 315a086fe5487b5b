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
 * @file hybrid_mpc.hpp
 * @brief High-level layer: search over guard sequences and dwell allocations.
 *
 * A candidate is a chain of guards from the current mode to the final mode
 * plus the number of nodes spent in each domain. Every candidate is scored by
 * solving the fixed-mode MPC it induces; infeasible candidates score a large
 * penalty plus their constraint violation. Two strategies are provided:
 * exhaustive enumeration and the cross-entropy method (CEM).
 */
#pragma once

#include "lmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace lmpc {

class NoFeasibleSequence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SequenceCandidate {
  std::vector<GuardId> edges;
  std::vector<int> dwell;  ///< nodes per domain (node 0 excluded), sums to N

  bool operator<(const SequenceCandidate& o) const {
    return std::tie(edges, dwell) < std::tie(o.edges, o.dwell);
  }
  bool operator==(const SequenceCandidate& o) const { return edges == o.edges && dwell == o.dwell; }
};

struct CemConfig {
  int population = 12;
  double elite_frac = 0.25;
  int iterations = 4;
  std::uint64_t seed = 1;
  double infeasible_penalty = 1e9;
  /// Weight of the elite frequencies in each refit (the rest keeps the old distribution).
  double smoothing = 0.7;
  /// Exploration floor: no category drops below min_prob / (number of categories).
  double min_prob = 0.1;
  /// Redraws allowed per sample to avoid repeating an already scored candidate.
  int redraws = 10;

  void validate() const {
    if (population < 1 || iterations < 1) throw std::invalid_argument("cem: population and iterations must be >= 1");
    if (!(elite_frac > 0 && elite_frac <= 1)) throw std::invalid_argument("cem: elite_frac must be in (0, 1]");
    if (population * elite_frac < 1) throw std::invalid_argument("cem: population * elite_frac must be >= 1");
    if (!(smoothing > 0 && smoothing <= 1)) throw std::invalid_argument("cem: smoothing must be in (0, 1]");
    if (!(min_prob >= 0 && min_prob < 1)) throw std::invalid_argument("cem: min_prob must be in [0, 1)");
    if (redraws < 0) throw std::invalid_argument("cem: redraws must be >= 0");
  }
};

enum class HybridStrategy { Enumerate, Cem };

struct HybridConfig {
  int max_transitions = 2;
  /// Dwell grid for non-final domains: dwell_min, dwell_min + stride, ... <= dwell_max.
  int dwell_min = 2;
  int dwell_max = 10;
  int dwell_stride = 1;
  int final_min = 2;  ///< minimum nodes in the final domain
  HybridStrategy strategy = HybridStrategy::Enumerate;
  CemConfig cem;
  /// Two-stage scoring for enumeration: every candidate is solved with the
  /// screening options, the best `refine_top` are re-solved in full. 0 solves
  /// every candidate in full.
  int refine_top = 0;
  SolverOptions screen = [] {
    SolverOptions s;
    s.max_outer = 4;
    s.max_inner = 25;
    return s;
  }();
};

namespace detail {

template <int Nx, int Nu>
void graph_paths(const HybridSystem<Nx, Nu>& sys, ModeId m, int depth_left, std::vector<GuardId>& path,
                 std::vector<std::vector<GuardId>>& out) {
  if (m == sys.final_mode) out.push_back(path);
  if (depth_left == 0) return;
  for (GuardId g : sys.outgoing(m)) {
    path.push_back(g);
    graph_paths(sys, sys.guard(g).target_mode, depth_left - 1, path, out);
    path.pop_back();
  }
}

inline void floor_probabilities(std::vector<double>& p, double min_prob) {
  const double fl = min_prob / static_cast<double>(p.size());
  double sum = 0.0;
  for (double& v : p) sum += (v = std::max(v, fl));
  for (double& v : p) v /= sum;
}

inline int min_domain_nodes(std::size_t seg, bool robust) { return seg == 0 ? 2 : (robust ? 3 : 2); }

}  // namespace detail

/// Guard chains from `start` to the final mode with at most `max_transitions` edges.
template <int Nx, int Nu>
std::vector<std::vector<GuardId>> guard_paths(const HybridSystem<Nx, Nu>& sys, ModeId start, int max_transitions) {
  std::vector<std::vector<GuardId>> out;
  std::vector<GuardId> path;
  detail::graph_paths(sys, start, max_transitions, path, out);
  return out;
}

/// Dwell grid values for a non-final domain.
inline std::vector<int> dwell_values(const HybridConfig& h, std::size_t seg, bool robust) {
  std::vector<int> v;
  const int lo = std::max(h.dwell_min, detail::min_domain_nodes(seg, robust) - (seg == 0 ? 1 : 0));
  for (int d = lo; d <= h.dwell_max; d += std::max(1, h.dwell_stride)) v.push_back(d);
  return v;
}

/// Every graph path to the final mode with uniform dwell plus the configured
/// dwell grid. Returns an empty list when no path exists.
template <int Nx, int Nu>
std::vector<SequenceCandidate> enumerate_candidates(const HybridSystem<Nx, Nu>& sys, ModeId start, int N,
                                                    const HybridConfig& h, bool robust) {
  if (h.max_transitions > N / 2) throw ContractViolation("enumerate_candidates: max_transitions exceeds N/2");
  std::vector<SequenceCandidate> out;
  for (const auto& edges : guard_paths(sys, start, h.max_transitions)) {
    const std::size_t D = edges.size() + 1;
    std::vector<std::vector<int>> dwells;
    // Uniform allocation.
    {
      std::vector<int> d(D, N / static_cast<int>(D));
      d.back() += N - std::accumulate(d.begin(), d.end(), 0);
      dwells.push_back(d);
    }
    // Grid over the non-final domains.
    std::vector<std::vector<int>> grids;
    for (std::size_t s = 0; s + 1 < D; ++s) grids.push_back(dwell_values(h, s, robust));
    std::vector<std::size_t> idx(D - 1, 0);
    const bool any_empty = std::any_of(grids.begin(), grids.end(), [](const auto& g) { return g.empty(); });
    while (!any_empty) {
      std::vector<int> d(D);
      int used = 0;
      for (std::size_t s = 0; s + 1 < D; ++s) used += d[s] = grids[s][idx[s]];
      d.back() = N - used;
      dwells.push_back(d);
      std::size_t s = 0;
      for (; s + 1 < D; ++s) {
        if (++idx[s] < grids[s].size()) break;
        idx[s] = 0;
      }
      if (s + 1 >= D) break;
    }
    for (auto& d : dwells) {
      if (d.back() < std::max(1, h.final_min) && D > 1) continue;
      bool ok = true;
      for (std::size_t s = 0; s + 1 < D; ++s)
        ok = ok && d[s] + (s == 0 ? 1 : 0) >= detail::min_domain_nodes(s, robust);
      SequenceCandidate c{edges, d};
      if (ok && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
  }
  return out;
}

template <int Nx, int Nu>
struct HybridResult {
  ModeSchedule schedule;
  Plan<Nx, Nu> plan;
  SequenceCandidate candidate;
  int evaluated = 0;                 ///< fixed-mode solves performed
  std::vector<double> best_history;  ///< CEM best score after each iteration
};

/// Scores one candidate; +penalty + violation when infeasible.
template <int Nx, int Nu>
double score_candidate(const Plan<Nx, Nu>& plan, double penalty) {
  return plan.feasible ? plan.cost : penalty + plan.solve.max_violation();
}

template <int Nx, int Nu>
Plan<Nx, Nu> solve_candidate(const HybridSystem<Nx, Nu>& sys, ModeId start, const SequenceCandidate& c,
                             const typename HybridSystem<Nx, Nu>::State& x0, const MpcConfig<Nx, Nu>& cfg,
                             const TubeModel* tube, double first_interval = -1.0) {
  const ModeSchedule s = make_schedule(sys, start, c.edges, c.dwell, tube != nullptr);
  return solve_mpc(sys, s, x0, cfg, tube, static_cast<const Plan<Nx, Nu>*>(nullptr), 1, first_interval);
}

namespace detail {

template <int Nx, int Nu>
ModeId start_mode_of(const HybridSystem<Nx, Nu>& sys, const Eigen::Matrix<double, Nx, 1>& x0,
                     std::optional<ModeId> start) {
  if (start) return *start;
  const auto m = sys.locate(x0);
  if (!m) throw ContractViolation("hybrid_plan: initial state lies outside every domain");
  return *m;
}

}  // namespace detail

/// Exhaustive search over the enumerated candidates.
template <int Nx, int Nu>
HybridResult<Nx, Nu> enumerate_search(const HybridSystem<Nx, Nu>& sys, const typename HybridSystem<Nx, Nu>::State& x0,
                                      const MpcConfig<Nx, Nu>& cfg, const TubeModel* tube, const HybridConfig& h,
                                      std::optional<ModeId> start = std::nullopt, double first_interval = -1.0) {
  const ModeId m0 = detail::start_mode_of(sys, x0, start);
  const auto cands = enumerate_candidates(sys, m0, cfg.N, h, tube != nullptr);
  if (cands.empty()) throw NoFeasibleSequence("no guard sequence reaches the final mode");

  HybridResult<Nx, Nu> best;
  double best_score = kInf;
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  if (h.refine_top > 0 && static_cast<int>(cands.size()) > h.refine_top) {
    MpcConfig<Nx, Nu> coarse = cfg;
    coarse.solver = h.screen;
    std::vector<double> scr(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto p = solve_candidate(sys, m0, cands[i], x0, coarse, tube, first_interval);
      ++best.evaluated;
      // Rank by violation first, then cost, so nearly feasible candidates survive.
      scr[i] = p.solve.max_violation() * 1e6 + p.cost;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scr[a] < scr[b]; });
    order.resize(h.refine_top);
  }
  for (std::size_t i : order) {
    auto p = solve_candidate(sys, m0, cands[i], x0, cfg, tube, first_interval);
    ++best.evaluated;
    const double sc = score_candidate(p, h.cem.infeasible_penalty);
    if (p.feasible && sc < best_score) {
      best_score = sc;
      best.schedule = p.schedule;
      best.candidate = cands[i];
      best.plan = std::move(p);
    }
  }
  if (!std::isfinite(best_score)) throw NoFeasibleSequence("no enumerated guard sequence is feasible");
  return best;
}

/// Cross-entropy search over (guard chain, dwell split). Keeps a categorical
/// distribution over chains and, per chain and domain, over the dwell grid.
template <int Nx, int Nu>
HybridResult<Nx, Nu> cem_search(const HybridSystem<Nx, Nu>& sys, const typename HybridSystem<Nx, Nu>::State& x0,
                                const MpcConfig<Nx, Nu>& cfg, const TubeModel* tube, const HybridConfig& h,
                                std::optional<ModeId> start = std::nullopt, double first_interval = -1.0) {
  const CemConfig& cem = h.cem;
  cem.validate();
  const bool robust = tube != nullptr;
  const ModeId m0 = detail::start_mode_of(sys, x0, start);
  if (h.max_transitions > cfg.N / 2) throw ContractViolation("cem_search: max_transitions exceeds N/2");
  const auto chains = guard_paths(sys, m0, h.max_transitions);
  if (chains.empty()) throw NoFeasibleSequence("no guard sequence reaches the final mode");

  std::vector<double> p_chain(chains.size(), 1.0 / chains.size());
  std::vector<std::vector<std::vector<double>>> p_dwell(chains.size());
  std::vector<std::vector<std::vector<int>>> grid(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t s = 0; s < chains[c].size(); ++s) {
      grid[c].push_back(dwell_values(h, s, robust));
      if (grid[c].back().empty()) throw ContractViolation("cem_search: empty dwell grid");
      p_dwell[c].emplace_back(grid[c].back().size(), 1.0 / grid[c].back().size());
    }
  }

  std::mt19937_64 rng(cem.seed);
  std::map<SequenceCandidate, double> cache;
  std::map<SequenceCandidate, Plan<Nx, Nu>> plans;
  HybridResult<Nx, Nu> best;
  double best_score = kInf;
  const int n_elite = std::max(1, static_cast<int>(std::floor(cem.population * cem.elite_frac)));

  for (int it = 0; it < cem.iterations; ++it) {
    struct Sample {
      std::size_t chain;
      std::vector<std::size_t> dwell_idx;
      double score;
    };
    std::vector<Sample> pop;
    std::set<SequenceCandidate> drawn;
    auto draw = [&](int s, Sample& smp, SequenceCandidate& cand) {
      // First round covers every chain once when the population allows it.
      const bool stratify = it == 0 && static_cast<std::size_t>(s) < chains.size() &&
                            static_cast<std::size_t>(cem.population) >= chains.size();
      smp.chain = stratify ? static_cast<std::size_t>(s)
                           : std::discrete_distribution<std::size_t>(p_chain.begin(), p_chain.end())(rng);
      smp.dwell_idx.clear();
      cand.edges = chains[smp.chain];
      cand.dwell.clear();
      int used = 0;
      for (std::size_t d = 0; d < cand.edges.size(); ++d) {
        const auto& pd = p_dwell[smp.chain][d];
        const std::size_t j = std::discrete_distribution<std::size_t>(pd.begin(), pd.end())(rng);
        smp.dwell_idx.push_back(j);
        cand.dwell.push_back(grid[smp.chain][d][j]);
        used += cand.dwell.back();
      }
      cand.dwell.push_back(cfg.N - used);
    };
    for (int s = 0; s < cem.population; ++s) {
      Sample smp;
      SequenceCandidate cand;
      // Redraw repeats (already solved or already in this round) a few times.
      for (int r = 0; r <= cem.redraws; ++r) {
        draw(s, smp, cand);
        const int need = cand.edges.empty() ? 1 : std::max(1, h.final_min);
        if (cand.dwell.back() >= need && !cache.count(cand) && !drawn.count(cand)) break;
      }
      drawn.insert(cand);
      const int final_need = cand.edges.empty() ? 1 : std::max(1, h.final_min);
      if (cand.dwell.back() < final_need) {
        smp.score = cem.infeasible_penalty * 2;  // horizon overrun
      } else if (auto f = cache.find(cand); f != cache.end()) {
        smp.score = f->second;
      } else {
        auto plan = solve_candidate(sys, m0, cand, x0, cfg, tube, first_interval);
        ++best.evaluated;
        smp.score = score_candidate(plan, cem.infeasible_penalty);
        cache[cand] = smp.score;
        if (plan.feasible && smp.score < best_score) {
          best_score = smp.score;
          best.schedule = plan.schedule;
          best.candidate = cand;
          best.plan = std::move(plan);
        }
      }
      pop.push_back(std::move(smp));
    }
    best.best_history.push_back(best_score);

    // Refit to the elite set.
    std::stable_sort(pop.begin(), pop.end(), [](const Sample& a, const Sample& b) { return a.score < b.score; });
    std::vector<double> f_chain(chains.size(), 0.0);
    auto f_dwell = p_dwell;
    for (auto& c : f_dwell)
      for (auto& d : c) std::fill(d.begin(), d.end(), 0.0);
    std::vector<int> chain_count(chains.size(), 0);
    for (int e = 0; e < n_elite && e < static_cast<int>(pop.size()); ++e) {
      const auto& smp = pop[e];
      f_chain[smp.chain] += 1.0 / n_elite;
      ++chain_count[smp.chain];
      for (std::size_t d = 0; d < smp.dwell_idx.size(); ++d) f_dwell[smp.chain][d][smp.dwell_idx[d]] += 1.0;
    }
    const double a = cem.smoothing;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      p_chain[c] = a * f_chain[c] + (1 - a) * p_chain[c];
      if (chain_count[c] == 0) continue;
      for (std::size_t d = 0; d < p_dwell[c].size(); ++d)
        for (std::size_t j = 0; j < p_dwell[c][d].size(); ++j)
          p_dwell[c][d][j] = a * f_dwell[c][d][j] / chain_count[c] + (1 - a) * p_dwell[c][d][j];
    }
    detail::floor_probabilities(p_chain, cem.min_prob);
    for (auto& c : p_dwell)
      for (auto& d : c) detail::floor_probabilities(d, cem.min_prob);
  }
  if (!std::isfinite(best_score)) throw NoFeasibleSequence("cem found no feasible guard sequence");
  return best;
}

/// Hybrid planning: picks a guard sequence and dwell split and
/// returns the fixed-mode plan it induces (robust when a tube is given).
template <int Nx, int Nu>
HybridResult<Nx, Nu> hybrid_plan(const HybridSystem<Nx, Nu>& sys, const typename HybridSystem<Nx, Nu>::State& x0,
                                 const MpcConfig<Nx, Nu>& cfg, const TubeModel* tube, const HybridConfig& h,
                                 std::optional<ModeId> start = std::nullopt, double first_interval = -1.0) {
  return h.strategy == HybridStrategy::Cem ? cem_search(sys, x0, cfg, tube, h, start, first_interval)
                                           : enumerate_search(sys, x0, cfg, tube, h, start, first_interval);
}

}  // namespace lmpc
