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
 * @file nlp.hpp
 * @brief Bound-constrained augmented-Lagrangian NLP solver.
 *
 * Solves
 *
 *   min f(z)  s.t.  c(z) = 0,  g(z) <= 0,  lo <= z <= hi
 *
 * with a Powell-Hestenes-Rockafellar augmented Lagrangian. Each outer iteration
 * minimizes the augmented Lagrangian over the box with a projected
 * quasi-Newton method (BFGS on the Lagrangian plus the Gauss-Newton penalty
 * curvature), then updates multipliers and, if feasibility stalls, grows the
 * penalty by a factor of 10.
 *
 * Derivatives are central finite differences. Constraints and cost terms
 * declare the variables they depend on so Jacobians cost O(block size)
 * evaluations per block rather than O(n).
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace lmpc {

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

/// A vector-valued constraint that depends on a subset of the variables.
/// An empty `deps` means it may depend on every variable.
struct ConstraintBlock {
  int size = 0;
  std::vector<int> deps;
  std::function<void(const VectorXd& z, Eigen::Ref<VectorXd> out)> eval;
  /// Optional: variables entering output row r as +z(identity_deps[r]). Their
  /// Jacobian columns are set exactly and skipped by finite differencing.
  std::vector<int> identity_deps;
};

struct CostTerm {
  std::vector<int> deps;
  std::function<double(const VectorXd& z)> eval;
};

struct NlpProblem {
  int n_vars = 0;
  std::vector<CostTerm> cost;
  std::vector<ConstraintBlock> eq;    ///< target 0
  std::vector<ConstraintBlock> ineq;  ///< target <= 0
  VectorXd lo, hi;

  explicit NlpProblem(int n = 0)
      : n_vars(n),
        lo(VectorXd::Constant(n, -std::numeric_limits<double>::infinity())),
        hi(VectorXd::Constant(n, std::numeric_limits<double>::infinity())) {}

  void add_cost(std::function<double(const VectorXd&)> f, std::vector<int> deps = {}) {
    cost.push_back({std::move(deps), std::move(f)});
  }
  void add_eq(int size, std::function<void(const VectorXd&, Eigen::Ref<VectorXd>)> f,
              std::vector<int> deps = {}, std::vector<int> identity_deps = {}) {
    eq.push_back({size, std::move(deps), std::move(f), std::move(identity_deps)});
  }
  void add_ineq(int size, std::function<void(const VectorXd&, Eigen::Ref<VectorXd>)> f,
                std::vector<int> deps = {}) {
    ineq.push_back({size, std::move(deps), std::move(f), {}});
  }

  int n_eq() const { return count(eq); }
  int n_ineq() const { return count(ineq); }

  double eval_cost(const VectorXd& z) const {
    double s = 0.0;
    for (const auto& t : cost) s += t.eval(z);
    return s;
  }
  VectorXd eval_eq(const VectorXd& z) const { return eval_blocks(eq, z); }
  VectorXd eval_ineq(const VectorXd& z) const { return eval_blocks(ineq, z); }

 private:
  static int count(const std::vector<ConstraintBlock>& bs) {
    int n = 0;
    for (const auto& b : bs) n += b.size;
    return n;
  }
  static VectorXd eval_blocks(const std::vector<ConstraintBlock>& bs, const VectorXd& z) {
    VectorXd out(count(bs));
    int row = 0;
    for (const auto& b : bs) {
      b.eval(z, out.segment(row, b.size));
      row += b.size;
    }
    return out;
  }
};

enum class SolveStatus { Optimal, MaxIterations, InfeasibleDetected, Diverged };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIterations: return "max-iterations";
    case SolveStatus::InfeasibleDetected: return "infeasible";
    case SolveStatus::Diverged: return "diverged";
  }
  return "unknown";
}

struct SolverOptions {
  double fd_step = 1e-6;
  double hessian_step = 1e-4;
  double tol_violation = 1e-6;
  double tol_kkt = 1e-5;
  int max_outer = 30;
  int max_inner = 80;
  double rho0 = 100.0;
  double rho_growth = 10.0;
  double rho_max = 1e10;
  double armijo = 1e-4;
  /// Required relative drop in violation per outer iteration before the
  /// penalty is left unchanged.
  double progress = 0.25;
};

struct SolveResult {
  SolveStatus status = SolveStatus::MaxIterations;
  VectorXd primal;
  double cost = 0.0;
  double max_eq_violation = 0.0;
  double max_ineq_violation = 0.0;
  double kkt = 0.0;
  int iterations = 0;
  int inner_iterations = 0;
  VectorXd eq_multipliers, ineq_multipliers;
  std::vector<double> violation_history;  ///< max violation after each accepted outer step

  double max_violation() const { return std::max(max_eq_violation, max_ineq_violation); }
  bool feasible(double tol) const { return max_violation() <= tol; }
};

namespace detail {

inline double max_violation(const VectorXd& c, const VectorXd& g) {
  double v = 0.0;
  if (c.size()) v = c.cwiseAbs().maxCoeff();
  if (g.size()) v = std::max(v, g.maxCoeff());
  return std::max(v, 0.0);
}

inline VectorXd project(const VectorXd& z, const VectorXd& lo, const VectorXd& hi) {
  return z.cwiseMax(lo).cwiseMin(hi);
}

inline std::vector<int> all_indices(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

/// Central-difference gradient of a scalar function over `deps`, accumulated into g.
template <class F>
void fd_gradient(const F& f, VectorXd& z, const std::vector<int>& deps, double h, VectorXd& g) {
  for (int i : deps) {
    const double zi = z(i);
    const double step = h * std::max(1.0, std::abs(zi));
    z(i) = zi + step;
    const double fp = f(z);
    z(i) = zi - step;
    const double fm = f(z);
    z(i) = zi;
    g(i) += (fp - fm) / (2.0 * step);
  }
}

/// Dense Jacobian of stacked blocks by central differences over each block's deps.
inline MatrixXd fd_jacobian(const std::vector<ConstraintBlock>& blocks, int m, VectorXd z,
                            double h) {
  const int n = static_cast<int>(z.size());
  MatrixXd J = MatrixXd::Zero(m, n);
  int row = 0;
  for (const auto& b : blocks) {
    VectorXd fp(b.size), fm(b.size);
    const auto deps = b.deps.empty() ? all_indices(n) : b.deps;
    for (std::size_t r = 0; r < b.identity_deps.size(); ++r) J(row + r, b.identity_deps[r]) = 1.0;
    for (int i : deps) {
      if (std::find(b.identity_deps.begin(), b.identity_deps.end(), i) != b.identity_deps.end()) continue;
      const double zi = z(i);
      const double step = h * std::max(1.0, std::abs(zi));
      z(i) = zi + step;
      b.eval(z, fp);
      z(i) = zi - step;
      b.eval(z, fm);
      z(i) = zi;
      J.block(row, i, b.size, 1) = (fp - fm) / (2.0 * step);
    }
    row += b.size;
  }
  return J;
}

inline VectorXd cost_gradient(const NlpProblem& p, VectorXd z, double h) {
  VectorXd g = VectorXd::Zero(p.n_vars);
  for (const auto& t : p.cost) {
    const auto deps = t.deps.empty() ? all_indices(p.n_vars) : t.deps;
    fd_gradient(t.eval, z, deps, h, g);
  }
  return g;
}

/// Finite-difference Hessian of the cost, assembled term by term.
inline MatrixXd cost_hessian(const NlpProblem& p, VectorXd z, double h) {
  const int n = p.n_vars;
  MatrixXd H = MatrixXd::Zero(n, n);
  for (const auto& t : p.cost) {
    const auto deps = t.deps.empty() ? all_indices(n) : t.deps;
    const int d = static_cast<int>(deps.size());
    for (int a = 0; a < d; ++a) {
      const int i = deps[a];
      const double zi = z(i);
      const double step = h * std::max(1.0, std::abs(zi));
      VectorXd gp = VectorXd::Zero(n), gm = VectorXd::Zero(n);
      z(i) = zi + step;
      fd_gradient(t.eval, z, deps, h, gp);
      z(i) = zi - step;
      fd_gradient(t.eval, z, deps, h, gm);
      z(i) = zi;
      for (int b = 0; b < d; ++b) H(deps[b], i) += (gp(deps[b]) - gm(deps[b])) / (2.0 * step);
    }
  }
  return 0.5 * (H + H.transpose());
}

struct AlState {
  VectorXd z, c, g, grad_f;
  MatrixXd Jc, Jg;
  double f = 0.0;
};

}  // namespace detail

/// Augmented-Lagrangian solve. Never throws for numerical failure; the status
/// carries it instead.
inline SolveResult solve(const NlpProblem& p, const VectorXd& x_init, const SolverOptions& opt = {}) {
  using detail::AlState;
  const int n = p.n_vars;
  const int me = p.n_eq(), mi = p.n_ineq();
  SolveResult res;

  VectorXd lo = p.lo.size() ? p.lo : VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  VectorXd hi = p.hi.size() ? p.hi : VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  std::vector<bool> fixed(n);
  for (int i = 0; i < n; ++i) fixed[i] = (lo(i) == hi(i));

  auto evaluate = [&](const VectorXd& z, bool derivs) {
    AlState s;
    s.z = z;
    s.f = p.eval_cost(z);
    s.c = p.eval_eq(z);
    s.g = p.eval_ineq(z);
    if (derivs) {
      s.grad_f = detail::cost_gradient(p, z, opt.fd_step);
      s.Jc = detail::fd_jacobian(p.eq, me, z, opt.fd_step);
      s.Jg = detail::fd_jacobian(p.ineq, mi, z, opt.fd_step);
    }
    return s;
  };
  auto finite = [](const AlState& s) {
    return std::isfinite(s.f) && s.c.allFinite() && s.g.allFinite();
  };

  VectorXd lam = VectorXd::Zero(me), mu = VectorXd::Zero(mi);
  double rho = opt.rho0;

  auto merit = [&](const AlState& s) {
    if (!finite(s)) return std::numeric_limits<double>::infinity();
    double m = s.f + lam.dot(s.c) + 0.5 * rho * s.c.squaredNorm();
    for (int j = 0; j < mi; ++j) {
      const double t = std::max(0.0, mu(j) + rho * s.g(j));
      m += (t * t - mu(j) * mu(j)) / (2.0 * rho);
    }
    return m;
  };
  auto lagrangian_grad = [&](const AlState& s, const VectorXd& l, const VectorXd& m) {
    VectorXd gr = s.grad_f;
    if (me) gr += s.Jc.transpose() * l;
    if (mi) gr += s.Jg.transpose() * m;
    return gr;
  };
  auto shifted_mu = [&](const AlState& s) {
    VectorXd m(mi);
    for (int j = 0; j < mi; ++j) m(j) = std::max(0.0, mu(j) + rho * s.g(j));
    return m;
  };
  auto proj_grad_norm = [&](const VectorXd& z, const VectorXd& gr) {
    const VectorXd pg = z - detail::project(z - gr, lo, hi);
    return pg.size() ? pg.cwiseAbs().maxCoeff() : 0.0;
  };

  AlState cur = evaluate(detail::project(x_init, lo, hi), true);
  if (!finite(cur) || !cur.grad_f.allFinite()) {
    res.status = SolveStatus::Diverged;
    res.primal = cur.z;
    res.cost = cur.f;
    res.max_eq_violation = me ? cur.c.cwiseAbs().maxCoeff() : 0.0;
    res.max_ineq_violation = mi ? std::max(0.0, cur.g.maxCoeff()) : 0.0;
    return res;
  }

  MatrixXd B = detail::cost_hessian(p, cur.z, opt.hessian_step);
  if (!B.allFinite()) B = MatrixXd::Identity(n, n);

  double viol = detail::max_violation(cur.c, cur.g);
  res.violation_history.push_back(viol);
  bool converged = false;
  bool infeasible = false;
  double inner_tol = 1e-2;

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    res.iterations = outer + 1;
    const AlState start = cur;
    const MatrixXd B_start = B;

    // Inner projected quasi-Newton minimization of the augmented Lagrangian.
    double m_cur = merit(cur);
    for (int inner = 0; inner < opt.max_inner; ++inner) {
      ++res.inner_iterations;
      const VectorXd lam_hat = lam + rho * cur.c;
      const VectorXd mu_hat = shifted_mu(cur);
      const VectorXd G = lagrangian_grad(cur, lam_hat, mu_hat);
      if (!G.allFinite()) break;
      if (proj_grad_norm(cur.z, G) <= inner_tol) break;

      std::vector<int> free;
      for (int i = 0; i < n; ++i) {
        if (fixed[i]) continue;
        const double span = 1e-12 * std::max(1.0, std::abs(cur.z(i)));
        if (cur.z(i) <= lo(i) + span && G(i) > 0) continue;
        if (cur.z(i) >= hi(i) - span && G(i) < 0) continue;
        free.push_back(i);
      }
      if (free.empty()) break;

      // Gauss-Newton penalty curvature; Jacobians are sparse in practice.
      MatrixXd H = B;
      if (me) {
        const Eigen::SparseMatrix<double> Js = cur.Jc.sparseView();
        H += rho * MatrixXd(Js.transpose() * Js);
      }
      if (mi) {
        MatrixXd Ja = cur.Jg;
        for (int j = 0; j < mi; ++j)
          if (!(mu(j) + rho * cur.g(j) > 0)) Ja.row(j).setZero();
        const Eigen::SparseMatrix<double> Js = Ja.sparseView();
        H += rho * MatrixXd(Js.transpose() * Js);
      }

      const int nf = static_cast<int>(free.size());
      MatrixXd Hf(nf, nf);
      VectorXd Gf(nf);
      for (int a = 0; a < nf; ++a) {
        Gf(a) = G(free[a]);
        for (int b = 0; b < nf; ++b) Hf(a, b) = H(free[a], free[b]);
      }
      VectorXd df;
      double delta = 0.0;
      const double scale = std::max(1.0, Hf.diagonal().cwiseAbs().maxCoeff());
      for (int attempt = 0; attempt < 12; ++attempt) {
        MatrixXd Hd = Hf;
        Hd.diagonal().array() += delta;
        Eigen::LDLT<MatrixXd> ldlt(Hd);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            (ldlt.vectorD().array() > 1e-14 * scale).all()) {
          df = ldlt.solve(-Gf);
          if (df.allFinite() && df.dot(Gf) < 0) break;
        }
        df.resize(0);
        delta = delta == 0.0 ? 1e-8 * scale : delta * 10.0;
      }
      if (df.size() == 0) df = -Gf;

      // Guard against near-singular curvature producing absurd steps.
      const double cap = 1e4 * std::max(1.0, cur.z.cwiseAbs().maxCoeff());
      const double len = df.cwiseAbs().maxCoeff();
      if (len > cap) df *= cap / len;
      VectorXd d = VectorXd::Zero(n);
      for (int a = 0; a < nf; ++a) d(free[a]) = df(a);

      // Projected Armijo backtracking.
      double alpha = 1.0;
      bool accepted = false;
      AlState trial;
      for (int ls = 0; ls < 60; ++ls) {
        const VectorXd zt = detail::project(cur.z + alpha * d, lo, hi);
        trial = evaluate(zt, false);
        const double mt = merit(trial);
        if (mt <= m_cur + opt.armijo * G.dot(zt - cur.z) && std::isfinite(mt)) {
          accepted = true;
          m_cur = mt;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;

      trial = evaluate(trial.z, true);
      if (!trial.grad_f.allFinite()) break;
      // Damped BFGS on the Lagrangian with the multiplier estimate at the new point.
      const VectorXd lam_t = lam + rho * trial.c;
      const VectorXd mu_t = shifted_mu(trial);
      const VectorXd s = trial.z - cur.z;
      VectorXd y = lagrangian_grad(trial, lam_t, mu_t) - lagrangian_grad(cur, lam_t, mu_t);
      const VectorXd Bs = B * s;
      const double sBs = s.dot(Bs);
      double sy = s.dot(y);
      if (sBs > 1e-16) {
        if (sy < 0.2 * sBs) {
          const double theta = 0.8 * sBs / (sBs - sy);
          y = theta * y + (1.0 - theta) * Bs;
          sy = s.dot(y);
        }
        if (sy > 1e-12) B += (y * y.transpose()) / sy - (Bs * Bs.transpose()) / sBs;
      }
      cur = std::move(trial);
      if ((s.cwiseAbs().maxCoeff()) < 1e-14) break;
    }

    const double new_viol = detail::max_violation(cur.c, cur.g);
    if (new_viol > viol && new_viol > opt.tol_violation) {
      // Feasibility got worse: reject, stiffen the penalty, retry from the start.
      if (rho >= opt.rho_max) {
        cur = start;
        infeasible = true;
        break;
      }
      cur = start;
      B = B_start;
      rho = std::min(rho * opt.rho_growth, opt.rho_max);
      continue;
    }

    // First-order multiplier update.
    lam += rho * cur.c;
    mu = shifted_mu(cur);
    const double kkt = proj_grad_norm(cur.z, lagrangian_grad(cur, lam, mu));
    res.violation_history.push_back(new_viol);

    if (new_viol <= opt.tol_violation && kkt <= opt.tol_kkt) {
      converged = true;
      viol = new_viol;
      break;
    }
    if (new_viol > opt.tol_violation && new_viol > opt.progress * viol) {
      if (rho >= opt.rho_max) {
        infeasible = true;
        viol = new_viol;
        break;
      }
      rho = std::min(rho * opt.rho_growth, opt.rho_max);
    }
    viol = new_viol;
    inner_tol = std::max(0.1 * opt.tol_kkt, 0.1 * inner_tol);
  }

  // Report violations re-evaluated at the returned primal.
  res.primal = cur.z;
  res.cost = p.eval_cost(cur.z);
  const VectorXd c = p.eval_eq(cur.z), g = p.eval_ineq(cur.z);
  res.max_eq_violation = me ? c.cwiseAbs().maxCoeff() : 0.0;
  res.max_ineq_violation = mi ? std::max(0.0, g.maxCoeff()) : 0.0;
  res.eq_multipliers = lam;
  res.ineq_multipliers = mu;
  res.kkt = proj_grad_norm(cur.z, lagrangian_grad(cur, lam, mu));
  if (!std::isfinite(res.cost) || !c.allFinite() || !g.allFinite())
    res.status = SolveStatus::Diverged;
  else if (converged)
    res.status = SolveStatus::Optimal;
  else if (infeasible)
    res.status = SolveStatus::InfeasibleDetected;
  else
    res.status = SolveStatus::MaxIterations;
  return res;
}

/// Largest componentwise gap between the solver's gradient (central
/// differences at `fd_step`) and a five-point stencil at step 1e-3.
template <class F>
double check_gradient(const F& f, const VectorXd& x, double fd_step = 1e-6) {
  const int n = static_cast<int>(x.size());
  VectorXd z = x;
  VectorXd g = VectorXd::Zero(n);
  std::function<double(const VectorXd&)> fn = f;
  detail::fd_gradient(fn, z, detail::all_indices(n), fd_step, g);
  double worst = 0.0;
  const double h = 1e-3;
  for (int i = 0; i < n; ++i) {
    VectorXd p1 = x, p2 = x, m1 = x, m2 = x;
    p1(i) += h;
    p2(i) += 2 * h;
    m1(i) -= h;
    m2(i) -= 2 * h;
    const double ref = (-f(p2) + 8 * f(p1) - 8 * f(m1) + f(m2)) / (12 * h);
    worst = std::max(worst, std::abs(ref - g(i)));
  }
  return worst;
}

}  // namespace lmpc
