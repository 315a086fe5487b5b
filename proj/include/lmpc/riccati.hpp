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
 * @file riccati.hpp
 * @brief Discrete algebraic Riccati equation by the structured doubling algorithm.
 *
 * Solves P = Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A for a
 * stabilizable (A, B) and detectable (A, Q^{1/2}). The doubling iteration
 *
 *   A' = A (I + G H)^{-1} A
 *   G' = G + A (I + G H)^{-1} G A^T
 *   H' = H + A^T H (I + G H)^{-1} A
 *
 * started from (A, B R^{-1} B^T, Q) converges quadratically with H -> P.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lmpc {

class RiccatiError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DareSolution {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;  ///< u = -K x
  int iterations = 0;
};

inline DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                               double tol = 1e-12, int max_iter = 100) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw std::invalid_argument("solve_dare: inconsistent dimensions");
  Eigen::LLT<Eigen::MatrixXd> r_llt(R);
  if (r_llt.info() != Eigen::Success) throw std::invalid_argument("solve_dare: R must be positive definite");

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd Ak = A;
  Eigen::MatrixXd G = B * r_llt.solve(B.transpose());
  Eigen::MatrixXd H = Q;
  DareSolution sol;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I + G * H);
    const Eigen::MatrixXd W = lu.solve(Ak);               // (I + GH)^{-1} A
    const Eigen::MatrixXd V = lu.solve(G);                // (I + GH)^{-1} G
    const Eigen::MatrixXd H_next = H + Ak.transpose() * H * W;
    G = G + Ak * V * Ak.transpose();
    Ak = Ak * W;
    G = 0.5 * (G + G.transpose());
    const Eigen::MatrixXd H_sym = 0.5 * (H_next + H_next.transpose());
    if (!H_sym.allFinite()) throw RiccatiError("solve_dare: iteration diverged");
    const double change = (H_sym - H).lpNorm<Eigen::Infinity>();
    H = H_sym;
    sol.iterations = it;
    const double scale = std::max(1.0, H.lpNorm<Eigen::Infinity>());
    if (!std::isfinite(scale) || scale > 1e150) throw RiccatiError("solve_dare: iteration diverged");
    if (change <= tol * scale) {
      sol.P = H;
      sol.K = (R + B.transpose() * H * B).ldlt().solve(B.transpose() * H * A);
      const Eigen::MatrixXd res = Q + A.transpose() * H * A - A.transpose() * H * B * sol.K - H;
      if (!(res.lpNorm<Eigen::Infinity>() <= 1e-8 * scale)) throw RiccatiError("solve_dare: residual too large");
      return sol;
    }
  }
  throw RiccatiError("solve_dare: no convergence");
}

}  // namespace lmpc
