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
 * @file tubes.hpp
 * @brief Tracking-error tube diameters.
 *
 * Two cross sections are provided. The trivial tube follows from Gronwall's
 * inequality and needs only Lipschitz constants and the disturbance bound:
 *
 *   d(t) = (eta + L_u zeta) t exp(L_x t)
 *
 * The E-ISS tube uses the constants of an E-ISS Lyapunov function certified
 * for a low-level tracking controller and saturates:
 *
 *   a(t) = sigma(eta) / (gamma k1) (1 - exp(-gamma t)),   gamma = k3 / k2
 *
 * It is only valid while the error ball stays inside the controller's region
 * of attraction, i.e. up to the exit time tau. Past tau the trivial tube applies.
 */
#pragma once

#include "lmpc/hybrid_system.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>

namespace lmpc {

struct TubeParams {
  double L_x = 0.0;
  double L_u = 0.0;
  double eta = 0.0;
  double zeta = 0.0;
};

struct EissParams {
  double k1 = 1.0;
  double k2 = 1.0;
  double k3 = 1.0;
  double sigma_eta = 0.0;
  double roa_radius = 0.0;

  double rate() const { return k3 / k2; }
  /// Limit of eiss_diam as t grows.
  double saturation() const { return sigma_eta / (rate() * k1); }
};

inline void validate(const TubeParams& p) {
  if (p.L_x < 0 || p.L_u < 0 || p.eta < 0 || p.zeta < 0)
    throw std::invalid_argument("tube parameters must be non-negative");
  if (!std::isfinite(p.eta)) throw std::invalid_argument("disturbance bound must be finite");
}

inline void validate(const EissParams& e) {
  if (!(e.k1 > 0 && e.k2 > 0 && e.k3 > 0))
    throw std::invalid_argument("E-ISS constants k1, k2, k3 must be positive");
  if (e.sigma_eta < 0) throw std::invalid_argument("sigma(eta) must be non-negative");
  if (e.roa_radius < 0) throw std::invalid_argument("region-of-attraction radius must be non-negative");
}

inline double trivial_diam(const TubeParams& p, double t) {
  if (t <= 0.0) return 0.0;
  return (p.eta + p.L_u * p.zeta) * t * std::exp(p.L_x * t);
}

inline double eiss_diam(const EissParams& e, double t) {
  if (t <= 0.0) return 0.0;
  const double gamma = e.rate();
  // -expm1 keeps precision for small gamma t.
  return e.sigma_eta / (gamma * e.k1) * -std::expm1(-gamma * t);
}

/// First time the E-ISS cross section reaches the region-of-attraction
/// radius; infinite when it never does.
inline double exit_time(const EissParams& e) {
  if (e.roa_radius <= 0.0) return 0.0;
  const double sat = e.saturation();
  if (e.roa_radius >= sat) return kInf;
  return -std::log1p(-e.roa_radius / sat) / e.rate();
}

class TubeModel {
 public:
  TubeModel() = default;

  explicit TubeModel(TubeParams trivial, std::optional<EissParams> eiss = std::nullopt)
      : trivial_(trivial), eiss_(eiss) {
    validate(trivial_);
    if (eiss_) {
      validate(*eiss_);
      if (eiss_->sigma_eta / eiss_->k1 > trivial_.eta)
        throw std::invalid_argument("E-ISS tube requires sigma(eta)/k1 <= eta");
      tau_ = exit_time(*eiss_);
    }
  }

  const TubeParams& trivial() const { return trivial_; }
  const std::optional<EissParams>& eiss() const { return eiss_; }
  double tau() const { return tau_; }

  /// E-ISS diameter up to tau, trivial diameter afterwards.
  double diam(double t) const {
    if (eiss_ && t <= tau_) return eiss_diam(*eiss_, t);
    return trivial_diam(trivial_, t);
  }

 private:
  TubeParams trivial_;
  std::optional<EissParams> eiss_;
  double tau_ = kInf;
};

inline double combined_diam(const TubeModel& m, double t) { return m.diam(t); }

struct LipschitzEstimate {
  double L_x = 0.0;
  double L_u = 0.0;
};

/// Sampled Lipschitz constants of a mode's vector field over a state box and
/// input box. Half of the pairs are far apart, half are local perturbations
/// (which find the Jacobian-norm maximum of smooth fields). The largest ratio is
/// inflated by `safety`.
template <int Nx, int Nu>
LipschitzEstimate estimate_lipschitz(const Mode<Nx, Nu>& mode,
                                     const Eigen::Matrix<double, Nx, 1>& region_lo,
                                     const Eigen::Matrix<double, Nx, 1>& region_hi,
                                     const Eigen::Matrix<double, Nu, 1>& input_lo,
                                     const Eigen::Matrix<double, Nu, 1>& input_hi, int n_samples,
                                     std::uint64_t seed, double safety = 1.25) {
  using State = Eigen::Matrix<double, Nx, 1>;
  using Input = Eigen::Matrix<double, Nu, 1>;
  if (n_samples < 2) throw std::invalid_argument("estimate_lipschitz needs at least 2 samples");
  for (int i = 0; i < Nx; ++i)
    if (!(region_hi(i) > region_lo(i)))
      throw std::invalid_argument("estimate_lipschitz: degenerate state region");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw_x = [&] {
    State x;
    for (int i = 0; i < Nx; ++i) x(i) = region_lo(i) + unit(rng) * (region_hi(i) - region_lo(i));
    return x;
  };
  auto draw_u = [&] {
    Input u;
    for (int i = 0; i < Nu; ++i) u(i) = input_lo(i) + unit(rng) * (input_hi(i) - input_lo(i));
    return u;
  };
  const double local = 1e-4 * (region_hi - region_lo).norm();
  const double local_u = 1e-4 * (input_hi - input_lo).norm();

  LipschitzEstimate est;
  for (int s = 0; s < n_samples; ++s) {
    const bool near = (s % 2 == 1);
    const State x1 = draw_x();
    State x2;
    if (near) {
      State d;
      for (int i = 0; i < Nx; ++i) d(i) = normal(rng);
      x2 = x1 + local * d.normalized();
    } else {
      x2 = draw_x();
    }
    const Input u = draw_u();
    const double dx = (x1 - x2).norm();
    if (dx > 0)
      est.L_x = std::max(est.L_x, (mode.vector_field(x1, u) - mode.vector_field(x2, u)).norm() / dx);

    if (local_u > 0) {
      const Input u1 = draw_u();
      Input u2;
      if (near) {
        Input d;
        for (int i = 0; i < Nu; ++i) d(i) = normal(rng);
        u2 = u1 + local_u * d.normalized();
      } else {
        u2 = draw_u();
      }
      const double du = (u1 - u2).norm();
      if (du > 0)
        est.L_u =
            std::max(est.L_u, (mode.vector_field(x1, u1) - mode.vector_field(x1, u2)).norm() / du);
    }
  }
  est.L_x *= safety;
  est.L_u *= safety;
  return est;
}

/// Sampled bound on |grad h| over a state box, by central differences.
template <int Nx, int Nu>
double estimate_guard_lipschitz(const Guard<Nx, Nu>& g, const Eigen::Matrix<double, Nx, 1>& region_lo,
                                const Eigen::Matrix<double, Nx, 1>& region_hi, int n_samples,
                                std::uint64_t seed, double safety = 1.0) {
  using State = Eigen::Matrix<double, Nx, 1>;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double best = 0.0;
  const double eps = 1e-6;
  for (int s = 0; s < n_samples; ++s) {
    State x;
    for (int i = 0; i < Nx; ++i) x(i) = region_lo(i) + unit(rng) * (region_hi(i) - region_lo(i));
    State grad;
    for (int i = 0; i < Nx; ++i) {
      State xp = x, xm = x;
      xp(i) += eps;
      xm(i) -= eps;
      grad(i) = (g.h(xp) - g.h(xm)) / (2 * eps);
    }
    best = std::max(best, grad.norm());
  }
  return best * safety;
}

}  // namespace lmpc
