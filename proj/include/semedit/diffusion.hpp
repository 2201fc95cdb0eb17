// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Closed-form diffusion arithmetic: schedules, forward noising, deterministic
// DDIM generation/inversion and the time-interpolated conditioning path.
//
// All radicals use the cumulative product alpha_bar. alpha_bar(0) is 1, so
// the last generation step returns the clean estimate f = predict_x0(...).
//
// The sampler functions are generic over the tensor type: anything with
// rows()/cols(), +, - and scalar * works, which covers Eigen matrices for
// inference and autodiff Vars for training through the sampler.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "semedit/autodiff.hpp"
#include "semedit/errors.hpp"

namespace semedit {

struct NoiseSchedule {
  int t_train = 0;
  std::vector<double> betas;      // betas[i] is beta at timestep i + 1
  std::vector<double> alpha_bar;  // alpha_bar[i] = prod_{s <= i} (1 - betas[s])

  /// Cumulative alpha at timestep t in [0, t_train]; alpha_bar(0) = 1.
  double abar(int t) const {
    if (t < 0 || t > t_train) throw ArgumentError("timestep " + std::to_string(t) + " outside [0, t_train]");
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
  }
};

/// Linearly spaced betas in [beta_start, beta_end].
NoiseSchedule make_schedule(int t_train, double beta_start, double beta_end);

/// Checks the schedule invariants; throws ConfigError on violation.
void validate(const NoiseSchedule& sched);

/// Timesteps visited by a t_sample-step sampler, ascending, ending at t_train.
struct StepGrid {
  std::vector<int> steps;

  int t_sample() const { return static_cast<int>(steps.size()); }
  /// Timestep at grid position i in [0, t_sample]; position 0 is the clean image (t = 0).
  int at(int i) const { return i == 0 ? 0 : steps[static_cast<std::size_t>(i - 1)]; }
};

/// Uniform stride over [1, t_train]: steps_i = floor(i * t_train / t_sample), i = 1..t_sample.
StepGrid make_grid(int t_sample, int t_train);

/// Explicit grid; must be strictly increasing within [1, t_train].
StepGrid make_grid(std::vector<int> steps, int t_train);

/// How the conditioning code moves over the generation steps.
enum class SmsMode {
  on,       // starts at the source code (step T) and anneals to the edited code
  off,      // every step conditioned on the edited code
  flipped,  // starts at the edited code and anneals to the source code
};

SmsMode parse_sms_mode(const std::string& s);
std::string to_string(SmsMode m);

/// Which timestep the denoiser is queried at during inversion from t_a to t_b.
enum class InversionTimestep {
  source,  // eps(x_{t_a}, t_a, z)
  target,  // eps(x_{t_a}, t_b, z): same timestep the matching generation step uses
};

namespace detail {

template <typename T>
struct scalar_of;
template <typename S, int R, int C, int O, int MR, int MC>
struct scalar_of<Eigen::Matrix<S, R, C, O, MR, MC>> {
  using type = S;
};
template <typename S>
struct scalar_of<Var<S>> {
  using type = S;
};
template <typename T>
using scalar_t = typename scalar_of<T>::type;

template <typename T>
bool all_finite(const T& x) {
  if constexpr (requires { x.allFinite(); }) {
    return x.allFinite();
  } else {
    return x.value().allFinite();
  }
}

template <typename T>
void require_same_shape(const T& a, const T& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError(std::string(what) + ": shape mismatch");
}

constexpr double kMinNoiseStd = 1e-12;

}  // namespace detail

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
template <typename T>
T q_sample(const T& x0, int t, const T& eps, const NoiseSchedule& sched) {
  using S = detail::scalar_t<T>;
  detail::require_same_shape(x0, eps, "q_sample");
  if (t < 1 || t > sched.t_train) throw ArgumentError("q_sample: timestep outside [1, t_train]");
  const double ab = sched.abar(t);
  return T(static_cast<S>(std::sqrt(ab)) * x0 + static_cast<S>(std::sqrt(1.0 - ab)) * eps);
}

/// Clean-image estimate (x_t - sqrt(1 - abar) * eps_hat) / sqrt(abar).
template <typename T>
T predict_x0(const T& x_t, double abar_t, const T& eps_hat) {
  using S = detail::scalar_t<T>;
  detail::require_same_shape(x_t, eps_hat, "predict_x0");
  if (!(abar_t > 0.0)) throw NumericError("predict_x0: alpha_bar must be positive");
  return T(static_cast<S>(1.0 / std::sqrt(abar_t)) * (x_t - static_cast<S>(std::sqrt(1.0 - abar_t)) * eps_hat));
}

template <typename T>
T predict_x0(const T& x_t, int t, const T& eps_hat, const NoiseSchedule& sched) {
  return predict_x0(x_t, sched.abar(t), eps_hat);
}

/// Deterministic generation step between two cumulative alphas (abar_prev >= abar_t).
template <typename T>
T ddim_step(const T& x_t, double abar_t, double abar_prev, const T& eps_hat) {
  using S = detail::scalar_t<T>;
  const T f = predict_x0(x_t, abar_t, eps_hat);
  const double noise_std = std::max(std::sqrt(1.0 - abar_t), detail::kMinNoiseStd);
  const T direction = static_cast<S>(1.0 / noise_std) * (x_t - static_cast<S>(std::sqrt(abar_t)) * f);
  return T(static_cast<S>(std::sqrt(abar_prev)) * f + static_cast<S>(std::sqrt(1.0 - abar_prev)) * direction);
}

/// One DDIM generation step from t to t_prev <= t; identity when t_prev == t.
template <typename T>
T ddim_step(const T& x_t, int t, int t_prev, const T& eps_hat, const NoiseSchedule& sched) {
  if (t_prev > t) throw ArgumentError("ddim_step: t_prev must not exceed t");
  if (t_prev == t) return x_t;
  return ddim_step(x_t, sched.abar(t), sched.abar(t_prev), eps_hat);
}

/// One deterministic encoding step from t_a to t_b > t_a given the noise estimate.
template <typename T>
T ddim_invert_step(const T& x_a, double abar_a, double abar_b, const T& eps_hat) {
  using S = detail::scalar_t<T>;
  const T f = predict_x0(x_a, abar_a, eps_hat);
  return T(static_cast<S>(std::sqrt(abar_b)) * f + static_cast<S>(std::sqrt(1.0 - abar_b)) * eps_hat);
}

/// Elementwise lerp a + nu (b - a), exact at both endpoints and when a == b.
template <typename T>
T lerp(const T& a, const T& b, double nu) {
  using S = detail::scalar_t<T>;
  detail::require_same_shape(a, b, "lerp");
  if (nu == 0.0) return a;
  if (nu == 1.0) return b;
  return T(a + static_cast<S>(nu) * (b - a));
}

/// Per-step conditioning codes; entry i conditions generation at grid position i + 1.
template <typename Z>
using ConditionTrajectory = std::vector<Z>;

/// Conditioning schedule over the grid. Position i has nu = i / T; in `on`
/// mode the code at position i is lerp(z_edit, z; nu).
template <typename Z>
ConditionTrajectory<Z> sms_trajectory(const Z& z, const Z& z_edit, const StepGrid& grid, SmsMode mode = SmsMode::on) {
  detail::require_same_shape(z, z_edit, "sms_trajectory");
  const int n = grid.t_sample();
  ConditionTrajectory<Z> traj;
  traj.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    const double nu = static_cast<double>(i) / static_cast<double>(n);
    switch (mode) {
      case SmsMode::on:
        traj.push_back(lerp(z_edit, z, nu));
        break;
      case SmsMode::flipped:
        traj.push_back(lerp(z, z_edit, nu));
        break;
      case SmsMode::off:
        traj.push_back(z_edit);
        break;
    }
  }
  return traj;
}

template <typename Z>
ConditionTrajectory<Z> constant_trajectory(const Z& z, const StepGrid& grid) {
  return ConditionTrajectory<Z>(static_cast<std::size_t>(grid.t_sample()), z);
}

/// Encodes x0 into its stochastic code x_T by running the DDIM encoder over
/// the grid in increasing t. `denoiser(x, t, z)` returns the noise estimate.
template <typename T, typename Z, typename Denoiser>
T invert(const T& x0, const Z& z, const StepGrid& grid, Denoiser&& denoiser, const NoiseSchedule& sched,
         InversionTimestep query = InversionTimestep::source) {
  T x = x0;
  for (int i = 1; i <= grid.t_sample(); ++i) {
    const int t_a = grid.at(i - 1), t_b = grid.at(i);
    const T eps = denoiser(x, query == InversionTimestep::target ? t_b : t_a, z);
    detail::require_same_shape(x, eps, "invert");
    x = ddim_invert_step(x, sched.abar(t_a), sched.abar(t_b), eps);
    if (!detail::all_finite(x)) throw NumericError("invert: non-finite latent", i);
  }
  return x;
}

/// Runs the deterministic sampler from x_T down the grid, conditioning the
/// step at grid position i on traj[i - 1]; returns the x0 estimate.
template <typename T, typename Z, typename Denoiser>
T generate(const T& x_T, const ConditionTrajectory<Z>& traj, const StepGrid& grid, Denoiser&& denoiser,
           const NoiseSchedule& sched) {
  if (static_cast<int>(traj.size()) != grid.t_sample())
    throw ArgumentError("generate: trajectory length " + std::to_string(traj.size()) + " differs from grid length " +
                        std::to_string(grid.t_sample()));
  T x = x_T;
  for (int i = grid.t_sample(); i >= 1; --i) {
    const int t = grid.at(i), t_prev = grid.at(i - 1);
    const T eps = denoiser(x, t, traj[static_cast<std::size_t>(i - 1)]);
    detail::require_same_shape(x, eps, "generate");
    x = ddim_step(x, t, t_prev, eps, sched);
    if (!detail::all_finite(x)) throw NumericError("generate: non-finite sample", i);
  }
  return x;
}

}  // namespace semedit
