// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/diffusion.hpp"

namespace semedit {

NoiseSchedule make_schedule(int t_train, double beta_start, double beta_end) {
  if (t_train < 1) throw ConfigError("t_train must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.t_train = t_train;
  s.betas.resize(static_cast<std::size_t>(t_train));
  s.alpha_bar.resize(static_cast<std::size_t>(t_train));
  double prod = 1.0;
  for (int i = 0; i < t_train; ++i) {
    const double frac = t_train == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(t_train - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    s.betas[static_cast<std::size_t>(i)] = beta;
    prod *= 1.0 - beta;
    s.alpha_bar[static_cast<std::size_t>(i)] = prod;
  }
  validate(s);
  return s;
}

void validate(const NoiseSchedule& s) {
  if (s.t_train < 1 || s.betas.size() != static_cast<std::size_t>(s.t_train) || s.alpha_bar.size() != s.betas.size())
    throw ConfigError("schedule tables do not match t_train");
  for (std::size_t i = 0; i < s.betas.size(); ++i) {
    if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0)) throw ConfigError("beta outside (0, 1)");
    if (!(s.alpha_bar[i] > 0.0 && s.alpha_bar[i] < 1.0)) throw ConfigError("alpha_bar outside (0, 1)");
    if (i > 0 && !(s.alpha_bar[i] < s.alpha_bar[i - 1])) throw ConfigError("alpha_bar not strictly decreasing");
  }
}

StepGrid make_grid(int t_sample, int t_train) {
  if (t_sample < 1 || t_sample > t_train)
    throw ArgumentError("t_sample " + std::to_string(t_sample) + " outside [1, " + std::to_string(t_train) + "]");
  StepGrid g;
  g.steps.reserve(static_cast<std::size_t>(t_sample));
  for (int i = 1; i <= t_sample; ++i)
    g.steps.push_back(static_cast<int>(static_cast<long>(i) * t_train / t_sample));
  return g;
}

StepGrid make_grid(std::vector<int> steps, int t_train) {
  if (steps.empty()) throw ArgumentError("grid must have at least one step");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 1 || steps[i] > t_train) throw ArgumentError("grid step outside [1, t_train]");
    if (i > 0 && steps[i] <= steps[i - 1]) throw ArgumentError("grid steps must be strictly increasing");
  }
  return StepGrid{std::move(steps)};
}

SmsMode parse_sms_mode(const std::string& s) {
  if (s == "on") return SmsMode::on;
  if (s == "off") return SmsMode::off;
  if (s == "flipped") return SmsMode::flipped;
  throw ConfigError("unknown sms mode '" + s + "' (expected on, off or flipped)");
}

std::string to_string(SmsMode m) {
  switch (m) {
    case SmsMode::on:
      return "on";
    case SmsMode::off:
      return "off";
    case SmsMode::flipped:
      return "flipped";
  }
  return "on";
}

}  // namespace semedit
