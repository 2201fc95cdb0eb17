// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "semedit/autodiff.hpp"

namespace semedit::nn {

/// Named, ordered view over a model's parameters (used by optimizers and I/O).
template <typename Scalar>
using ParamList = std::vector<std::pair<std::string, Param<Scalar>*>>;

template <typename Scalar>
Param<Scalar> zeros(Eigen::Index rows, Eigen::Index cols) {
  Param<Scalar> p;
  p.value = Matrix<Scalar>::Zero(rows, cols);
  p.zero_grad();
  return p;
}

/// Gaussian init scaled by gain / sqrt(fan_in).
template <typename Scalar>
Param<Scalar> normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double gain = 1.0) {
  std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(cols)));
  Param<Scalar> p;
  p.value.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) p.value(i, j) = static_cast<Scalar>(dist(rng));
  p.zero_grad();
  return p;
}

template <typename Scalar>
struct Linear {
  Param<Scalar> weight;  // out x in
  Param<Scalar> bias;    // out x 1

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng, double gain = 1.0)
      : weight(normal<Scalar>(out, in, rng, gain)), bias(zeros<Scalar>(out, 1)) {}

  static Linear zero(Eigen::Index in, Eigen::Index out) {
    Linear l;
    l.weight = zeros<Scalar>(out, in);
    l.bias = zeros<Scalar>(out, 1);
    return l;
  }

  Eigen::Index in() const { return weight.value.cols(); }
  Eigen::Index out() const { return weight.value.rows(); }

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) {
    return ad::add_bias(ad::matmul(tape.parameter(weight), x), tape.parameter(bias));
  }

  void collect(ParamList<Scalar>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }

  void set_trainable(bool on) {
    weight.trainable = on;
    bias.trainable = on;
  }
};

enum class Activation { silu, leaky_relu, tanh };

template <typename Scalar>
Var<Scalar> activate(const Var<Scalar>& x, Activation a) {
  switch (a) {
    case Activation::silu:
      return ad::silu(x);
    case Activation::leaky_relu:
      return ad::leaky_relu(x);
    case Activation::tanh:
      return ad::tanh(x);
  }
  return x;
}

/// Plain feed-forward stack; activation after every layer but the last.
template <typename Scalar>
struct Mlp {
  std::vector<Linear<Scalar>> layers;
  Activation activation = Activation::silu;

  Mlp() = default;
  Mlp(const std::vector<Eigen::Index>& widths, std::mt19937_64& rng, Activation act = Activation::silu,
      bool zero_last = false)
      : activation(act) {
    if (widths.size() < 2) throw ConfigError("Mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool last = i + 2 == widths.size();
      if (last && zero_last) {
        layers.push_back(Linear<Scalar>::zero(widths[i], widths[i + 1]));
      } else {
        layers.emplace_back(widths[i], widths[i + 1], rng);
      }
    }
  }

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](tape, x);
      if (i + 1 < layers.size()) x = activate(x, activation);
    }
    return x;
  }

  Eigen::Index in() const { return layers.front().in(); }
  Eigen::Index out() const { return layers.back().out(); }

  std::vector<Eigen::Index> widths() const {
    std::vector<Eigen::Index> w{in()};
    for (const auto& l : layers) w.push_back(l.out());
    return w;
  }

  void collect(ParamList<Scalar>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "." + std::to_string(i));
  }

  void set_trainable(bool on) {
    for (auto& l : layers) l.set_trainable(on);
  }
};

/// Adam with optional decoupled weight decay and a caller-driven learning rate.
template <typename Scalar>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // global-norm clip when > 0
  };

  Adam(ParamList<Scalar> params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (auto& [name, p] : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [name, p] : params_)
      if (p->trainable) s += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(s);
  }

  void step(double lr) {
    ++t_;
    double scale = 1.0;
    if (opt_.grad_clip > 0.0) {
      const double n = grad_norm();
      if (n > opt_.grad_clip) scale = opt_.grad_clip / n;
    }
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(opt_.beta1), b2 = static_cast<Scalar>(opt_.beta2);
    const auto step_size = static_cast<Scalar>(lr / bc1);
    const auto inv_bc2 = static_cast<Scalar>(1.0 / bc2);
    const auto eps = static_cast<Scalar>(opt_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param<Scalar>& p = *params_[i].second;
      if (!p.trainable) continue;
      const Matrix<Scalar> g = p.grad * static_cast<Scalar>(scale);
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      p.value.array() -= step_size * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
    }
  }

  void step() { step(opt_.lr); }
  long iterations() const { return t_; }
  const Options& options() const { return opt_; }

 private:
  ParamList<Scalar> params_;
  Options opt_;
  std::vector<Matrix<Scalar>> m_, v_;
  long t_ = 0;
};

/// Cosine decay from `base` to `base * floor` with a linear warmup.
inline double cosine_lr(double base, long step, long total, long warmup = 0, double floor = 0.05) {
  if (warmup > 0 && step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double progress =
      total > warmup ? static_cast<double>(step - warmup) / static_cast<double>(total - warmup) : 1.0;
  const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, progress)));
  return base * (floor + (1.0 - floor) * c);
}

template <typename Scalar>
Eigen::Index count_params(const ParamList<Scalar>& params) {
  Eigen::Index n = 0;
  for (const auto& [name, p] : params) n += p->size();
  return n;
}

/// Copies parameters across scalar types (e.g. a float checkpoint into a double model).
template <typename To, typename From>
void cast_params(const ParamList<From>& from, ParamList<To>& to) {
  if (from.size() != to.size()) throw ArgumentError("cast_params: parameter lists differ");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].first != to[i].first) throw ArgumentError("cast_params: name mismatch " + from[i].first);
    to[i].second->value = from[i].second->value.template cast<To>();
    to[i].second->zero_grad();
  }
}

}  // namespace semedit::nn
