// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over dense Eigen matrices.
//
// Every value is a column-major matrix; batched quantities store one sample
// per column. A Tape records the operations applied to its Vars and replays
// their adjoints in reverse on backward(). Nodes that do not depend on a
// differentiable input never store a backward closure, so the same code path
// serves inference at little extra cost.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "semedit/errors.hpp"

namespace semedit {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A trainable tensor: value plus accumulated gradient.
template <typename Scalar>
struct Param {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }
  bool needs_grad() const { return tape_->needs_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var<Scalar> constant(Mat value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient is kept and can be read after backward().
  Var<Scalar> variable(Mat value) { return push(std::move(value), true, nullptr); }

  /// Leaf aliasing a Param; gradients accumulate into param.grad when trainable.
  Var<Scalar> parameter(Param<Scalar>& param) {
    Node node;
    node.external = &param.value;
    node.needs_grad = param.trainable;
    if (param.trainable) {
      if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols())
        param.zero_grad();
      node.grad_sink = &param.grad;
    }
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Leaf aliasing an immutable parameter (no gradient).
  Var<Scalar> frozen(const Param<Scalar>& param) {
    Node node;
    node.external = &param.value;
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Records an op result; `backward` is dropped when no input needs a gradient.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient of node `id` if it participates.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to all leaves.
  void backward(const Var<Scalar>& out) {
    if (out.rows() != 1 || out.cols() != 1)
      throw ArgumentError("backward() requires a scalar output");
    backward(out, Mat::Ones(1, 1));
  }

  void backward(const Var<Scalar>& out, const Mat& seed) {
    if (!nodes_[out.id()].needs_grad) return;
    accumulate(out.id(), seed);
    for (int id = out.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.grad_sink) *n.grad_sink += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool needs_grad = false;
    Mat* grad_sink = nullptr;
    Backward backward;
  };

  Var<Scalar> push(Mat value, bool needs, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
};

namespace ad {

namespace detail {
template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
}
}  // namespace detail

/// a * b (matrix product).
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimensions differ");
  Matrix<Scalar> out;
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

/// x + b broadcast over columns; b is rows x 1.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& x, const Var<Scalar>& b) {
  if (b.cols() != 1 || b.rows() != x.rows()) throw ArgumentError("add_bias: bias must be rows x 1");
  Matrix<Scalar> out = x.value().colwise() + b.value().col(0);
  const int ix = x.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, b}, [ix, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ix, g);
    t.accumulate(ib, g.rowwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  const int ia = a.id();
  return a.tape()->record(-a.value(), {a}, [ia](Tape<Scalar>& t, const Matrix<Scalar>& g) { t.accumulate(ia, -g); });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  const int ia = a.id();
  return a.tape()->record(s * a.value(), {a}, [ia, s](Tape<Scalar>& t, const Matrix<Scalar>& g) { t.accumulate(ia, s * g); });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  return s * a;
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> cwise_mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "cwise_mul");
  const int ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

/// Multiplies column j of x by the constant c[j].
template <typename Scalar>
Var<Scalar> scale_cols(const Var<Scalar>& x, const Vector<Scalar>& c) {
  if (c.size() != x.cols()) throw ArgumentError("scale_cols: coefficient count differs from columns");
  Matrix<Scalar> out = x.value() * c.asDiagonal();
  const int ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, c](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ix, g * c.asDiagonal());
  });
}

/// Multiplies column j of x by the differentiable scalar w(0, j); w is 1 x cols.
template <typename Scalar>
Var<Scalar> scale_cols(const Var<Scalar>& x, const Var<Scalar>& w) {
  if (w.rows() != 1 || w.cols() != x.cols()) throw ArgumentError("scale_cols: weights must be 1 x cols");
  Matrix<Scalar> out = x.value() * w.value().row(0).asDiagonal();
  const int ix = x.id(), iw = w.id();
  return x.tape()->record(std::move(out), {x, w}, [ix, iw](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.needs_grad(ix)) t.accumulate(ix, g * t.value(iw).row(0).asDiagonal());
    if (t.needs_grad(iw)) t.accumulate(iw, g.cwiseProduct(t.value(ix)).colwise().sum());
  });
}

/// Repeats a single column n times.
template <typename Scalar>
Var<Scalar> repeat_cols(const Var<Scalar>& x, Eigen::Index n) {
  if (x.cols() != 1) throw ArgumentError("repeat_cols: input must have one column");
  Matrix<Scalar> out = x.value().replicate(1, n);
  const int ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ix, g.rowwise().sum());
  });
}

/// Stacks a over b.
template <typename Scalar>
Var<Scalar> concat_rows(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) throw ArgumentError("concat_rows: column counts differ");
  Matrix<Scalar> out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib, ra, rb](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g.topRows(ra));
    if (t.needs_grad(ib)) t.accumulate(ib, g.bottomRows(rb));
  });
}

/// Selects columns of `table` by index: out.col(j) = table.col(idx[j]).
template <typename Scalar>
Var<Scalar> gather_cols(const Var<Scalar>& table, std::vector<int> idx) {
  Matrix<Scalar> out(table.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= table.cols()) throw ArgumentError("gather_cols: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = table.value().col(idx[j]);
  }
  const int it = table.id();
  const Eigen::Index rows = table.rows(), cols = table.cols();
  return table.tape()->record(std::move(out), {table},
                              [it, idx = std::move(idx), rows, cols](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                                Matrix<Scalar> acc = Matrix<Scalar>::Zero(rows, cols);
                                for (std::size_t j = 0; j < idx.size(); ++j)
                                  acc.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
                                t.accumulate(it, acc);
                              });
}

namespace detail {
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar>& x, F f, DF df) {
  Matrix<Scalar> out = x.value().unaryExpr(f);
  const int ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, df](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ix, g.cwiseProduct(t.value(ix).unaryExpr(df)));
  });
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return v / (Scalar(1) + std::exp(-v)); },
      [](Scalar v) {
        const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
        return s * (Scalar(1) + v * (Scalar(1) - s));
      });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); },
      [](Scalar v) {
        const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
        return s * (Scalar(1) - s);
      });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::tanh(v); },
      [](Scalar v) {
        const Scalar th = std::tanh(v);
        return Scalar(1) - th * th;
      });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope = Scalar(0.2)) {
  return detail::unary(
      x, [slope](Scalar v) { return v > 0 ? v : slope * v; }, [slope](Scalar v) { return v > 0 ? Scalar(1) : slope; });
}

/// |x| with subgradient 0 at the origin.
template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::abs(v); },
      [](Scalar v) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return v * v; }, [](Scalar v) { return Scalar(2) * v; });
}

/// Sum of all entries, as a 1x1 value.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  return x.tape()->record(std::move(out), {x}, [ix, r, c](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ix, Matrix<Scalar>::Constant(r, c, g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return (Scalar(1) / static_cast<Scalar>(x.value().size())) * sum(x);
}

/// Per-column sum: 1 x cols.
template <typename Scalar>
Var<Scalar> col_sum(const Var<Scalar>& x) {
  Matrix<Scalar> out = x.value().colwise().sum();
  const int ix = x.id();
  const Eigen::Index r = x.rows();
  return x.tape()->record(std::move(out), {x}, [ix, r](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ix, g.replicate(r, 1));
  });
}

/// Per-column Euclidean norm: 1 x cols. Subgradient 0 for a zero column.
template <typename Scalar>
Var<Scalar> col_norm(const Var<Scalar>& x) {
  Matrix<Scalar> out = x.value().colwise().norm();
  const int ix = x.id();
  Matrix<Scalar> norms = out;
  return x.tape()->record(std::move(out), {x}, [ix, norms](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> d = t.value(ix);
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const Scalar n = norms(0, j);
      d.col(j) *= n > Scalar(0) ? g(0, j) / n : Scalar(0);
    }
    t.accumulate(ix, d);
  });
}

/// Per-column cosine similarity between a and b: 1 x cols.
///
/// Each norm is clamped from below by `min_norm`, so the value is defined for
/// vanishing inputs and shrinks linearly with them below the clamp.
template <typename Scalar>
Var<Scalar> col_cosine(const Var<Scalar>& a, const Var<Scalar>& b, Scalar min_norm = Scalar(0)) {
  detail::require_same_shape(a, b, "col_cosine");
  const Matrix<Scalar>& av = a.value();
  const Matrix<Scalar>& bv = b.value();
  const Eigen::Index n = av.cols();
  Matrix<Scalar> out(1, n);
  Vector<Scalar> na(n), nb(n), dots(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    na(j) = std::max(av.col(j).norm(), min_norm);
    nb(j) = std::max(bv.col(j).norm(), min_norm);
    if (!(na(j) > Scalar(0)) || !(nb(j) > Scalar(0)))
      throw NumericError("col_cosine: zero-norm column " + std::to_string(j));
    dots(j) = av.col(j).dot(bv.col(j));
    out(0, j) = dots(j) / (na(j) * nb(j));
  }
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b},
                          [ia, ib, na, nb, dots, min_norm](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            const Matrix<Scalar>& av = t.value(ia);
                            const Matrix<Scalar>& bv = t.value(ib);
                            const auto grad_for = [&](const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                                                      const Vector<Scalar>& nx, const Vector<Scalar>& ny) {
                              Matrix<Scalar> d(x.rows(), x.cols());
                              for (Eigen::Index j = 0; j < x.cols(); ++j) {
                                const Scalar c = dots(j) / (nx(j) * ny(j));
                                const bool clamped = x.col(j).norm() < min_norm;
                                d.col(j) = y.col(j) / (nx(j) * ny(j));
                                if (!clamped) d.col(j) -= c * x.col(j) / (nx(j) * nx(j));
                                d.col(j) *= g(0, j);
                              }
                              return d;
                            };
                            if (t.needs_grad(ia)) t.accumulate(ia, grad_for(av, bv, na, nb));
                            if (t.needs_grad(ib)) t.accumulate(ib, grad_for(bv, av, nb, na));
                          });
}

/// Mean squared error between two equally shaped values.
template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b) {
  return mean(square(a - b));
}

}  // namespace ad

using ad::operator+;
using ad::operator-;
using ad::operator*;

}  // namespace semedit
