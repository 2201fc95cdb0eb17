// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

// Portable tensor container.
//
// Layout (all integers little-endian):
//   magic   8 bytes  "SEMTNSR1"
//   count   u32      number of entries
//   entry*  { u32 name_len, name bytes (UTF-8),
//             u32 ndims, u64 dims[ndims],
//             f32 data[prod(dims)] in row-major order }
// Entries are written sorted by name.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semedit/autodiff.hpp"
#include "semedit/nn.hpp"

namespace semedit {

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

class TensorContainer {
 public:
  void put(const std::string& name, Tensor t);

  template <typename Scalar>
  void put_matrix(const std::string& name, const Matrix<Scalar>& m) {
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        t.data[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    put(name, std::move(t));
  }

  template <typename Scalar>
  Matrix<Scalar> get_matrix(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.dims.size() != 2) throw IoError("tensor '" + name + "' is not two-dimensional");
    const auto rows = static_cast<Eigen::Index>(t.dims[0]), cols = static_cast<Eigen::Index>(t.dims[1]);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = static_cast<Scalar>(t.data[static_cast<std::size_t>(i * cols + j)]);
    return m;
  }

  template <typename Scalar>
  void put_params(const nn::ParamList<Scalar>& params) {
    for (const auto& [name, p] : params) put_matrix(name, p->value);
  }

  /// Loads every listed parameter; shapes must match the declared architecture.
  template <typename Scalar>
  void get_params(nn::ParamList<Scalar>& params) const {
    for (auto& [name, p] : params) {
      Matrix<Scalar> m = get_matrix<Scalar>(name);
      if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
        throw IoError("tensor '" + name + "' shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      " does not match architecture " + std::to_string(p->value.rows()) + "x" +
                      std::to_string(p->value.cols()));
      p->value = std::move(m);
      p->zero_grad();
    }
  }

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> serialize() const;
  static TensorContainer deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> entries_;
};

}  // namespace semedit
