/*
 * Copyright 2026 The monoelastic Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MONOELASTIC_TENSOR_HPP_
#define MONOELASTIC_TENSOR_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monoelastic/errors.hpp"

namespace monoelastic {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 tensors.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("tensor data length " +
                           std::to_string(data_.size()) +
                           " does not match shape " + ShapeString(rows, cols));
    }
  }
  // Nested initializer: Tensor2{{1, 2}, {3, 4}}.
  Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw DimensionError("ragged tensor literal");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Views are lvalue-only so a span never outlives a temporary tensor.
  std::span<double> data() & { return data_; }
  std::span<const double> data() const& { return data_; }
  std::span<const double> data() && = delete;
  std::span<const double> row(std::size_t r) const& {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) & {
    return std::span<double>(data_).subspan(r * cols_, cols_);
  }
  std::span<const double> row(std::size_t r) && = delete;

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor2& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape() const { return ShapeString(rows_, cols_); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

  static std::string ShapeString(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A trainable tensor. The name doubles as the stable identifier used for
// optimizer state and in the model container.
struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 gradient;

  Parameter() = default;
  Parameter(std::string n, Tensor2 v)
      : name(std::move(n)),
        value(std::move(v)),
        gradient(value.rows(), value.cols()) {}

  void zero_grad() {
    if (!gradient.same_shape(value)) gradient = Tensor2(value.rows(), value.cols());
    gradient.fill(0.0);
  }
};

namespace kernels {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap view(const Tensor2& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
inline MutMap view(Tensor2& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline void check_matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape() + " x " +
                         b.shape());
  }
}

inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  check_matmul(a, b);
  Tensor2 c(a.rows(), b.cols());
  if (a.cols() == 0) return c;
  view(c).noalias() = view(a) * view(b);
  return c;
}

// out += a * b^T
inline void add_matmul_bt(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  view(out).noalias() += view(a) * view(b).transpose();
}

// out += a^T * b
inline void add_matmul_at(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  view(out).noalias() += view(a).transpose() * view(b);
}

}  // namespace kernels

}  // namespace monoelastic

#endif  // MONOELASTIC_TENSOR_HPP_
