// Copyright 2026 The tatr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tatr/errors.hpp"

namespace tatr {

using Shape = std::vector<std::size_t>;

/// Number of elements described by `shape` (1 for a rank-0 scalar).
std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array. 4-d activations are laid out N x H x W x C.
///
/// The value type is the storage dtype; every kernel accumulates in it.
/// Gradients are not stored here, they live in the autograd node that
/// owns the tensor (see autograd.hpp).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() & noexcept { return data_; }
  std::span<const T> data() const& noexcept { return data_; }
  std::vector<T> data() && noexcept { return std::move(data_); }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element of a 4-d NHWC tensor.
  T& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c);
  const T& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const;

  /// Same data, new extents; the element count must not change.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept;
  void fill(T value) noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Throws DimensionError unless `t` is 4-d.
template <typename T>
void require_nhwc(const Tensor<T>& t, const char* what);

/// Bitwise equality of shape and data.
template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b);

/// Largest |a - b| / max(|a|, |b|, floor) over all elements.
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-12);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace tatr
