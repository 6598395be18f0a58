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

#include <functional>
#include <memory>
#include <vector>

#include "tatr/tensor.hpp"

namespace tatr {

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  Tape<T>* tape = nullptr;
  std::function<void(const Tensor<T>& grad_out)> backward;

  /// grad += g, allocating zeros on first use.
  void accumulate(const Tensor<T>& g);
};

}  // namespace detail

/// Handle to a value participating in (or excluded from) differentiation.
///
/// A Var either lives on a Tape (requires_grad) or is a free-standing
/// constant. Ops produce a tape-recorded result only when at least one input
/// requires a gradient, so inference builds no graph at all.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const& { return node_->value; }
  Tensor<T> value() && { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Tape<T>* tape() const noexcept { return node_ ? node_->tape : nullptr; }

  /// Gradient after Tape::backward; zeros if nothing reached this value.
  const Tensor<T>& grad() const;

  const std::shared_ptr<detail::Node<T>>& node() const noexcept { return node_; }

 private:
  friend class Tape<T>;
  explicit Var(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node<T>> node_;
};

/// Reverse-mode record. Nodes are appended in creation order, which is a
/// topological order of the graph; backward walks it once in reverse.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf. Leaves with requires_grad=false are plain constants.
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);

  /// Appends an op result. Used by op implementations.
  Var<T> record(Tensor<T> value, BackwardFn backward);

  /// Populates grad() of every leaf reachable from `loss`; other leaves
  /// receive zeros. `loss` must be a scalar recorded on this tape.
  void backward(const Var<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
  std::vector<std::shared_ptr<detail::Node<T>>> leaves_;
};

/// Creates the result of an op on `inputs`: a constant when no input needs a
/// gradient, otherwise a node on the shared tape whose backward is `make_bw()`.
/// Non-finite outputs raise NumericError naming `op`.
template <typename T, typename MakeBackward>
Var<T> make_result(const char* op, Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   MakeBackward&& make_bw);

extern template class Var<float>;
extern template class Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace tatr

#include "tatr/autograd_impl.hpp"
