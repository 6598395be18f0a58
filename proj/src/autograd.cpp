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

#include "tatr/autograd.hpp"

namespace tatr {

namespace detail {

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (g.shape() != value.shape()) {
    throw DimensionError("backward: gradient " + to_string(g.shape()) + " for value " +
                         to_string(value.shape()));
  }
  if (grad.empty() && !value.empty()) {
    grad = g;
    return;
  }
  T* dst = grad.ptr();
  const T* src = g.ptr();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  return Var(std::move(node));
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
  if (node_->grad.empty() && !node_->value.empty()) {
    node_->grad = Tensor<T>(node_->value.shape());
  }
  return node_->grad;
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite value");
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  if (!requires_grad) return Var<T>(std::move(node));
  node->requires_grad = true;
  node->tape = this;
  nodes_.push_back(node);
  leaves_.push_back(node);
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, BackwardFn backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->tape = this;
  node->backward = std::move(backward);
  nodes_.push_back(node);
  return Var<T>(std::move(node));
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw UsageError("backward: loss must be a scalar");
  }
  if (loss.tape() != this) {
    throw UsageError("backward: loss was not recorded on this tape");
  }
  for (auto& node : nodes_) node->grad = Tensor<T>();
  loss.node()->grad = Tensor<T>::full(loss.shape(), T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node<T>& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node.grad);
  }
  for (auto& leaf : leaves_) {
    if (leaf->grad.empty()) leaf->grad = Tensor<T>(leaf->value.shape());
  }
}

template struct detail::Node<float>;
template struct detail::Node<double>;
template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace tatr
