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

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tatr/autograd.hpp"

namespace tatr {

enum class InitKind {
  kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kOnes,
  kZeros,
};

/// Declaration of one named parameter tensor.
struct ParamDecl {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kFanInUniform;
  std::size_t fan_in = 1;
};

/// Named parameter tensors in a fixed, insertion-defined order.
template <typename T>
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  ParamStore() = default;

  /// Materializes `decls` in order. Parameter i draws from its own stream
  /// derived from (seed, i); values are drawn in double precision.
  static ParamStore initialize(const std::vector<ParamDecl>& decls, std::uint64_t seed);

  void add(std::string name, Tensor<T> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  std::size_t index_of(const std::string& name) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  /// Total scalar count over all tensors.
  std::size_t element_count() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
bool bit_equal(const ParamStore<T>& a, const ParamStore<T>& b);

/// Variables for every entry of a store. With a tape they are gradient
/// leaves; without one they are constants.
template <typename T>
class BoundParams {
 public:
  BoundParams(const ParamStore<T>& store, Tape<T>* tape);
  /// Uses `vars` (one per entry, same shapes) in place of fresh variables.
  BoundParams(const ParamStore<T>& store, std::vector<Var<T>> vars);

  const Var<T>& operator[](const std::string& name) const;
  /// Undefined Var when `name` is absent (optional bias / beta slots).
  Var<T> optional(const std::string& name) const;
  bool contains(const std::string& name) const { return store_->contains(name); }
  const std::vector<Var<T>>& vars() const noexcept { return vars_; }
  const ParamStore<T>& store() const noexcept { return *store_; }

 private:
  const ParamStore<T>* store_;
  std::vector<Var<T>> vars_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class BoundParams<float>;
extern template class BoundParams<double>;

}  // namespace tatr
