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

#include "tatr/params.hpp"

#include <cmath>

#include "tatr/random.hpp"

namespace tatr {

template <typename T>
ParamStore<T> ParamStore<T>::initialize(const std::vector<ParamDecl>& decls, std::uint64_t seed) {
  ParamStore store;
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const ParamDecl& d = decls[i];
    Tensor<T> t(d.shape);
    switch (d.init) {
      case InitKind::kOnes:
        t.fill(T(1));
        break;
      case InitKind::kZeros:
        break;
      case InitKind::kFanInUniform: {
        Rng rng(derive_seed(seed, i));
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(d.fan_in, 1)));
        for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
    store.add(d.name, std::move(t));
  }
  return store;
}

template <typename T>
void ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (contains(name)) throw ConfigError("param store: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("param store: no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  return entries_[index_of(name)].second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  return entries_[index_of(name)].second;
}

template <typename T>
std::size_t ParamStore<T>::element_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.second.size();
  return total;
}

template <typename T>
bool bit_equal(const ParamStore<T>& a, const ParamStore<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entries()[i].first != b.entries()[i].first) return false;
    if (!bit_equal(a.entries()[i].second, b.entries()[i].second)) return false;
  }
  return true;
}

template <typename T>
BoundParams<T>::BoundParams(const ParamStore<T>& store, Tape<T>* tape) : store_(&store) {
  vars_.reserve(store.size());
  for (const auto& [name, t] : store.entries()) {
    vars_.push_back(tape ? tape->leaf(t) : Var<T>::constant(t));
  }
}

template <typename T>
BoundParams<T>::BoundParams(const ParamStore<T>& store, std::vector<Var<T>> vars)
    : store_(&store), vars_(std::move(vars)) {
  if (vars_.size() != store.size()) {
    throw DimensionError("BoundParams: " + std::to_string(vars_.size()) + " variables for " +
                         std::to_string(store.size()) + " parameters");
  }
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].shape() != store.entries()[i].second.shape()) {
      throw DimensionError("BoundParams: shape mismatch for '" + store.entries()[i].first + "'");
    }
  }
}

template <typename T>
const Var<T>& BoundParams<T>::operator[](const std::string& name) const {
  return vars_[store_->index_of(name)];
}

template <typename T>
Var<T> BoundParams<T>::optional(const std::string& name) const {
  return contains(name) ? (*this)[name] : Var<T>();
}

template class ParamStore<float>;
template class ParamStore<double>;
template class BoundParams<float>;
template class BoundParams<double>;
template bool bit_equal(const ParamStore<float>&, const ParamStore<float>&);
template bool bit_equal(const ParamStore<double>&, const ParamStore<double>&);

}  // namespace tatr
