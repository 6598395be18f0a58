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

#include <string>

namespace tatr {

template <typename T, typename MakeBackward>
Var<T> make_result(const char* op, Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   MakeBackward&& make_bw) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
  Tape<T>* tape = nullptr;
  for (const Var<T>* in : inputs) {
    if (in == nullptr || !in->requires_grad()) continue;
    if (tape == nullptr) {
      tape = in->tape();
    } else if (tape != in->tape()) {
      throw UsageError(std::string(op) + ": inputs recorded on different tapes");
    }
  }
  if (tape == nullptr) return Var<T>::constant(std::move(value));
  return tape->record(std::move(value), make_bw());
}

}  // namespace tatr
