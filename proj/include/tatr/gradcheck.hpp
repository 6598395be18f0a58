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
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tatr/autograd.hpp"
#include "tatr/blocks.hpp"

namespace tatr {

/// Scalar-valued function of several tensors, evaluated through the tape.
using ScalarFunction = std::function<Var<double>(std::span<const Var<double>>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares reverse-mode gradients with fourth-order central differences
/// (f(x - 2h) - 8 f(x - h) + 8 f(x + h) - f(x + 2h)) / 12h along each
/// probed coordinate, h = eps.
///
/// The error per coordinate is |analytic - numeric| / max(|analytic|,
/// |numeric|, floor), so gradients well below `floor` are compared in
/// absolute terms. At most `max_coords_per_input` evenly spaced
/// coordinates of each input are probed.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs, double eps = 1e-4,
                           std::size_t max_coords_per_input = std::numeric_limits<std::size_t>::max(),
                           double floor = 1e-8);

/// Single-input form; returns the max relative error.
double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
                  double eps = 1e-4);

// Gradient suite ----------------------------------------------------------------

/// Block variant label such as "MDTA+GDFN".
std::string variant_label(AttentionVariant attention, FfnVariant ffn);

/// One transformer block (width 4, 2 heads, with biases) on a 1 x 6 x 6 x 4
/// input; every input and parameter coordinate is probed against the
/// weighted sum of the block output.
GradCheckReport block_grad_check(AttentionVariant attention, FfnVariant ffn, std::uint64_t seed = 0);

/// The tiny end-to-end model (base width 4, one block per stage) on a
/// 1 x 16 x 16 x 3 input, probing up to `max_coords_per_input` coordinates
/// of the image and of each parameter tensor. Errors use a 1e-5 floor, so
/// coordinates whose gradient is below 1e-5 must agree to 1e-9 absolute.
GradCheckReport model_grad_check(std::uint64_t seed = 0, std::size_t max_coords_per_input = 16);

/// All eight block variants followed by the tiny model, labelled.
std::vector<std::pair<std::string, GradCheckReport>> grad_suite(std::uint64_t seed = 0);

}  // namespace tatr
