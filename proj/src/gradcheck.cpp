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

#include "tatr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tatr {

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs) {
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(Var<double>::constant(t));
  const Var<double> out = f(vars);
  if (out.value().size() != 1) throw UsageError("grad_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs, double eps,
                           std::size_t max_coords_per_input, double floor) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const Var<double> loss = f(leaves);
  tape.backward(loss);

  GradCheckReport report;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double>& analytic = leaves[k].grad();
    const std::size_t n = inputs[k].size();
    const std::size_t stride = std::max<std::size_t>(1, (n + max_coords_per_input - 1) / max_coords_per_input);
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = probe[k][i];
      auto at = [&](double offset) {
        probe[k][i] = saved + offset;
        return evaluate(f, probe);
      };
      const double numeric = (at(-2.0 * eps) - 8.0 * at(-eps) + 8.0 * at(eps) - at(2.0 * eps)) / (12.0 * eps);
      probe[k][i] = saved;

      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.coordinates_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = k;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x, double eps) {
  const ScalarFunction wrapped = [&f](std::span<const Var<double>> v) { return f(v[0]); };
  return grad_check(wrapped, {x}, eps).max_rel_error;
}

}  // namespace tatr
