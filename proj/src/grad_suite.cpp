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
#include "tatr/network.hpp"
#include "tatr/random.hpp"

namespace tatr {

namespace {

// Gradients of the full model span about nine decades; below this magnitude
// the stencil's round-off (about 1e-10 absolute) dominates the comparison.
constexpr double kModelGradFloor = 1e-5;

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Moves every parameter off its initial value so no gradient path is degenerate.
void perturb(ParamStore<double>& store, Rng& rng) {
  for (auto& [name, t] : store.entries()) {
    const bool is_scale = name.ends_with(".gamma");
    const bool is_alpha = name.ends_with(".alpha");
    const bool is_shift = name.ends_with(".beta") || name.ends_with(".bias");
    for (double& v : t.data()) {
      if (is_scale) {
        v = 1.0 + 0.2 * rng.normal();
      } else if (is_alpha) {
        v = rng.uniform(2.0, 4.0);
      } else if (is_shift) {
        v = 0.1 * rng.normal();
      }
    }
  }
}

Var<double> weighted_sum(const Var<double>& out, const Var<double>& weights) { return sum(mul(out, weights)); }

template <typename Forward>
GradCheckReport check_with_params(const ParamStore<double>& store, const Tensor<double>& x, Rng& rng,
                                  Forward&& forward, std::size_t max_coords, double floor) {
  const Tensor<double> probe = random_tensor(x.shape(), rng);
  std::vector<Tensor<double>> inputs{x};
  for (const auto& [name, t] : store.entries()) inputs.push_back(t);
  const ScalarFunction f = [&](std::span<const Var<double>> v) {
    const BoundParams<double> bound(store, std::vector<Var<double>>(v.begin() + 1, v.end()));
    const Var<double> out = forward(bound, v[0]);
    return weighted_sum(out, Var<double>::constant(probe));
  };
  return grad_check(f, inputs, 1e-4, max_coords, floor);
}

}  // namespace

std::string variant_label(AttentionVariant attention, FfnVariant ffn) {
  return std::string(to_string(attention)) + "+" + std::string(to_string(ffn));
}

GradCheckReport block_grad_check(AttentionVariant attention, FfnVariant ffn, std::uint64_t seed) {
  constexpr std::size_t kDim = 4, kHeads = 2;
  BlockOptions o;
  o.attention = attention;
  o.ffn = ffn;
  o.bias_free = false;
  ParamStore<double> store = ParamStore<double>::initialize(block_param_decls("", kDim, kHeads, o), seed);
  Rng rng(derive_seed(seed, 0x6C0C));
  perturb(store, rng);
  const Tensor<double> x = random_tensor({1, 6, 6, kDim}, rng);
  return check_with_params(
      store, x, rng,
      [&](const BoundParams<double>& p, const Var<double>& in) {
        return transformer_block_forward(in, bind_block(p, "", kDim, kHeads, o));
      },
      std::numeric_limits<std::size_t>::max(), 1e-8);
}

GradCheckReport model_grad_check(std::uint64_t seed, std::size_t max_coords_per_input) {
  ModelConfig cfg;
  cfg.base_dim = 4;
  cfg.num_blocks = {1, 1, 1, 1};
  cfg.heads = {1, 1, 1, 1};
  cfg.refinement_blocks = 1;
  cfg.bias_free = false;
  ParamStore<double> store = ParamStore<double>::initialize(model_param_decls(cfg), seed);
  Rng rng(derive_seed(seed, 0x30DE1));
  perturb(store, rng);
  const Model<double> model(cfg, store);
  Tensor<double> x({1, 16, 16, 3});
  for (double& v : x.data()) v = rng.uniform();
  return check_with_params(
      store, x, rng, [&](const BoundParams<double>& p, const Var<double>& in) { return model.forward(p, in); },
      max_coords_per_input, kModelGradFloor);
}

std::vector<std::pair<std::string, GradCheckReport>> grad_suite(std::uint64_t seed) {
  std::vector<std::pair<std::string, GradCheckReport>> out;
  for (AttentionVariant a : {AttentionVariant::kMdta, AttentionVariant::kMta}) {
    for (FfnVariant f : {FfnVariant::kGdfn, FfnVariant::kGfn, FfnVariant::kDfn, FfnVariant::kFn}) {
      out.emplace_back(variant_label(a, f), block_grad_check(a, f, seed));
    }
  }
  out.emplace_back("model", model_grad_check(seed));
  return out;
}

}  // namespace tatr
