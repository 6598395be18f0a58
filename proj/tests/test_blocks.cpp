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

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "tatr/blocks.hpp"
#include "tatr/gradcheck.hpp"

using namespace tatr;

namespace {

constexpr AttentionVariant kAttentions[] = {AttentionVariant::kMdta, AttentionVariant::kMta};
constexpr FfnVariant kFfns[] = {FfnVariant::kGdfn, FfnVariant::kGfn, FfnVariant::kDfn, FfnVariant::kFn};

template <typename T>
struct BlockFixture {
  BlockOptions options;
  std::size_t dim, heads;
  ParamStore<T> store;

  BlockFixture(std::size_t dim_, std::size_t heads_, BlockOptions o, std::uint64_t seed = 0)
      : options(o), dim(dim_), heads(heads_),
        store(ParamStore<T>::initialize(block_param_decls("", dim_, heads_, o), seed)) {}

  BlockParams<T> bind() const { return bind_block(BoundParams<T>(store, nullptr), "", dim, heads, options); }
};

// Pointwise identity for k x k x c x c weights with k = 1.
template <typename T>
void set_identity(Tensor<T>& w) {
  w.fill(T(0));
  const std::size_t c = w.dim(3);
  for (std::size_t i = 0; i < c; ++i) w[i * c + i] = T(1);
}

// Depthwise 3x3 kernel that copies its centre tap.
template <typename T>
void set_delta(Tensor<T>& w) {
  w.fill(T(0));
  const std::size_t c = w.dim(3);
  for (std::size_t i = 0; i < c; ++i) w[4 * c + i] = T(1);
}

}  // namespace

TEST_CASE("hidden width rounds gamma times width") {
  CHECK(ffn_hidden_width(8, 2.66) == 21);
  CHECK(ffn_hidden_width(48, 2.66) == 128);
  CHECK(ffn_hidden_width(1, 0.1) == 1);
  CHECK_THROWS_AS(ffn_hidden_width(8, 0.0), ConfigError);
}

TEST_CASE("parameter groups follow the variant") {
  for (AttentionVariant a : kAttentions) {
    for (FfnVariant f : kFfns) {
      BlockOptions o;
      o.attention = a;
      o.ffn = f;
      const auto decls = block_param_decls("", 8, 2, o);
      const auto has = [&](const std::string& n) {
        return std::any_of(decls.begin(), decls.end(), [&](const ParamDecl& d) { return d.name == n; });
      };
      CAPTURE(variant_label(a, f));
      CHECK(has("attn.q_dw.weight") == has_depthwise(a));
      CHECK(has("ffn.dw1.weight") == has_depthwise(f));
      CHECK(has("ffn.pw2.weight") == has_gate(f));
      CHECK(has("ffn.dw2.weight") == (has_gate(f) && has_depthwise(f)));
      CHECK_FALSE(has("norm1.beta"));
      CHECK_FALSE(has("attn.proj.bias"));
    }
  }
  CHECK_THROWS_AS(block_param_decls("", 6, 4, BlockOptions{}), ConfigError);
}

TEST_CASE("variant names parse and print") {
  CHECK(parse_attention_variant("MTA") == AttentionVariant::kMta);
  CHECK(parse_ffn_variant("GFN") == FfnVariant::kGfn);
  CHECK(to_string(FfnVariant::kDfn) == "DFN");
  CHECK_THROWS_AS(parse_ffn_variant("XFN"), ConfigError);
}

TEST_CASE("single-channel attention collapses to the residual") {
  BlockFixture<float> f(1, 1, BlockOptions{}, 3);
  const Tensor<float> x({1, 1, 1, 1}, {0.75f});
  const auto y = mdta_forward(Var<float>::constant(x), f.bind().attention, AttentionVariant::kMdta).value();
  CHECK(y == x);
}

TEST_CASE("channel attention matches a hand evaluation") {
  BlockFixture<double> f(2, 1, BlockOptions{});
  for (const char* n : {"attn.q_pw.weight", "attn.k_pw.weight", "attn.v_pw.weight", "attn.proj.weight"}) {
    set_identity(f.store.at(n));
  }
  for (const char* n : {"attn.q_dw.weight", "attn.k_dw.weight", "attn.v_dw.weight"}) set_delta(f.store.at(n));
  f.store.at("attn.alpha").fill(1.0);
  f.store.at("norm1.gamma").fill(1.0);

  const Tensor<double> x({1, 1, 1, 2}, {1.0, -1.0});
  std::vector<Tensor<double>> maps;
  const auto y = mdta_forward(Var<double>::constant(x), f.bind().attention, AttentionVariant::kMdta, false, &maps)
                     .value();

  // LN gives y = [a, -a]; Q = K = V = y. K^T Q = [[a^2, -a^2], [-a^2, a^2]].
  const double a = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  const double s = 1.0 / (1.0 + std::exp(-2.0 * a * a));  // softmax([a^2, -a^2])[0]
  REQUIRE(maps.size() == 1);
  CHECK(maps[0].shape() == Shape{1, 1, 2, 2});
  CHECK(maps[0][0] == doctest::Approx(s).epsilon(1e-12));
  CHECK(maps[0][1] == doctest::Approx(1 - s).epsilon(1e-12));
  CHECK(maps[0][2] == doctest::Approx(1 - s).epsilon(1e-12));
  CHECK(maps[0][3] == doctest::Approx(s).epsilon(1e-12));
  // V A = [a s - a (1 - s), a (1 - s) - a s], plus the residual.
  const double head = a * (2 * s - 1);
  CHECK(y[0] == doctest::Approx(1.0 + head).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(-1.0 - head).epsilon(1e-12));
}

TEST_CASE("attention map rows sum to one") {
  for (AttentionVariant v : kAttentions) {
    BlockOptions o;
    o.attention = v;
    BlockFixture<float> f(4, 2, o, 4);
    std::vector<Tensor<float>> maps;
    const auto x = oracle::random_tensor<float>({1, 8, 8, 4}, 5);
    mdta_forward(Var<float>::constant(x), f.bind().attention, v, false, &maps);
    REQUIRE(maps.size() == 1);
    const auto& m = maps[0];
    CHECK(m.shape() == Shape{1, 2, 2, 2});
    for (std::size_t r = 0; r < m.size() / 2; ++r) CHECK(std::abs(m[2 * r] + m[2 * r + 1] - 1.0f) < 1e-6);
  }
}

TEST_CASE("attention output ignores alpha when the score matrix is constant") {
  BlockFixture<double> f(4, 2, BlockOptions{}, 6);
  f.store.at("attn.q_pw.weight").fill(0.0);
  const auto x = oracle::random_tensor<double>({1, 5, 5, 4}, 7);
  f.store.at("attn.alpha").fill(0.3);
  const auto y1 = mdta_forward(Var<double>::constant(x), f.bind().attention, AttentionVariant::kMdta).value();
  f.store.at("attn.alpha").fill(7.0);
  const auto y2 = mdta_forward(Var<double>::constant(x), f.bind().attention, AttentionVariant::kMdta).value();
  CHECK(max_rel_diff(y1, y2) < 1e-14);
}

TEST_CASE("a vanishing temperature is a numeric error") {
  BlockFixture<float> f(4, 2, BlockOptions{}, 8);
  f.store.at("attn.alpha")[1] = 1e-9f;
  const auto x = oracle::random_tensor<float>({1, 4, 4, 4}, 9);
  CHECK_THROWS_AS(mdta_forward(Var<float>::constant(x), f.bind().attention, AttentionVariant::kMdta), NumericError);
}

TEST_CASE("feed-forward zero fixed point and constant collapse") {
  BlockFixture<float> f(8, 1, BlockOptions{}, 10);
  const Tensor<float> zero({1, 4, 4, 8});
  CHECK(gdfn_forward(Var<float>::constant(zero), f.bind().ffn, FfnVariant::kGdfn).value() == zero);

  BlockOptions o;
  o.ffn_gamma = 1.0;
  BlockFixture<float> g(1, 1, o, 11);
  for (auto& [name, t] : g.store.entries()) t.fill(1.0f);
  const auto c = Tensor<float>::full({1, 3, 3, 1}, 0.4f);
  CHECK(gdfn_forward(Var<float>::constant(c), g.bind().ffn, FfnVariant::kGdfn).value() == c);
}

TEST_CASE("gated feed-forward matches a composition of primitive ops") {
  BlockOptions o;
  o.bias_free = false;
  BlockFixture<float> f(8, 1, o, 12);
  for (auto& [name, t] : f.store.entries()) {
    if (name.ends_with(".beta") || name.ends_with(".bias")) t = oracle::random_tensor<float>(t.shape(), 13);
  }
  const auto p = f.bind().ffn;
  CHECK(p.hidden == 21);
  const auto xv = Var<float>::constant(oracle::random_tensor<float>({1, 4, 4, 8}, 14));
  const auto got = gdfn_forward(xv, p, FfnVariant::kGdfn).value();

  const BoundParams<float> b(f.store, nullptr);
  const auto conv = [&](const std::string& n, const Var<float>& in, std::size_t groups) {
    return conv2d(in, b[n + ".weight"], b.optional(n + ".bias"), groups);
  };
  const auto y = layer_norm_channel(xv, b["norm2.gamma"], b.optional("norm2.beta"));
  const auto left = gelu(conv("ffn.dw1", conv("ffn.pw1", y, 1), 21));
  const auto right = conv("ffn.dw2", conv("ffn.pw2", y, 1), 21);
  const auto want = add(xv, conv("ffn.out", mul(left, right), 1)).value();
  CHECK(max_rel_diff(got, want, 1e-6) < 1e-6);
}

TEST_CASE("every block variant preserves shape and the zero fixed point") {
  for (AttentionVariant a : kAttentions) {
    for (FfnVariant v : kFfns) {
      CAPTURE(variant_label(a, v));
      BlockOptions o;
      o.attention = a;
      o.ffn = v;
      BlockFixture<float> f(8, 2, o, 15);
      const auto x = oracle::random_tensor<float>({2, 6, 10, 8}, 16);
      CHECK(transformer_block_forward(Var<float>::constant(x), f.bind()).shape() == x.shape());
      const Tensor<float> zero({1, 8, 8, 8});
      const auto y = transformer_block_forward(Var<float>::constant(zero), f.bind()).value();
      for (float e : y.data()) CHECK(std::abs(e) < 1e-6f);
    }
  }
}

TEST_CASE("block gradients pass finite differences for all eight variants") {
  for (AttentionVariant a : kAttentions) {
    for (FfnVariant v : kFfns) {
      CAPTURE(variant_label(a, v));
      const auto r = block_grad_check(a, v);
      CHECK(r.max_rel_error < 1e-4);
      CHECK(r.coordinates_checked > 300);
    }
  }
}

TEST_CASE("spatial attention on one pixel has a unit map") {
  BlockOptions o;
  o.bias_free = false;
  BlockFixture<double> f(3, 1, o, 17);
  const auto x = oracle::random_tensor<double>({1, 1, 1, 3}, 18);
  Tensor<double> map;
  const auto p = f.bind().attention;
  const auto y = vanilla_spatial_attention(x, p, &map);
  CHECK(map == Tensor<double>({1, 1, 1, 1}, {1.0}));

  // Output is proj(V) + x with V from the pointwise projection of LN(x).
  const auto xv = Var<double>::constant(x);
  const auto ln = layer_norm_channel(xv, p.norm.gamma, p.norm.beta);
  const auto v = apply_conv(p.v_pw, ln);
  const auto want = add(xv, apply_conv(p.proj, v)).value();
  CHECK(max_rel_diff(y, want) < 1e-12);
}

TEST_CASE("spatial attention rows sum to one and the pixel guard holds") {
  BlockFixture<float> f(8, 2, BlockOptions{}, 19);
  const auto x = oracle::random_tensor<float>({1, 6, 5, 8}, 20);
  Tensor<float> map;
  const auto y = vanilla_spatial_attention(x, f.bind().attention, &map);
  CHECK(y.shape() == x.shape());
  CHECK(map.shape() == Shape{1, 2, 30, 30});
  for (std::size_t r = 0; r < 60; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 30; ++c) total += map[r * 30 + c];
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(vanilla_spatial_attention(Tensor<float>({1, 129, 128, 8}), f.bind().attention), ResourceError);
}
