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

#include "tatr/blocks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "kernels.hpp"

namespace tatr {

std::string_view to_string(AttentionVariant v) {
  return v == AttentionVariant::kMdta ? "MDTA" : "MTA";
}

std::string_view to_string(FfnVariant v) {
  switch (v) {
    case FfnVariant::kGdfn:
      return "GDFN";
    case FfnVariant::kGfn:
      return "GFN";
    case FfnVariant::kDfn:
      return "DFN";
    case FfnVariant::kFn:
      return "FN";
  }
  return "?";
}

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

}  // namespace

AttentionVariant parse_attention_variant(std::string_view name) {
  const std::string u = upper(name);
  if (u == "MDTA") return AttentionVariant::kMdta;
  if (u == "MTA") return AttentionVariant::kMta;
  throw ConfigError("unknown attention variant '" + std::string(name) + "'");
}

FfnVariant parse_ffn_variant(std::string_view name) {
  const std::string u = upper(name);
  if (u == "GDFN") return FfnVariant::kGdfn;
  if (u == "GFN") return FfnVariant::kGfn;
  if (u == "DFN") return FfnVariant::kDfn;
  if (u == "FN") return FfnVariant::kFn;
  throw ConfigError("unknown feed-forward variant '" + std::string(name) + "'");
}

std::size_t ffn_hidden_width(std::size_t dim, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("ffn_gamma must be positive");
  const double h = std::round(gamma * static_cast<double>(dim));
  return std::max<std::size_t>(1, static_cast<std::size_t>(h));
}

void declare_conv(std::vector<ParamDecl>& out, const std::string& prefix, std::size_t kernel,
                  std::size_t in_per_group, std::size_t out_channels, bool bias_free) {
  const std::size_t fan_in = kernel * kernel * in_per_group;
  out.push_back({prefix + ".weight", {kernel, kernel, in_per_group, out_channels}, InitKind::kFanInUniform, fan_in});
  if (!bias_free) out.push_back({prefix + ".bias", {out_channels}, InitKind::kZeros, fan_in});
}

namespace {

void declare_norm(std::vector<ParamDecl>& out, const std::string& prefix, std::size_t dim, bool bias_free) {
  out.push_back({prefix + ".gamma", {dim}, InitKind::kOnes, dim});
  if (!bias_free) out.push_back({prefix + ".beta", {dim}, InitKind::kZeros, dim});
}

}  // namespace

std::vector<ParamDecl> block_param_decls(const std::string& prefix, std::size_t dim, std::size_t heads,
                                         const BlockOptions& o) {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError(prefix + ": " + std::to_string(heads) + " heads do not divide width " + std::to_string(dim));
  }
  const std::size_t hidden = ffn_hidden_width(dim, o.ffn_gamma);
  std::vector<ParamDecl> d;
  declare_norm(d, prefix + "norm1", dim, o.bias_free);
  for (const char* branch : {"q", "k", "v"}) {
    declare_conv(d, prefix + "attn." + branch + "_pw", 1, dim, dim, o.bias_free);
  }
  if (has_depthwise(o.attention)) {
    for (const char* branch : {"q", "k", "v"}) {
      declare_conv(d, prefix + "attn." + branch + "_dw", 3, 1, dim, o.bias_free);
    }
  }
  d.push_back({prefix + "attn.alpha", {heads}, InitKind::kOnes, 1});
  declare_conv(d, prefix + "attn.proj", 1, dim, dim, o.bias_free);

  declare_norm(d, prefix + "norm2", dim, o.bias_free);
  declare_conv(d, prefix + "ffn.pw1", 1, dim, hidden, o.bias_free);
  if (has_depthwise(o.ffn)) declare_conv(d, prefix + "ffn.dw1", 3, 1, hidden, o.bias_free);
  if (has_gate(o.ffn)) {
    declare_conv(d, prefix + "ffn.pw2", 1, dim, hidden, o.bias_free);
    if (has_depthwise(o.ffn)) declare_conv(d, prefix + "ffn.dw2", 3, 1, hidden, o.bias_free);
  }
  declare_conv(d, prefix + "ffn.out", 1, hidden, dim, o.bias_free);
  return d;
}

template <typename T>
ConvParams<T> bind_conv(const BoundParams<T>& params, const std::string& prefix, std::size_t groups) {
  return {params[prefix + ".weight"], params.optional(prefix + ".bias"), groups};
}

namespace {

template <typename T>
NormParams<T> bind_norm(const BoundParams<T>& params, const std::string& prefix) {
  return {params[prefix + ".gamma"], params.optional(prefix + ".beta")};
}

}  // namespace

template <typename T>
BlockParams<T> bind_block(const BoundParams<T>& params, const std::string& prefix, std::size_t dim,
                          std::size_t heads, const BlockOptions& o) {
  BlockParams<T> b;
  b.options = o;
  AttentionParams<T>& a = b.attention;
  a.heads = heads;
  a.norm = bind_norm(params, prefix + "norm1");
  a.q_pw = bind_conv(params, prefix + "attn.q_pw");
  a.k_pw = bind_conv(params, prefix + "attn.k_pw");
  a.v_pw = bind_conv(params, prefix + "attn.v_pw");
  if (has_depthwise(o.attention)) {
    a.q_dw = bind_conv(params, prefix + "attn.q_dw", dim);
    a.k_dw = bind_conv(params, prefix + "attn.k_dw", dim);
    a.v_dw = bind_conv(params, prefix + "attn.v_dw", dim);
  }
  a.alpha = params[prefix + "attn.alpha"];
  a.proj = bind_conv(params, prefix + "attn.proj");

  FfnParams<T>& f = b.ffn;
  f.hidden = ffn_hidden_width(dim, o.ffn_gamma);
  f.norm = bind_norm(params, prefix + "norm2");
  f.pw1 = bind_conv(params, prefix + "ffn.pw1");
  if (has_depthwise(o.ffn)) f.dw1 = bind_conv(params, prefix + "ffn.dw1", f.hidden);
  if (has_gate(o.ffn)) {
    f.pw2 = bind_conv(params, prefix + "ffn.pw2");
    if (has_depthwise(o.ffn)) f.dw2 = bind_conv(params, prefix + "ffn.dw2", f.hidden);
  }
  f.out = bind_conv(params, prefix + "ffn.out");
  return b;
}

template <typename T>
Var<T> apply_conv(const ConvParams<T>& conv, const Var<T>& x) {
  return conv2d(x, conv.weight, conv.bias, conv.groups);
}

template <typename T>
Var<T> mdta_forward(const Var<T>& x, const AttentionParams<T>& p, AttentionVariant variant, bool qk_l2_normalize,
                    std::vector<Tensor<T>>* maps) {
  require_nhwc(x.value(), "mdta_forward");
  const std::size_t height = x.shape()[1], width = x.shape()[2], channels = x.shape()[3];
  if (p.heads == 0 || channels % p.heads != 0) {
    throw ConfigError("mdta: " + std::to_string(p.heads) + " heads do not divide " + std::to_string(channels) +
                      " channels");
  }
  const Var<T> y = layer_norm_channel(x, p.norm.gamma, p.norm.beta);
  auto project = [&](const ConvParams<T>& pw, const ConvParams<T>& dw) {
    Var<T> t = apply_conv(pw, y);
    if (has_depthwise(variant)) t = apply_conv(dw, t);
    return split_heads(t, p.heads);
  };
  Var<T> q = project(p.q_pw, p.q_dw);
  Var<T> k = project(p.k_pw, p.k_dw);
  const Var<T> v = project(p.v_pw, p.v_dw);
  if (qk_l2_normalize) {
    q = l2_normalize_spatial(q);
    k = l2_normalize_spatial(k);
  }
  // (c x HW) . (HW x c) per head: the transposed map never depends on H*W.
  const Var<T> logits = divide_by_head(matmul(transpose_last2(k), q), p.alpha);
  const Var<T> attn = softmax(logits, -1);
  if (maps) maps->push_back(attn.value());
  const Var<T> mixed = merge_heads(matmul(v, attn), height, width);
  return add(x, apply_conv(p.proj, mixed));
}

template <typename T>
Var<T> gdfn_forward(const Var<T>& x, const FfnParams<T>& p, FfnVariant variant) {
  require_nhwc(x.value(), "gdfn_forward");
  const Var<T> y = layer_norm_channel(x, p.norm.gamma, p.norm.beta);
  Var<T> hidden = apply_conv(p.pw1, y);
  if (has_depthwise(variant)) hidden = apply_conv(p.dw1, hidden);
  hidden = gelu(hidden);
  if (has_gate(variant)) {
    Var<T> gate = apply_conv(p.pw2, y);
    if (has_depthwise(variant)) gate = apply_conv(p.dw2, gate);
    hidden = mul(hidden, gate);
  }
  return add(x, apply_conv(p.out, hidden));
}

template <typename T>
Var<T> transformer_block_forward(const Var<T>& x, const BlockParams<T>& p) {
  const Var<T> mid = mdta_forward(x, p.attention, p.options.attention, p.options.qk_l2_normalize);
  return gdfn_forward(mid, p.ffn, p.options.ffn);
}

template <typename T>
Tensor<T> vanilla_spatial_attention(const Tensor<T>& x, const AttentionParams<T>& p, Tensor<T>* map) {
  require_nhwc(x, "vanilla_spatial_attention");
  const std::size_t batch = x.dim(0), height = x.dim(1), width = x.dim(2), channels = x.dim(3);
  const std::size_t spatial = height * width;
  if (spatial > kSpatialAttentionMaxPixels) {
    throw ResourceError("spatial attention: " + std::to_string(spatial) + " pixels exceeds the limit of " +
                        std::to_string(kSpatialAttentionMaxPixels));
  }
  if (p.heads == 0 || channels % p.heads != 0) {
    throw ConfigError("spatial attention: heads do not divide channels");
  }
  const std::size_t heads = p.heads, c = channels / heads;
  const Var<T> input = Var<T>::constant(x);
  const Var<T> y = layer_norm_channel(input, p.norm.gamma, p.norm.beta);
  const Tensor<T> q = split_heads(apply_conv(p.q_pw, y), heads).value();
  const Tensor<T> k = split_heads(apply_conv(p.k_pw, y), heads).value();
  const Tensor<T> v = split_heads(apply_conv(p.v_pw, y), heads).value();
  const Tensor<T>& alpha = p.alpha.value();
  if (map) *map = Tensor<T>({batch, heads, spatial, spatial});

  constexpr std::size_t kRowBlock = 64;
  Tensor<T> mixed({batch, heads, spatial, c});
  std::vector<T> kt(c * spatial), scores(kRowBlock * spatial);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t h = 0; h < heads; ++h) {
      if (!(std::abs(alpha[h]) >= T(kAlphaGuard))) throw NumericError("spatial attention: |alpha| below 1e-8");
      const std::size_t off = (n * heads + h) * spatial * c;
      kernels::transpose(k.ptr() + off, kt.data(), spatial, c);
      for (std::size_t r0 = 0; r0 < spatial; r0 += kRowBlock) {
        const std::size_t rows = std::min(kRowBlock, spatial - r0);
        kernels::gemm_nn(q.ptr() + off + r0 * c, kt.data(), scores.data(), rows, c, spatial);
        for (std::size_t r = 0; r < rows; ++r) {
          T* row = scores.data() + r * spatial;
          T peak = row[0] / alpha[h];
          for (std::size_t j = 0; j < spatial; ++j) {
            row[j] /= alpha[h];
            peak = std::max(peak, row[j]);
          }
          T total = T(0);
          for (std::size_t j = 0; j < spatial; ++j) {
            row[j] = std::exp(row[j] - peak);
            total += row[j];
          }
          for (std::size_t j = 0; j < spatial; ++j) row[j] /= total;
          if (map) std::copy_n(row, spatial, map->ptr() + ((n * heads + h) * spatial + r0 + r) * spatial);
        }
        kernels::gemm_nn(scores.data(), v.ptr() + off, mixed.ptr() + off + r0 * c, rows, spatial, c);
      }
    }
  }
  const Var<T> merged = merge_heads(Var<T>::constant(std::move(mixed)), height, width);
  return add(input, apply_conv(p.proj, merged)).value();
}

#define TATR_INSTANTIATE(T)                                                                                      \
  template ConvParams<T> bind_conv(const BoundParams<T>&, const std::string&, std::size_t);                     \
  template BlockParams<T> bind_block(const BoundParams<T>&, const std::string&, std::size_t, std::size_t,       \
                                     const BlockOptions&);                                                      \
  template Var<T> apply_conv(const ConvParams<T>&, const Var<T>&);                                              \
  template Var<T> mdta_forward(const Var<T>&, const AttentionParams<T>&, AttentionVariant, bool,                \
                               std::vector<Tensor<T>>*);                                                        \
  template Var<T> gdfn_forward(const Var<T>&, const FfnParams<T>&, FfnVariant);                                 \
  template Var<T> transformer_block_forward(const Var<T>&, const BlockParams<T>&);                              \
  template Tensor<T> vanilla_spatial_attention(const Tensor<T>&, const AttentionParams<T>&, Tensor<T>*);

TATR_INSTANTIATE(float)
TATR_INSTANTIATE(double)

#undef TATR_INSTANTIATE

}  // namespace tatr
