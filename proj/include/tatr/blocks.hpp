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
#include <string_view>
#include <vector>

#include "tatr/ops.hpp"
#include "tatr/params.hpp"

namespace tatr {

/// MDTA: pointwise then depthwise Q/K/V projections. MTA: pointwise only.
enum class AttentionVariant { kMdta, kMta };

/// GDFN: gated, depthwise. GFN: gated. DFN: depthwise, ungated. FN: neither.
enum class FfnVariant { kGdfn, kGfn, kDfn, kFn };

std::string_view to_string(AttentionVariant v);
std::string_view to_string(FfnVariant v);
AttentionVariant parse_attention_variant(std::string_view name);
FfnVariant parse_ffn_variant(std::string_view name);

inline bool has_depthwise(AttentionVariant v) { return v == AttentionVariant::kMdta; }
inline bool has_depthwise(FfnVariant v) { return v == FfnVariant::kGdfn || v == FfnVariant::kDfn; }
inline bool has_gate(FfnVariant v) { return v == FfnVariant::kGdfn || v == FfnVariant::kGfn; }

struct BlockOptions {
  AttentionVariant attention = AttentionVariant::kMdta;
  FfnVariant ffn = FfnVariant::kGdfn;
  double ffn_gamma = 2.66;
  bool bias_free = true;
  bool qk_l2_normalize = false;
};

/// Hidden width of the feed-forward network: round(gamma * dim), at least 1.
std::size_t ffn_hidden_width(std::size_t dim, double gamma);

// Parameter layout ------------------------------------------------------------

/// `prefix.weight` (k x k x cin/groups x cout) and, unless bias-free, `prefix.bias`.
void declare_conv(std::vector<ParamDecl>& out, const std::string& prefix, std::size_t kernel,
                  std::size_t in_per_group, std::size_t out_channels, bool bias_free);

/// Every parameter of one transformer block, in canonical order:
/// norm1, attention (q/k/v pointwise, q/k/v depthwise, alpha, proj), norm2,
/// ffn (pw1, dw1, pw2, dw2, out). Absent weight groups are skipped.
std::vector<ParamDecl> block_param_decls(const std::string& prefix, std::size_t dim, std::size_t heads,
                                         const BlockOptions& options);

// Bound parameters ------------------------------------------------------------

template <typename T>
struct ConvParams {
  Var<T> weight;
  Var<T> bias;  // undefined when bias-free
  std::size_t groups = 1;
};

template <typename T>
struct NormParams {
  Var<T> gamma;
  Var<T> beta;  // undefined when bias-free
};

template <typename T>
struct AttentionParams {
  NormParams<T> norm;
  ConvParams<T> q_pw, k_pw, v_pw;
  ConvParams<T> q_dw, k_dw, v_dw;  // unused by MTA
  Var<T> alpha;                    // one temperature per head
  ConvParams<T> proj;
  std::size_t heads = 1;
};

template <typename T>
struct FfnParams {
  NormParams<T> norm;
  ConvParams<T> pw1, dw1, pw2, dw2;
  ConvParams<T> out;
  std::size_t hidden = 1;
};

template <typename T>
struct BlockParams {
  AttentionParams<T> attention;
  FfnParams<T> ffn;
  BlockOptions options;
};

template <typename T>
ConvParams<T> bind_conv(const BoundParams<T>& params, const std::string& prefix, std::size_t groups = 1);

template <typename T>
BlockParams<T> bind_block(const BoundParams<T>& params, const std::string& prefix, std::size_t dim,
                          std::size_t heads, const BlockOptions& options);

template <typename T>
Var<T> apply_conv(const ConvParams<T>& conv, const Var<T>& x);

// Forwards ----------------------------------------------------------------------

/// x + proj(V_hat . softmax(K_hat . Q_hat / alpha)) per head, over LN(x).
/// When `maps` is given, each head's C/heads x C/heads attention map is
/// appended as an N x heads x c x c tensor.
template <typename T>
Var<T> mdta_forward(const Var<T>& x, const AttentionParams<T>& p, AttentionVariant variant,
                    bool qk_l2_normalize = false, std::vector<Tensor<T>>* maps = nullptr);

/// x + out(gate(LN(x))) for the selected feed-forward variant.
template <typename T>
Var<T> gdfn_forward(const Var<T>& x, const FfnParams<T>& p, FfnVariant variant);

template <typename T>
Var<T> transformer_block_forward(const Var<T>& x, const BlockParams<T>& p);

inline constexpr std::size_t kSpatialAttentionMaxPixels = 16384;

/// Standard spatial self-attention with an (HW) x (HW) map per head.
/// Forward only; the map is evaluated in row blocks. Uses the pointwise
/// projections, alpha and proj of `p`; depthwise weights are ignored.
/// `map`, when non-null, receives the full N x heads x HW x HW map.
template <typename T>
Tensor<T> vanilla_spatial_attention(const Tensor<T>& x, const AttentionParams<T>& p, Tensor<T>* map = nullptr);

}  // namespace tatr
