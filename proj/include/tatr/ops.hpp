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

#include "tatr/autograd.hpp"

namespace tatr {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kAlphaGuard = 1e-8;

// Elementwise ---------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
/// Sum of all elements, as a rank-0 scalar.
template <typename T>
Var<T> sum(const Var<T>& a);

/// x * Phi(x) with the exact (erf-based) normal CDF.
template <typename T>
Var<T> gelu(const Var<T>& x);

// Spatial -------------------------------------------------------------------

/// Stride-1 "same" convolution with zero padding (k-1)/2.
///
/// x: N x H x W x Cin, weight: k x k x (Cin/groups) x Cout, bias: Cout or
/// undefined. Groups split both channel ranges into contiguous slices.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t groups = 1);

/// N x H x W x C -> N x H/r x W/r x C*r*r with c_out = c_in*r*r + dy*r + dx.
template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, std::size_t r);
/// Inverse of pixel_unshuffle.
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r);

/// Channel concatenation, `a` first.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

// Normalization ---------------------------------------------------------------

template <typename T>
Var<T> softmax(const Var<T>& x, int axis = -1);

/// Per-pixel normalization over C with the biased variance, then
/// gamma * x_hat (+ beta). `beta` may be undefined (bias-free mode).
template <typename T>
Var<T> layer_norm_channel(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                          double eps = kLayerNormEps);

// Attention plumbing ---------------------------------------------------------

/// [..., M, K] x [..., K, P] -> [..., M, P]; batch extents equal or 1.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> transpose_last2(const Var<T>& x);

/// N x H x W x C -> N x heads x (H*W) x (C/heads), spatial index s = h*W + w.
template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads);
/// Inverse of split_heads.
template <typename T>
Var<T> merge_heads(const Var<T>& x, std::size_t height, std::size_t width);

/// x[n, h, ...] / alpha[h]. Raises NumericError when |alpha[h]| < 1e-8.
template <typename T>
Var<T> divide_by_head(const Var<T>& x, const Var<T>& alpha);

/// Unit L2 norm along axis 2 of an N x heads x S x c tensor.
template <typename T>
Var<T> l2_normalize_spatial(const Var<T>& x);

}  // namespace tatr
