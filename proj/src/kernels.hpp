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

// Raw loops behind the differentiable ops. Every reduction has one fixed
// order, so results are reproducible bit for bit on a given build.

#include <cstddef>

namespace tatr::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t groups = 1;

  std::size_t pad() const { return (kernel - 1) / 2; }
  bool depthwise() const { return groups > 1 && groups == in_channels && groups == out_channels; }
};

/// y = conv(x, w) (+ bias). Each output sums over (ky, kx, ci) in that order.
template <typename T>
void conv_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeometry& g);

/// dx += conv^T(dy, w). dx must be zero-initialised by the caller.
template <typename T>
void conv_backward_input(const T* dy, const T* w, T* dx, const ConvGeometry& g);

/// dw += sum over pixels of x (x) dy. dw must be zero-initialised.
template <typename T>
void conv_backward_weight(const T* x, const T* dy, T* dw, const ConvGeometry& g);

/// c[M,P] = a[M,K] * b[K,P]; summation over k left to right.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p);

/// c[K,P] = a[M,K]^T * b[M,P]; summation over m left to right.
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p);

/// c[M,P] = a[M,K] * b[P,K]^T; summation over k left to right.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t p);

/// out[cols, rows] = in[rows, cols]^T
template <typename T>
void transpose(const T* in, T* out, std::size_t rows, std::size_t cols);

}  // namespace tatr::kernels
