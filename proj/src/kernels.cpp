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

#include "kernels.hpp"

#include <algorithm>
#include <vector>

namespace tatr::kernels {

namespace {

using std::ptrdiff_t;
using std::size_t;

// Range of output columns whose tap `kx` lands inside the image.
inline void valid_columns(size_t width, size_t kx, size_t pad, size_t& lo, size_t& hi) {
  const ptrdiff_t shift = static_cast<ptrdiff_t>(kx) - static_cast<ptrdiff_t>(pad);
  const ptrdiff_t w = static_cast<ptrdiff_t>(width);
  lo = static_cast<size_t>(std::clamp<ptrdiff_t>(-shift, 0, w));
  hi = static_cast<size_t>(std::clamp<ptrdiff_t>(w - shift, 0, w));
}

inline bool tap_row(size_t row, size_t k, size_t pad, size_t height, size_t& src) {
  const ptrdiff_t r = static_cast<ptrdiff_t>(row) + static_cast<ptrdiff_t>(k) - static_cast<ptrdiff_t>(pad);
  if (r < 0 || r >= static_cast<ptrdiff_t>(height)) return false;
  src = static_cast<size_t>(r);
  return true;
}

// Reverse tap: which output row reads input row `row` through tap `k`.
inline bool tap_row_back(size_t row, size_t k, size_t pad, size_t height, size_t& dst) {
  const ptrdiff_t r = static_cast<ptrdiff_t>(row) - static_cast<ptrdiff_t>(k) + static_cast<ptrdiff_t>(pad);
  if (r < 0 || r >= static_cast<ptrdiff_t>(height)) return false;
  dst = static_cast<size_t>(r);
  return true;
}

constexpr size_t kPanel = 32;
constexpr size_t kRows = 8;
constexpr size_t kChunkFloats = size_t(1) << 18;

// Copies b[k, n] into column panels of width kPanel, zero-padding the last.
// With `transposed`, b is stored as [n, k] with row stride ldb.
template <typename T>
void pack_panels(const T* b, size_t ldb, size_t k, size_t n, std::vector<T>& packed, bool transposed = false) {
  const size_t panels = (n + kPanel - 1) / kPanel;
  packed.assign(panels * k * kPanel, T(0));
  for (size_t p = 0; p < panels; ++p) {
    const size_t j0 = p * kPanel, width = std::min(kPanel, n - j0);
    T* dst = packed.data() + p * k * kPanel;
    if (transposed) {
      for (size_t j = 0; j < width; ++j) {
        const T* src = b + (j0 + j) * ldb;
        for (size_t kk = 0; kk < k; ++kk) dst[kk * kPanel + j] = src[kk];
      }
    } else {
      for (size_t kk = 0; kk < k; ++kk) std::copy_n(b + kk * ldb + j0, width, dst + kk * kPanel);
    }
  }
}

// Element (i, kk) of the left operand lives at a[i * row_stride + kk * k_stride].
struct Strides {
  size_t row;
  size_t k;
};

// c[MR, kPanel] += a[MR, k] * panel[k, kPanel]
template <typename T, size_t MR>
inline void micro_kernel(const T* a, Strides sa, const T* panel, size_t k, T* c, size_t ldc) {
  T acc[MR][kPanel];
  for (size_t i = 0; i < MR; ++i) {
    for (size_t j = 0; j < kPanel; ++j) acc[i][j] = c[i * ldc + j];
  }
  for (size_t kk = 0; kk < k; ++kk) {
    const T* brow = panel + kk * kPanel;
    for (size_t i = 0; i < MR; ++i) {
      const T av = a[i * sa.row + kk * sa.k];
      for (size_t j = 0; j < kPanel; ++j) acc[i][j] += av * brow[j];
    }
  }
  for (size_t i = 0; i < MR; ++i) {
    for (size_t j = 0; j < kPanel; ++j) c[i * ldc + j] = acc[i][j];
  }
}

template <typename T, size_t MR>
inline void tile(const T* a, Strides sa, const T* panel, size_t k, T* c, size_t ldc, size_t width, bool accumulate) {
  if (width == kPanel) {
    if (!accumulate) {
      for (size_t i = 0; i < MR; ++i) std::fill_n(c + i * ldc, kPanel, T(0));
    }
    micro_kernel<T, MR>(a, sa, panel, k, c, ldc);
    return;
  }
  T buf[MR * kPanel] = {};
  if (accumulate) {
    for (size_t i = 0; i < MR; ++i) std::copy_n(c + i * ldc, width, buf + i * kPanel);
  }
  micro_kernel<T, MR>(a, sa, panel, k, buf, kPanel);
  for (size_t i = 0; i < MR; ++i) std::copy_n(buf + i * kPanel, width, c + i * ldc);
}

// c[m, n] (+)= a[m, k] * b[k, n] with b already packed. Each output sums
// over k left to right, starting from 0 or from the existing value.
template <typename T>
void gemm_packed(const T* a, Strides sa, const std::vector<T>& packed, T* c, size_t ldc, size_t m, size_t k,
                 size_t n, bool accumulate) {
  const size_t panels = (n + kPanel - 1) / kPanel;
  for (size_t p = 0; p < panels; ++p) {
    const size_t j0 = p * kPanel, width = std::min(kPanel, n - j0);
    const T* panel = packed.data() + p * k * kPanel;
    size_t i = 0;
    for (; i + kRows <= m; i += kRows) tile<T, kRows>(a + i * sa.row, sa, panel, k, c + i * ldc + j0, ldc, width, accumulate);
    for (; i < m; ++i) tile<T, 1>(a + i * sa.row, sa, panel, k, c + i * ldc + j0, ldc, width, accumulate);
  }
}

template <typename T>
void gemm(const T* a, const T* b, T* c, size_t m, size_t k, size_t n, bool accumulate) {
  std::vector<T> packed;
  pack_panels(b, n, k, n, packed);
  gemm_packed(a, Strides{k, 1}, packed, c, n, m, k, n, accumulate);
}

// Pixels per chunk so that one chunk of the patch matrix stays cache sized.
inline size_t chunk_pixels(size_t row_len) { return std::max<size_t>(64, kChunkFloats / std::max<size_t>(row_len, 1)); }

// Patch matrix rows for pixels [p0, p1): row p holds, for every tap (ky, kx),
// the src channels at (y + sign*(ky - P), x + sign*(kx - P)), or zeros.
template <typename T>
void gather_patches(const T* src, size_t channels, const ConvGeometry& g, bool flipped, size_t p0, size_t p1,
                    T* col) {
  const size_t H = g.height, W = g.width, K = g.kernel;
  const ptrdiff_t P = static_cast<ptrdiff_t>(g.pad());
  const size_t row_len = K * K * channels;
  for (size_t p = p0; p < p1; ++p) {
    const size_t n = p / (H * W), y = (p / W) % H, x = p % W;
    T* dst = col + (p - p0) * row_len;
    for (size_t ky = 0; ky < K; ++ky) {
      const ptrdiff_t dy = flipped ? P - static_cast<ptrdiff_t>(ky) : static_cast<ptrdiff_t>(ky) - P;
      const ptrdiff_t sy = static_cast<ptrdiff_t>(y) + dy;
      for (size_t kx = 0; kx < K; ++kx, dst += channels) {
        const ptrdiff_t dx = flipped ? P - static_cast<ptrdiff_t>(kx) : static_cast<ptrdiff_t>(kx) - P;
        const ptrdiff_t sx = static_cast<ptrdiff_t>(x) + dx;
        if (sy < 0 || sy >= static_cast<ptrdiff_t>(H) || sx < 0 || sx >= static_cast<ptrdiff_t>(W)) {
          std::fill_n(dst, channels, T(0));
        } else {
          std::copy_n(src + ((n * H + static_cast<size_t>(sy)) * W + static_cast<size_t>(sx)) * channels, channels,
                      dst);
        }
      }
    }
  }
}

template <typename T>
void init_output(T* y, const T* bias, size_t pixels, size_t channels) {
  for (size_t p = 0; p < pixels; ++p) {
    T* yp = y + p * channels;
    if (bias) {
      std::copy(bias, bias + channels, yp);
    } else {
      std::fill(yp, yp + channels, T(0));
    }
  }
}

template <typename T>
void dense_forward(const T* x, const T* w, T* y, const ConvGeometry& g) {
  const size_t pixels = g.batch * g.height * g.width, Co = g.out_channels;
  const size_t row_len = g.kernel * g.kernel * g.in_channels;
  std::vector<T> packed;
  pack_panels(w, Co, row_len, Co, packed);
  if (g.kernel == 1) {
    gemm_packed(x, Strides{row_len, 1}, packed, y, Co, pixels, row_len, Co, true);
    return;
  }
  const size_t chunk = chunk_pixels(row_len);
  std::vector<T> col(chunk * row_len);
  for (size_t p0 = 0; p0 < pixels; p0 += chunk) {
    const size_t p1 = std::min(pixels, p0 + chunk);
    gather_patches(x, g.in_channels, g, false, p0, p1, col.data());
    gemm_packed(col.data(), Strides{row_len, 1}, packed, y + p0 * Co, Co, p1 - p0, row_len, Co, true);
  }
}

template <typename T>
void depthwise_forward(const T* x, const T* w, T* y, const ConvGeometry& g) {
  const size_t H = g.height, W = g.width, C = g.in_channels, K = g.kernel, P = g.pad();
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t oy = 0; oy < H; ++oy) {
      T* yrow = y + (n * H + oy) * W * C;
      for (size_t ky = 0; ky < K; ++ky) {
        size_t iy;
        if (!tap_row(oy, ky, P, H, iy)) continue;
        const T* xrow = x + (n * H + iy) * W * C;
        for (size_t kx = 0; kx < K; ++kx) {
          size_t lo, hi;
          valid_columns(W, kx, P, lo, hi);
          const T* wr = w + (ky * K + kx) * C;
          for (size_t ox = lo; ox < hi; ++ox) {
            const T* xp = xrow + (ox + kx - P) * C;
            T* yp = yrow + ox * C;
            for (size_t c = 0; c < C; ++c) yp[c] += xp[c] * wr[c];
          }
        }
      }
    }
  }
}

template <typename T>
void grouped_forward(const T* x, const T* w, T* y, const ConvGeometry& g) {
  const size_t H = g.height, W = g.width, Ci = g.in_channels, Co = g.out_channels, K = g.kernel;
  const size_t P = g.pad(), cig = Ci / g.groups, cog = Co / g.groups;
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t oy = 0; oy < H; ++oy) {
      for (size_t ox = 0; ox < W; ++ox) {
        T* yp = y + ((n * H + oy) * W + ox) * Co;
        for (size_t ky = 0; ky < K; ++ky) {
          size_t iy, ix;
          if (!tap_row(oy, ky, P, H, iy)) continue;
          for (size_t kx = 0; kx < K; ++kx) {
            if (!tap_row(ox, kx, P, W, ix)) continue;
            const T* xp = x + ((n * H + iy) * W + ix) * Ci;
            for (size_t grp = 0; grp < g.groups; ++grp) {
              for (size_t ci = 0; ci < cig; ++ci) {
                const T v = xp[grp * cig + ci];
                const T* wr = w + ((ky * K + kx) * cig + ci) * Co + grp * cog;
                for (size_t co = 0; co < cog; ++co) yp[grp * cog + co] += v * wr[co];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void dense_backward_input(const T* dy, const T* w, T* dx, const ConvGeometry& g) {
  const size_t pixels = g.batch * g.height * g.width, Ci = g.in_channels, Co = g.out_channels, K = g.kernel;
  const size_t row_len = K * K * Co;
  // Per tap, the Ci x Co block transposed to Co x Ci.
  std::vector<T> wt(K * K * Ci * Co);
  for (size_t t = 0; t < K * K; ++t) transpose(w + t * Ci * Co, wt.data() + t * Ci * Co, Ci, Co);
  std::vector<T> packed;
  pack_panels(wt.data(), Ci, row_len, Ci, packed);
  if (K == 1) {
    gemm_packed(dy, Strides{row_len, 1}, packed, dx, Ci, pixels, row_len, Ci, true);
    return;
  }
  const size_t chunk = chunk_pixels(row_len);
  std::vector<T> col(chunk * row_len);
  for (size_t p0 = 0; p0 < pixels; p0 += chunk) {
    const size_t p1 = std::min(pixels, p0 + chunk);
    gather_patches(dy, Co, g, true, p0, p1, col.data());
    gemm_packed(col.data(), Strides{row_len, 1}, packed, dx + p0 * Ci, Ci, p1 - p0, row_len, Ci, true);
  }
}

template <typename T>
void depthwise_backward_input(const T* dy, const T* w, T* dx, const ConvGeometry& g) {
  const size_t H = g.height, W = g.width, C = g.in_channels, K = g.kernel, P = g.pad();
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t iy = 0; iy < H; ++iy) {
      T* dxrow = dx + (n * H + iy) * W * C;
      for (size_t ky = 0; ky < K; ++ky) {
        size_t oy;
        if (!tap_row_back(iy, ky, P, H, oy)) continue;
        const T* dyrow = dy + (n * H + oy) * W * C;
        for (size_t kx = 0; kx < K; ++kx) {
          size_t lo, hi;
          valid_columns(W, K - 1 - kx, P, lo, hi);
          const T* wr = w + (ky * K + kx) * C;
          for (size_t ix = lo; ix < hi; ++ix) {
            const T* dyp = dyrow + (ix + P - kx) * C;
            T* dxp = dxrow + ix * C;
            for (size_t c = 0; c < C; ++c) dxp[c] += dyp[c] * wr[c];
          }
        }
      }
    }
  }
}

template <typename T>
void grouped_backward_input(const T* dy, const T* w, T* dx, const ConvGeometry& g) {
  const size_t H = g.height, W = g.width, Ci = g.in_channels, Co = g.out_channels, K = g.kernel;
  const size_t P = g.pad(), cig = Ci / g.groups, cog = Co / g.groups;
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t iy = 0; iy < H; ++iy) {
      for (size_t ix = 0; ix < W; ++ix) {
        T* dxp = dx + ((n * H + iy) * W + ix) * Ci;
        for (size_t ky = 0; ky < K; ++ky) {
          size_t oy, ox;
          if (!tap_row_back(iy, ky, P, H, oy)) continue;
          for (size_t kx = 0; kx < K; ++kx) {
            if (!tap_row_back(ix, kx, P, W, ox)) continue;
            const T* dyp = dy + ((n * H + oy) * W + ox) * Co;
            for (size_t grp = 0; grp < g.groups; ++grp) {
              for (size_t ci = 0; ci < cig; ++ci) {
                const T* wr = w + ((ky * K + kx) * cig + ci) * Co + grp * cog;
                T acc = T(0);
                for (size_t co = 0; co < cog; ++co) acc += dyp[grp * cog + co] * wr[co];
                dxp[grp * cig + ci] += acc;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void dense_backward_weight(const T* x, const T* dy, T* dw, const ConvGeometry& g) {
  const size_t pixels = g.batch * g.height * g.width, Co = g.out_channels;
  const size_t row_len = g.kernel * g.kernel * g.in_channels;
  const size_t chunk = chunk_pixels(std::max(row_len, Co));
  std::vector<T> col(g.kernel == 1 ? 0 : chunk * row_len), packed;
  for (size_t p0 = 0; p0 < pixels; p0 += chunk) {
    const size_t p1 = std::min(pixels, p0 + chunk), rows = p1 - p0;
    const T* patches = x + p0 * row_len;
    if (g.kernel != 1) {
      gather_patches(x, g.in_channels, g, false, p0, p1, col.data());
      patches = col.data();
    }
    pack_panels(dy + p0 * Co, Co, rows, Co, packed);
    gemm_packed(patches, Strides{1, row_len}, packed, dw, Co, row_len, rows, Co, true);
  }
}

template <typename T>
void depthwise_backward_weight(const T* x, const T* dy, T* dw, const ConvGeometry& g) {
  const size_t H = g.height, W = g.width, C = g.in_channels, K = g.kernel, P = g.pad();
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t oy = 0; oy < H; ++oy) {
      const T* dyrow = dy + (n * H + oy) * W * C;
      for (size_t ky = 0; ky < K; ++ky) {
        size_t iy;
        if (!tap_row(oy, ky, P, H, iy)) continue;
        const T* xrow = x + (n * H + iy) * W * C;
        for (size_t kx = 0; kx < K; ++kx) {
          size_t lo, hi;
          valid_columns(W, kx, P, lo, hi);
          T* dwr = dw + (ky * K + kx) * C;
          for (size_t ox = lo; ox < hi; ++ox) {
            const T* xp = xrow + (ox + kx - P) * C;
            const T* dyp = dyrow + ox * C;
            for (size_t c = 0; c < C; ++c) dwr[c] += xp[c] * dyp[c];
          }
        }
      }
    }
  }
}

template <typename T>
void grouped_backward_weight(const T* x, const T* dy, T* dw, const ConvGeometry& g) {
  const size_t H = g.height, W = g.width, Ci = g.in_channels, Co = g.out_channels, K = g.kernel;
  const size_t P = g.pad(), cig = Ci / g.groups, cog = Co / g.groups;
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t oy = 0; oy < H; ++oy) {
      for (size_t ox = 0; ox < W; ++ox) {
        const T* dyp = dy + ((n * H + oy) * W + ox) * Co;
        for (size_t ky = 0; ky < K; ++ky) {
          size_t iy, ix;
          if (!tap_row(oy, ky, P, H, iy)) continue;
          for (size_t kx = 0; kx < K; ++kx) {
            if (!tap_row(ox, kx, P, W, ix)) continue;
            const T* xp = x + ((n * H + iy) * W + ix) * Ci;
            for (size_t grp = 0; grp < g.groups; ++grp) {
              for (size_t ci = 0; ci < cig; ++ci) {
                const T v = xp[grp * cig + ci];
                T* dwr = dw + ((ky * K + kx) * cig + ci) * Co + grp * cog;
                for (size_t co = 0; co < cog; ++co) dwr[co] += v * dyp[grp * cog + co];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeometry& g) {
  init_output(y, bias, g.batch * g.height * g.width, g.out_channels);
  if (g.groups == 1) {
    dense_forward(x, w, y, g);
  } else if (g.depthwise()) {
    depthwise_forward(x, w, y, g);
  } else {
    grouped_forward(x, w, y, g);
  }
}

template <typename T>
void conv_backward_input(const T* dy, const T* w, T* dx, const ConvGeometry& g) {
  if (g.groups == 1) {
    dense_backward_input(dy, w, dx, g);
  } else if (g.depthwise()) {
    depthwise_backward_input(dy, w, dx, g);
  } else {
    grouped_backward_input(dy, w, dx, g);
  }
}

template <typename T>
void conv_backward_weight(const T* x, const T* dy, T* dw, const ConvGeometry& g) {
  if (g.groups == 1) {
    dense_backward_weight(x, dy, dw, g);
  } else if (g.depthwise()) {
    depthwise_backward_weight(x, dy, dw, g);
  } else {
    grouped_backward_weight(x, dy, dw, g);
  }
}

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, size_t m, size_t k, size_t p) {
  gemm(a, b, c, m, k, p, false);
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, size_t m, size_t k, size_t p) {
  std::vector<T> packed;
  pack_panels(b, p, m, p, packed);
  gemm_packed(a, Strides{1, k}, packed, c, p, k, m, p, false);
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, size_t m, size_t k, size_t p) {
  std::vector<T> packed;
  pack_panels(b, k, k, p, packed, true);
  gemm_packed(a, Strides{k, 1}, packed, c, p, m, k, p, false);
}

template <typename T>
void transpose(const T* in, T* out, size_t rows, size_t cols) {
  constexpr size_t kBlock = 16;
  for (size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const size_t r1 = std::min(rows, r0 + kBlock);
    for (size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const size_t c1 = std::min(cols, c0 + kBlock);
      for (size_t r = r0; r < r1; ++r) {
        for (size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

#define TATR_INSTANTIATE(T)                                                             \
  template void conv_forward<T>(const T*, const T*, const T*, T*, const ConvGeometry&); \
  template void conv_backward_input<T>(const T*, const T*, T*, const ConvGeometry&);    \
  template void conv_backward_weight<T>(const T*, const T*, T*, const ConvGeometry&);   \
  template void gemm_nn<T>(const T*, const T*, T*, size_t, size_t, size_t);             \
  template void gemm_tn<T>(const T*, const T*, T*, size_t, size_t, size_t);             \
  template void gemm_nt<T>(const T*, const T*, T*, size_t, size_t, size_t);             \
  template void transpose<T>(const T*, T*, size_t, size_t);

TATR_INSTANTIATE(float)
TATR_INSTANTIATE(double)

#undef TATR_INSTANTIATE

}  // namespace tatr::kernels
