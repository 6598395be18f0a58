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

#include "tatr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"

namespace tatr {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
void push_grad(const NodePtr<T>& node, const Tensor<T>& g) {
  if (node && node->requires_grad) node->accumulate(g);
}

template <typename T>
bool wants_grad(const NodePtr<T>& node) {
  return node && node->requires_grad;
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
}

}  // namespace

// Elementwise ---------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return make_result<T>("add", std::move(out), {&a, &b}, [na = a.node(), nb = b.node()] {
    return [na, nb](const Tensor<T>& g) {
      push_grad(na, g);
      push_grad(nb, g);
    };
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  return make_result<T>("mul", std::move(out), {&a, &b}, [na = a.node(), nb = b.node()] {
    return [na, nb](const Tensor<T>& g) {
      auto product_with = [&g](const Tensor<T>& other) {
        Tensor<T> r(g.shape());
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = g[i] * other[i];
        return r;
      };
      if (wants_grad(na)) na->accumulate(product_with(nb->value));
      if (wants_grad(nb)) nb->accumulate(product_with(na->value));
    };
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v *= factor;
  return make_result<T>("scale", std::move(out), {&a}, [na = a.node(), factor] {
    return [na, factor](const Tensor<T>& g) {
      Tensor<T> r = g;
      for (T& v : r.data()) v *= factor;
      push_grad(na, r);
    };
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = T(0);
  for (T v : a.value().data()) total += v;
  return make_result<T>("sum", Tensor<T>::scalar(total), {&a}, [na = a.node()] {
    return [na](const Tensor<T>& g) { push_grad(na, Tensor<T>::full(na->value.shape(), g[0])); };
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Tensor<T> out(x.shape());
  const T* px = x.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = px[i] * T(0.5) * std::erfc(-px[i] * inv_sqrt2);
  }
  return make_result<T>("gelu", std::move(out), {&x}, [nx = x.node(), inv_sqrt2] {
    return [nx, inv_sqrt2](const Tensor<T>& g) {
      const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
      Tensor<T> r(g.shape());
      const T* px = nx->value.ptr();
      for (std::size_t i = 0; i < r.size(); ++i) {
        const T v = px[i];
        const T cdf = T(0.5) * std::erfc(-v * inv_sqrt2);
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        r[i] = g[i] * (cdf + v * pdf);
      }
      push_grad(nx, r);
    };
  });
}

// Spatial -------------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t groups) {
  require_nhwc(x.value(), "conv2d");
  const Tensor<T>& w = weight.value();
  if (w.rank() != 4 || w.dim(0) != w.dim(1) || w.dim(0) % 2 == 0) {
    throw DimensionError("conv2d: weight must be k x k x Cin/groups x Cout with odd k, got " +
                         to_string(w.shape()));
  }
  if (groups == 0) throw ConfigError("conv2d: groups must be positive");
  kernels::ConvGeometry geo;
  geo.batch = x.shape()[0];
  geo.height = x.shape()[1];
  geo.width = x.shape()[2];
  geo.in_channels = x.shape()[3];
  geo.out_channels = w.dim(3);
  geo.kernel = w.dim(0);
  geo.groups = groups;
  if (geo.in_channels % groups != 0 || geo.out_channels % groups != 0) {
    throw ConfigError("conv2d: groups=" + std::to_string(groups) + " does not divide channels " +
                      std::to_string(geo.in_channels) + " -> " + std::to_string(geo.out_channels));
  }
  if (w.dim(2) != geo.in_channels / groups) {
    throw DimensionError("conv2d: weight " + to_string(w.shape()) + " does not match input " +
                         to_string(x.shape()) + " with groups=" + std::to_string(groups));
  }
  if (bias.defined() && bias.shape() != Shape{geo.out_channels}) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " for " +
                         std::to_string(geo.out_channels) + " output channels");
  }
  Tensor<T> out({geo.batch, geo.height, geo.width, geo.out_channels});
  kernels::conv_forward(x.value().ptr(), w.ptr(), bias.defined() ? bias.value().ptr() : nullptr,
                        out.ptr(), geo);
  NodePtr<T> nb = bias.defined() ? bias.node() : nullptr;
  return make_result<T>("conv2d", std::move(out), {&x, &weight, bias.defined() ? &bias : nullptr},
                        [nx = x.node(), nw = weight.node(), nb, geo] {
                          return [nx, nw, nb, geo](const Tensor<T>& g) {
                            if (wants_grad(nx)) {
                              Tensor<T> dx(nx->value.shape());
                              kernels::conv_backward_input(g.ptr(), nw->value.ptr(), dx.ptr(), geo);
                              nx->accumulate(dx);
                            }
                            if (wants_grad(nw)) {
                              Tensor<T> dw(nw->value.shape());
                              kernels::conv_backward_weight(nx->value.ptr(), g.ptr(), dw.ptr(), geo);
                              nw->accumulate(dw);
                            }
                            if (wants_grad(nb)) {
                              Tensor<T> db(nb->value.shape());
                              const std::size_t co = geo.out_channels;
                              for (std::size_t p = 0; p < g.size() / co; ++p) {
                                for (std::size_t c = 0; c < co; ++c) db[c] += g[p * co + c];
                              }
                              nb->accumulate(db);
                            }
                          };
                        });
}

namespace {

// Moves values between N x H x W x C (fine) and N x H/r x W/r x C*r*r
// (coarse). `unshuffle` reads fine and writes coarse; otherwise the reverse.
template <typename T>
void shuffle_indices(const T* src, T* dst, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                     std::size_t r, bool unshuffle) {
  const std::size_t ho = h / r, wo = w / r, co = c * r * r;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t fine = ((b * h + y) * w + x) * c + ch;
          const std::size_t coarse =
              ((b * ho + y / r) * wo + x / r) * co + ch * r * r + (y % r) * r + (x % r);
          if (unshuffle) {
            dst[coarse] = src[fine];
          } else {
            dst[fine] = src[coarse];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, std::size_t r) {
  require_nhwc(x.value(), "pixel_unshuffle");
  const Shape s = x.shape();
  if (r == 0 || s[1] % r != 0 || s[2] % r != 0) {
    throw DimensionError("pixel_unshuffle: factor " + std::to_string(r) + " does not divide " +
                         to_string(s));
  }
  Tensor<T> out({s[0], s[1] / r, s[2] / r, s[3] * r * r});
  shuffle_indices(x.value().ptr(), out.ptr(), s[0], s[1], s[2], s[3], r, true);
  return make_result<T>("pixel_unshuffle", std::move(out), {&x}, [nx = x.node(), s, r] {
    return [nx, s, r](const Tensor<T>& g) {
      Tensor<T> dx(s);
      shuffle_indices(g.ptr(), dx.ptr(), s[0], s[1], s[2], s[3], r, false);
      push_grad(nx, dx);
    };
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r) {
  require_nhwc(x.value(), "pixel_shuffle");
  const Shape s = x.shape();
  if (r == 0 || s[3] % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: r^2=" + std::to_string(r * r) + " does not divide channels of " +
                         to_string(s));
  }
  const Shape fine{s[0], s[1] * r, s[2] * r, s[3] / (r * r)};
  Tensor<T> out(fine);
  shuffle_indices(x.value().ptr(), out.ptr(), fine[0], fine[1], fine[2], fine[3], r, false);
  return make_result<T>("pixel_shuffle", std::move(out), {&x}, [nx = x.node(), s, fine, r] {
    return [nx, s, fine, r](const Tensor<T>& g) {
      Tensor<T> dx(s);
      shuffle_indices(g.ptr(), dx.ptr(), fine[0], fine[1], fine[2], fine[3], r, true);
      push_grad(nx, dx);
    };
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_nhwc(a.value(), "concat_channels");
  require_nhwc(b.value(), "concat_channels");
  const Shape sa = a.shape(), sb = b.shape();
  if (sa[0] != sb[0] || sa[1] != sb[1] || sa[2] != sb[2]) {
    throw DimensionError("concat_channels: " + to_string(sa) + " and " + to_string(sb) +
                         " differ outside the channel axis");
  }
  const std::size_t ca = sa[3], cb = sb[3], pixels = sa[0] * sa[1] * sa[2];
  Tensor<T> out({sa[0], sa[1], sa[2], ca + cb});
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(a.value().ptr() + p * ca, ca, out.ptr() + p * (ca + cb));
    std::copy_n(b.value().ptr() + p * cb, cb, out.ptr() + p * (ca + cb) + ca);
  }
  return make_result<T>("concat_channels", std::move(out), {&a, &b},
                        [na = a.node(), nb = b.node(), sa, sb, pixels] {
                          return [na, nb, sa, sb, pixels](const Tensor<T>& g) {
                            const std::size_t ca = sa[3], cb = sb[3];
                            if (wants_grad(na)) {
                              Tensor<T> da(sa);
                              for (std::size_t p = 0; p < pixels; ++p)
                                std::copy_n(g.ptr() + p * (ca + cb), ca, da.ptr() + p * ca);
                              na->accumulate(da);
                            }
                            if (wants_grad(nb)) {
                              Tensor<T> db(sb);
                              for (std::size_t p = 0; p < pixels; ++p)
                                std::copy_n(g.ptr() + p * (ca + cb) + ca, cb, db.ptr() + p * cb);
                              nb->accumulate(db);
                            }
                          };
                        });
}

// Normalization ---------------------------------------------------------------

template <typename T>
Var<T> softmax(const Var<T>& x, int axis) {
  const Shape s = x.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("softmax: axis out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < rank; ++i) inner *= s[i];
  const std::size_t len = s[axis];

  Tensor<T> out(s);
  const T* px = x.value().ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T peak = px[base];
      for (std::size_t i = 1; i < len; ++i) peak = std::max(peak, px[base + i * inner]);
      T total = T(0);
      for (std::size_t i = 0; i < len; ++i) {
        const T e = std::exp(px[base + i * inner] - peak);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  Tensor<T> saved = out;
  return make_result<T>("softmax", std::move(out), {&x},
                        [nx = x.node(), y = std::move(saved), outer, inner, len] {
                          return [nx, y, outer, inner, len](const Tensor<T>& g) {
                            Tensor<T> dx(y.shape());
                            for (std::size_t o = 0; o < outer; ++o) {
                              for (std::size_t in = 0; in < inner; ++in) {
                                const std::size_t base = o * len * inner + in;
                                T dot = T(0);
                                for (std::size_t i = 0; i < len; ++i)
                                  dot += g[base + i * inner] * y[base + i * inner];
                                for (std::size_t i = 0; i < len; ++i) {
                                  const std::size_t k = base + i * inner;
                                  dx[k] = y[k] * (g[k] - dot);
                                }
                              }
                            }
                            push_grad(nx, dx);
                          };
                        });
}

template <typename T>
Var<T> layer_norm_channel(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  require_nhwc(x.value(), "layer_norm_channel");
  if (!(eps > 0.0)) throw ConfigError("layer_norm_channel: eps must be positive");
  const std::size_t c = x.shape()[3];
  if (gamma.shape() != Shape{c} || (beta.defined() && beta.shape() != Shape{c})) {
    throw DimensionError("layer_norm_channel: affine parameters must have " + std::to_string(c) + " entries");
  }
  const std::size_t pixels = x.value().size() / c;
  Tensor<T> normalized(x.shape());
  Tensor<T> inv_std({pixels});
  Tensor<T> out(x.shape());
  const T* px = x.value().ptr();
  const T* pg = gamma.value().ptr();
  const T* pb = beta.defined() ? beta.value().ptr() : nullptr;
  for (std::size_t p = 0; p < pixels; ++p) {
    const T* v = px + p * c;
    T mean = T(0);
    for (std::size_t i = 0; i < c; ++i) mean += v[i];
    mean /= T(c);
    T var = T(0);
    for (std::size_t i = 0; i < c; ++i) var += (v[i] - mean) * (v[i] - mean);
    var /= T(c);
    const T istd = T(1) / std::sqrt(var + T(eps));
    inv_std[p] = istd;
    for (std::size_t i = 0; i < c; ++i) {
      const T xhat = (v[i] - mean) * istd;
      normalized[p * c + i] = xhat;
      out[p * c + i] = pb ? xhat * pg[i] + pb[i] : xhat * pg[i];
    }
  }
  NodePtr<T> nbeta = beta.defined() ? beta.node() : nullptr;
  return make_result<T>(
      "layer_norm_channel", std::move(out), {&x, &gamma, beta.defined() ? &beta : nullptr},
      [nx = x.node(), ng = gamma.node(), nbeta, xhat = std::move(normalized), istd = std::move(inv_std), c,
       pixels] {
        return [nx, ng, nbeta, xhat, istd, c, pixels](const Tensor<T>& g) {
          const T* pg = ng->value.ptr();
          if (wants_grad(nx)) {
            Tensor<T> dx(nx->value.shape());
            std::vector<T> dxhat(c);
            for (std::size_t p = 0; p < pixels; ++p) {
              T mean_d = T(0), mean_dx = T(0);
              for (std::size_t i = 0; i < c; ++i) {
                dxhat[i] = g[p * c + i] * pg[i];
                mean_d += dxhat[i];
                mean_dx += dxhat[i] * xhat[p * c + i];
              }
              mean_d /= T(c);
              mean_dx /= T(c);
              for (std::size_t i = 0; i < c; ++i) {
                dx[p * c + i] = istd[p] * (dxhat[i] - mean_d - xhat[p * c + i] * mean_dx);
              }
            }
            nx->accumulate(dx);
          }
          if (wants_grad(ng)) {
            Tensor<T> dg({c});
            for (std::size_t p = 0; p < pixels; ++p)
              for (std::size_t i = 0; i < c; ++i) dg[i] += g[p * c + i] * xhat[p * c + i];
            ng->accumulate(dg);
          }
          if (wants_grad(nbeta)) {
            Tensor<T> db({c});
            for (std::size_t p = 0; p < pixels; ++p)
              for (std::size_t i = 0; i < c; ++i) db[i] += g[p * c + i];
            nbeta->accumulate(db);
          }
        };
      });
}

// Attention plumbing ---------------------------------------------------------

namespace {

struct BatchPlan {
  Shape out_shape;
  std::vector<std::size_t> a_index;  // per output batch entry
  std::vector<std::size_t> b_index;
  std::size_t m = 0, k = 0, p = 0;
};

BatchPlan plan_matmul(const Shape& sa, const Shape& sb) {
  if (sa.size() < 2 || sa.size() != sb.size()) {
    throw DimensionError("matmul: operands " + to_string(sa) + " and " + to_string(sb) +
                         " must have equal rank >= 2");
  }
  const std::size_t rank = sa.size();
  BatchPlan plan;
  plan.m = sa[rank - 2];
  plan.k = sa[rank - 1];
  plan.p = sb[rank - 1];
  if (sb[rank - 2] != plan.k) {
    throw DimensionError("matmul: inner extents differ in " + to_string(sa) + " x " + to_string(sb));
  }
  Shape batch(rank - 2);
  for (std::size_t i = 0; i + 2 < rank; ++i) {
    if (sa[i] != sb[i] && sa[i] != 1 && sb[i] != 1) {
      throw DimensionError("matmul: batch extents of " + to_string(sa) + " and " + to_string(sb) +
                           " are not broadcast-compatible");
    }
    batch[i] = std::max(sa[i], sb[i]);
  }
  const std::size_t count = numel(batch);
  plan.a_index.resize(count);
  plan.b_index.resize(count);
  for (std::size_t flat = 0; flat < count; ++flat) {
    std::size_t rem = flat, ia = 0, ib = 0, stride_a = 1, stride_b = 1;
    for (std::size_t d = batch.size(); d-- > 0;) {
      const std::size_t idx = rem % batch[d];
      rem /= batch[d];
      ia += (sa[d] == 1 ? 0 : idx) * stride_a;
      ib += (sb[d] == 1 ? 0 : idx) * stride_b;
      stride_a *= sa[d];
      stride_b *= sb[d];
    }
    plan.a_index[flat] = ia;
    plan.b_index[flat] = ib;
  }
  plan.out_shape = batch;
  plan.out_shape.push_back(plan.m);
  plan.out_shape.push_back(plan.p);
  return plan;
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  BatchPlan plan = plan_matmul(a.shape(), b.shape());
  Tensor<T> out(plan.out_shape);
  const std::size_t m = plan.m, k = plan.k, p = plan.p;
  for (std::size_t i = 0; i < plan.a_index.size(); ++i) {
    kernels::gemm_nn(a.value().ptr() + plan.a_index[i] * m * k, b.value().ptr() + plan.b_index[i] * k * p,
                     out.ptr() + i * m * p, m, k, p);
  }
  return make_result<T>("matmul", std::move(out), {&a, &b}, [na = a.node(), nb = b.node(), plan] {
    return [na, nb, plan](const Tensor<T>& g) {
      const std::size_t m = plan.m, k = plan.k, p = plan.p;
      if (wants_grad(na)) {
        Tensor<T> da(na->value.shape());
        std::vector<T> tmp(m * k);
        for (std::size_t i = 0; i < plan.a_index.size(); ++i) {
          kernels::gemm_nt(g.ptr() + i * m * p, nb->value.ptr() + plan.b_index[i] * k * p, tmp.data(), m, p, k);
          T* dst = da.ptr() + plan.a_index[i] * m * k;
          for (std::size_t j = 0; j < m * k; ++j) dst[j] += tmp[j];
        }
        na->accumulate(da);
      }
      if (wants_grad(nb)) {
        Tensor<T> db(nb->value.shape());
        std::vector<T> tmp(k * p);
        for (std::size_t i = 0; i < plan.b_index.size(); ++i) {
          kernels::gemm_tn(na->value.ptr() + plan.a_index[i] * m * k, g.ptr() + i * m * p, tmp.data(), m, k, p);
          T* dst = db.ptr() + plan.b_index[i] * k * p;
          for (std::size_t j = 0; j < k * p; ++j) dst[j] += tmp[j];
        }
        nb->accumulate(db);
      }
    };
  });
}

template <typename T>
Var<T> transpose_last2(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose_last2: rank < 2");
  const std::size_t rows = s[s.size() - 2], cols = s[s.size() - 1];
  const std::size_t count = x.value().size() / std::max<std::size_t>(rows * cols, 1);
  Shape ts = s;
  std::swap(ts[ts.size() - 2], ts[ts.size() - 1]);
  Tensor<T> out(ts);
  for (std::size_t i = 0; i < count; ++i)
    kernels::transpose(x.value().ptr() + i * rows * cols, out.ptr() + i * rows * cols, rows, cols);
  return make_result<T>("transpose_last2", std::move(out), {&x}, [nx = x.node(), s, rows, cols, count] {
    return [nx, s, rows, cols, count](const Tensor<T>& g) {
      Tensor<T> dx(s);
      for (std::size_t i = 0; i < count; ++i)
        kernels::transpose(g.ptr() + i * rows * cols, dx.ptr() + i * rows * cols, cols, rows);
      push_grad(nx, dx);
    };
  });
}

namespace {

// NHWC <-> N x heads x S x c
template <typename T>
void head_permute(const T* src, T* dst, std::size_t n, std::size_t spatial, std::size_t heads, std::size_t c,
                  bool to_heads) {
  const std::size_t channels = heads * c;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t s = 0; s < spatial; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t flat = (b * spatial + s) * channels + h * c;
        const std::size_t split = ((b * heads + h) * spatial + s) * c;
        if (to_heads) {
          std::copy_n(src + flat, c, dst + split);
        } else {
          std::copy_n(src + split, c, dst + flat);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads) {
  require_nhwc(x.value(), "split_heads");
  const Shape s = x.shape();
  if (heads == 0 || s[3] % heads != 0) {
    throw ConfigError("split_heads: " + std::to_string(heads) + " heads do not divide " +
                      std::to_string(s[3]) + " channels");
  }
  const std::size_t spatial = s[1] * s[2], c = s[3] / heads;
  Tensor<T> out({s[0], heads, spatial, c});
  head_permute(x.value().ptr(), out.ptr(), s[0], spatial, heads, c, true);
  return make_result<T>("split_heads", std::move(out), {&x}, [nx = x.node(), s, spatial, heads, c] {
    return [nx, s, spatial, heads, c](const Tensor<T>& g) {
      Tensor<T> dx(s);
      head_permute(g.ptr(), dx.ptr(), s[0], spatial, heads, c, false);
      push_grad(nx, dx);
    };
  });
}

template <typename T>
Var<T> merge_heads(const Var<T>& x, std::size_t height, std::size_t width) {
  const Shape s = x.shape();
  if (s.size() != 4 || s[2] != height * width) {
    throw DimensionError("merge_heads: " + to_string(s) + " is not N x heads x (" + std::to_string(height) +
                         "*" + std::to_string(width) + ") x c");
  }
  const std::size_t heads = s[1], c = s[3], spatial = s[2];
  Tensor<T> out({s[0], height, width, heads * c});
  head_permute(x.value().ptr(), out.ptr(), s[0], spatial, heads, c, false);
  return make_result<T>("merge_heads", std::move(out), {&x}, [nx = x.node(), s, spatial, heads, c] {
    return [nx, s, spatial, heads, c](const Tensor<T>& g) {
      Tensor<T> dx(s);
      head_permute(g.ptr(), dx.ptr(), s[0], spatial, heads, c, true);
      push_grad(nx, dx);
    };
  });
}

template <typename T>
Var<T> divide_by_head(const Var<T>& x, const Var<T>& alpha) {
  const Shape s = x.shape();
  if (s.size() < 2 || alpha.shape() != Shape{s[1]}) {
    throw DimensionError("divide_by_head: alpha " + to_string(alpha.shape()) + " for " + to_string(s));
  }
  const std::size_t heads = s[1];
  const std::size_t block = x.value().size() / std::max<std::size_t>(s[0] * heads, 1);
  for (T a : alpha.value().data()) {
    if (!(std::abs(a) >= T(kAlphaGuard))) {
      throw NumericError("divide_by_head: |alpha| below 1e-8");
    }
  }
  Tensor<T> out(s);
  const T* pa = alpha.value().ptr();
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = (b * heads + h) * block;
      for (std::size_t i = 0; i < block; ++i) out[off + i] = x.value()[off + i] / pa[h];
    }
  return make_result<T>("divide_by_head", std::move(out), {&x, &alpha},
                        [nx = x.node(), na = alpha.node(), s, heads, block] {
                          return [nx, na, s, heads, block](const Tensor<T>& g) {
                            const T* pa = na->value.ptr();
                            if (wants_grad(nx)) {
                              Tensor<T> dx(s);
                              for (std::size_t b = 0; b < s[0]; ++b)
                                for (std::size_t h = 0; h < heads; ++h) {
                                  const std::size_t off = (b * heads + h) * block;
                                  for (std::size_t i = 0; i < block; ++i) dx[off + i] = g[off + i] / pa[h];
                                }
                              nx->accumulate(dx);
                            }
                            if (wants_grad(na)) {
                              Tensor<T> da({heads});
                              for (std::size_t b = 0; b < s[0]; ++b)
                                for (std::size_t h = 0; h < heads; ++h) {
                                  const std::size_t off = (b * heads + h) * block;
                                  T acc = T(0);
                                  for (std::size_t i = 0; i < block; ++i) acc += g[off + i] * nx->value[off + i];
                                  da[h] -= acc / (pa[h] * pa[h]);
                                }
                              na->accumulate(da);
                            }
                          };
                        });
}

template <typename T>
Var<T> l2_normalize_spatial(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.size() != 4) throw DimensionError("l2_normalize_spatial: expected N x heads x S x c");
  const std::size_t outer = s[0] * s[1], spatial = s[2], c = s[3];
  constexpr double kFloor = 1e-12;
  Tensor<T> out(s);
  Tensor<T> norms({outer, c});
  for (std::size_t o = 0; o < outer; ++o) {
    const T* px = x.value().ptr() + o * spatial * c;
    for (std::size_t j = 0; j < c; ++j) {
      T acc = T(0);
      for (std::size_t i = 0; i < spatial; ++i) acc += px[i * c + j] * px[i * c + j];
      const T norm = std::max(std::sqrt(acc), T(kFloor));
      norms[o * c + j] = norm;
      for (std::size_t i = 0; i < spatial; ++i) out[o * spatial * c + i * c + j] = px[i * c + j] / norm;
    }
  }
  Tensor<T> saved = out;
  return make_result<T>("l2_normalize_spatial", std::move(out), {&x},
                        [nx = x.node(), y = std::move(saved), norms = std::move(norms), outer, spatial, c] {
                          return [nx, y, norms, outer, spatial, c](const Tensor<T>& g) {
                            Tensor<T> dx(y.shape());
                            for (std::size_t o = 0; o < outer; ++o) {
                              const std::size_t base = o * spatial * c;
                              for (std::size_t j = 0; j < c; ++j) {
                                T dot = T(0);
                                for (std::size_t i = 0; i < spatial; ++i)
                                  dot += g[base + i * c + j] * y[base + i * c + j];
                                const T norm = norms[o * c + j];
                                for (std::size_t i = 0; i < spatial; ++i) {
                                  const std::size_t k = base + i * c + j;
                                  dx[k] = (g[k] - y[k] * dot) / norm;
                                }
                              }
                            }
                            push_grad(nx, dx);
                          };
                        });
}

#define TATR_INSTANTIATE(T)                                                                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                           \
  template Var<T> scale(const Var<T>&, T);                                                     \
  template Var<T> sum(const Var<T>&);                                                          \
  template Var<T> gelu(const Var<T>&);                                                         \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);            \
  template Var<T> pixel_unshuffle(const Var<T>&, std::size_t);                                 \
  template Var<T> pixel_shuffle(const Var<T>&, std::size_t);                                   \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                               \
  template Var<T> softmax(const Var<T>&, int);                                                 \
  template Var<T> layer_norm_channel(const Var<T>&, const Var<T>&, const Var<T>&, double);     \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                        \
  template Var<T> transpose_last2(const Var<T>&);                                              \
  template Var<T> split_heads(const Var<T>&, std::size_t);                                     \
  template Var<T> merge_heads(const Var<T>&, std::size_t, std::size_t);                        \
  template Var<T> divide_by_head(const Var<T>&, const Var<T>&);                                \
  template Var<T> l2_normalize_spatial(const Var<T>&);

TATR_INSTANTIATE(float)
TATR_INSTANTIATE(double)

#undef TATR_INSTANTIATE

}  // namespace tatr
