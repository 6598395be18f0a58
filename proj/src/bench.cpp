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

#include "tatr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tatr/random.hpp"

namespace tatr {

std::uint64_t CostModel::total_flops() const {
  return std::accumulate(entries.begin(), entries.end(), std::uint64_t{0},
                         [](std::uint64_t a, const CostEntry& e) { return a + e.flops; });
}

std::uint64_t CostModel::total_params() const {
  return std::accumulate(entries.begin(), entries.end(), std::uint64_t{0},
                         [](std::uint64_t a, const CostEntry& e) { return a + e.params; });
}

std::uint64_t CostModel::total_activation_bytes() const {
  return std::accumulate(entries.begin(), entries.end(), std::uint64_t{0},
                         [](std::uint64_t a, const CostEntry& e) { return a + e.activation_bytes; });
}

namespace {

using u64 = std::uint64_t;

class CostBuilder {
 public:
  CostBuilder(CostModel& model, bool bias_free) : model_(model), bias_free_(bias_free) {}

  void conv(const std::string& name, u64 pixels, u64 kernel, u64 in_per_group, u64 out_channels) {
    CostEntry e{name, pixels * kernel * kernel * in_per_group * out_channels,
                kernel * kernel * in_per_group * out_channels, pixels * out_channels * 4};
    if (!bias_free_) {
      e.flops += pixels * out_channels;
      e.params += out_channels;
    }
    model_.entries.push_back(std::move(e));
  }

  void norm(const std::string& name, u64 pixels, u64 dim) {
    model_.entries.push_back({name, pixels * dim, bias_free_ ? dim : 2 * dim, pixels * dim * 4});
  }

  void elementwise(const std::string& name, u64 count, u64 params = 0) {
    model_.entries.push_back({name, count, params, count * 4});
  }

  void block(const std::string& prefix, u64 pixels, u64 dim, u64 heads, const BlockOptions& o) {
    const u64 hidden = ffn_hidden_width(dim, o.ffn_gamma);
    const u64 c = dim / heads;
    norm(prefix + "norm1", pixels, dim);
    for (const char* b : {"q", "k", "v"}) conv(prefix + "attn." + b + "_pw", pixels, 1, dim, dim);
    if (has_depthwise(o.attention)) {
      for (const char* b : {"q", "k", "v"}) conv(prefix + "attn." + b + "_dw", pixels, 3, 1, dim);
    }
    if (o.qk_l2_normalize) elementwise(prefix + "attn.l2_normalize", 2 * pixels * dim);
    model_.entries.push_back({prefix + "attn.scores", pixels * c * c * heads, 0, heads * c * c * 4});
    elementwise(prefix + "attn.softmax", heads * c * c, heads);
    model_.entries.push_back({prefix + "attn.mix", pixels * c * c * heads, 0, pixels * dim * 4});
    conv(prefix + "attn.proj", pixels, 1, dim, dim);
    elementwise(prefix + "attn.residual", pixels * dim);

    norm(prefix + "norm2", pixels, dim);
    conv(prefix + "ffn.pw1", pixels, 1, dim, hidden);
    if (has_depthwise(o.ffn)) conv(prefix + "ffn.dw1", pixels, 3, 1, hidden);
    elementwise(prefix + "ffn.gelu", pixels * hidden);
    if (has_gate(o.ffn)) {
      conv(prefix + "ffn.pw2", pixels, 1, dim, hidden);
      if (has_depthwise(o.ffn)) conv(prefix + "ffn.dw2", pixels, 3, 1, hidden);
      elementwise(prefix + "ffn.gate", pixels * hidden);
    }
    conv(prefix + "ffn.out", pixels, 1, hidden, dim);
    elementwise(prefix + "ffn.residual", pixels * dim);
  }

 private:
  CostModel& model_;
  bool bias_free_;
};

}  // namespace

CostModel cost_model(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  if (height % 8 != 0 || width % 8 != 0 || height == 0 || width == 0) {
    throw DimensionError("cost_model: height and width must be positive multiples of 8");
  }
  CostModel model;
  CostBuilder b(model, cfg.bias_free);
  const BlockOptions o = cfg.block_options();
  const u64 pixels = static_cast<u64>(height) * width;
  const u64 c = cfg.base_dim;
  auto at_scale = [pixels](std::size_t scale) { return pixels / (scale * scale); };
  const auto stages = stage_layout(cfg);
  auto stage = [&](const StageLayout& s) {
    for (std::size_t i = 0; i < s.blocks; ++i) {
      b.block(s.prefix + "block" + std::to_string(i) + ".", at_scale(s.scale), s.width, s.heads, o);
    }
  };

  b.conv("embed", pixels, 3, cfg.in_channels, c);
  for (std::size_t l = 0; l < kLevels; ++l) stage(stages[l]);
  for (std::size_t l = 1; l < kLevels; ++l) {
    const u64 w = cfg.level_width(l);
    b.conv("down" + std::to_string(l), at_scale(std::size_t{1} << (l - 1)), 3, w, w / 2);
  }
  for (std::size_t l = kLevels - 1; l >= 1; --l) {
    const u64 w = cfg.level_width(l + 1);
    b.conv("up" + std::to_string(l), at_scale(std::size_t{1} << l), 3, w, 2 * w);
  }
  b.conv("reduce3", at_scale(4), 1, 8 * c, 4 * c);
  b.conv("reduce2", at_scale(2), 1, 4 * c, 2 * c);
  for (std::size_t i = kLevels; i < stages.size(); ++i) stage(stages[i]);
  b.conv("output", pixels, 3, 2 * c, cfg.in_channels);
  b.elementwise("output.residual", pixels * cfg.in_channels);
  return model;
}

std::uint64_t count_params(const ModelConfig& cfg) { return cost_model(cfg, 8, 8).total_params(); }

std::uint64_t count_flops(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  return cost_model(cfg, height, width).total_flops();
}

namespace {

void check_attention_shape(std::size_t channels, std::size_t heads, std::size_t height, std::size_t width) {
  if (channels == 0 || heads == 0 || channels % heads != 0) {
    throw ConfigError("attention cost: heads must divide channels");
  }
  if (height == 0 || width == 0) throw DimensionError("attention cost: empty image");
}

}  // namespace

AttentionCost mdta_cost(std::size_t channels, std::size_t heads, std::size_t height, std::size_t width) {
  check_attention_shape(channels, heads, height, width);
  const u64 p = static_cast<u64>(height) * width, d = channels, c = d / heads;
  AttentionCost cost;
  cost.attention_flops = 2 * p * c * c * heads;
  cost.map_bytes = heads * c * c * 4;
  // norm, q/k/v pointwise and depthwise, softmax, output projection, residual
  cost.total_flops = p * d + 3 * p * d * d + 27 * p * d + cost.attention_flops + heads * c * c + p * d * d + p * d;
  cost.peak_bytes = 7 * p * d * 4 + cost.map_bytes;
  return cost;
}

AttentionCost spatial_attention_cost(std::size_t channels, std::size_t heads, std::size_t height, std::size_t width) {
  check_attention_shape(channels, heads, height, width);
  const u64 p = static_cast<u64>(height) * width, d = channels;
  AttentionCost cost;
  cost.attention_flops = 2 * p * p * d;
  cost.map_bytes = heads * p * p * 4;
  cost.total_flops = p * d + 3 * p * d * d + cost.attention_flops + heads * p * p + p * d * d + p * d;
  cost.peak_bytes = 7 * p * d * 4 + cost.map_bytes;
  return cost;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw DomainError("fit_loglog_slope: need at least 2 points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) throw DomainError("fit_loglog_slope: values must be positive");
    sx += std::log(x);
    sy += std::log(y);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxy += dx * (std::log(y) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw DomainError("fit_loglog_slope: all x values are equal");
  return sxy / sxx;
}

namespace {

double lookup(const std::vector<std::pair<std::string, double>>& table, const std::string& key) {
  for (const auto& [k, v] : table) {
    if (k == key) return v;
  }
  throw UsageError("no slope recorded for kernel '" + key + "'");
}

std::uint64_t timer_resolution_ns() {
  using clock = std::chrono::steady_clock;
  std::int64_t best = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = clock::now();
    auto b = clock::now();
    while (b == a) b = clock::now();
    const std::int64_t d = std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count();
    if (best == 0 || (d > 0 && d < best)) best = d;
  }
  return static_cast<std::uint64_t>(std::max<std::int64_t>(best, 1));
}

template <typename F>
std::uint64_t median_ns(F&& run, const BenchOptions& options) {
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < options.warmups; ++i) run();
  std::vector<std::uint64_t> times;
  for (std::size_t i = 0; i < options.repeats; ++i) {
    const auto a = clock::now();
    run();
    const auto b = clock::now();
    times.push_back(static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count()));
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

double BenchReport::wall_slope(const std::string& kernel) const { return lookup(wall_slopes, kernel); }
double BenchReport::analytic_slope(const std::string& kernel) const { return lookup(analytic_slopes, kernel); }

std::string BenchReport::to_csv() const {
  std::string out = "kernel,H,W,C,heads,analytic_flops,wall_ns,peak_bytes\n";
  char buf[256];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%zu,%llu,%llu,%llu\n", r.kernel.c_str(), r.height, r.width,
                  r.channels, r.heads, static_cast<unsigned long long>(r.analytic_flops),
                  static_cast<unsigned long long>(r.wall_ns), static_cast<unsigned long long>(r.peak_bytes));
    out += buf;
  }
  for (const BenchRow& r : rows) {
    if (!r.coarse_timer) continue;
    std::snprintf(buf, sizeof(buf), "# coarse_timer kernel=%s H=%zu W=%zu\n", r.kernel.c_str(), r.height, r.width);
    out += buf;
  }
  for (const auto& [k, v] : analytic_slopes) {
    std::snprintf(buf, sizeof(buf), "# analytic_slope kernel=%s value=%.6f\n", k.c_str(), v);
    out += buf;
  }
  for (const auto& [k, v] : wall_slopes) {
    std::snprintf(buf, sizeof(buf), "# slope kernel=%s value=%.6f\n", k.c_str(), v);
    out += buf;
  }
  return out;
}

BenchReport scaling_bench(std::size_t channels, std::size_t heads, const std::vector<std::size_t>& sizes,
                          const BenchOptions& options) {
  if (sizes.size() < 4) throw ConfigError("scaling_bench: need at least 4 sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0 || (i > 0 && sizes[i] <= sizes[i - 1])) {
      throw ConfigError("scaling_bench: sizes must be positive and strictly increasing");
    }
    if (sizes[i] * sizes[i] > kSpatialAttentionMaxPixels) {
      throw ResourceError("scaling_bench: " + std::to_string(sizes[i]) + "^2 pixels exceeds the spatial attention limit");
    }
  }
  if (options.repeats == 0) throw ConfigError("scaling_bench: repeats must be at least 1");

  BlockOptions block;
  block.attention = AttentionVariant::kMdta;
  ParamStore<float> store;
  {
    const ParamStore<double> wide = ParamStore<double>::initialize(block_param_decls("", channels, heads, block),
                                                                   options.seed);
    store = wide.cast<float>();
  }
  const BoundParams<float> bound(store, nullptr);
  const AttentionParams<float> attn = bind_block(bound, "", channels, heads, block).attention;

  const std::uint64_t resolution = timer_resolution_ns();
  BenchReport report;
  std::vector<std::pair<double, double>> mdta_wall, sa_wall, mdta_flops, sa_flops;
  Rng rng(derive_seed(options.seed, 0xBE7C4));
  for (std::size_t s : sizes) {
    Tensor<float> x({1, s, s, channels});
    for (float& v : x.data()) v = static_cast<float>(rng.normal());
    const double pixels = static_cast<double>(s * s);

    const AttentionCost mc = mdta_cost(channels, heads, s, s);
    const Var<float> input = Var<float>::constant(x);
    const std::uint64_t mt = median_ns([&] { (void)mdta_forward(input, attn, AttentionVariant::kMdta); }, options);
    report.rows.push_back({"MDTA", s, s, channels, heads, mc.total_flops, mt, mc.peak_bytes, mt < 20 * resolution});

    const AttentionCost sc = spatial_attention_cost(channels, heads, s, s);
    const std::uint64_t st = median_ns([&] { (void)vanilla_spatial_attention(x, attn); }, options);
    report.rows.push_back({"spatial-SA", s, s, channels, heads, sc.total_flops, st, sc.peak_bytes, st < 20 * resolution});

    mdta_wall.emplace_back(pixels, static_cast<double>(std::max<std::uint64_t>(mt, 1)));
    sa_wall.emplace_back(pixels, static_cast<double>(std::max<std::uint64_t>(st, 1)));
    mdta_flops.emplace_back(pixels, static_cast<double>(mc.attention_flops));
    sa_flops.emplace_back(pixels, static_cast<double>(sc.attention_flops));
  }
  report.analytic_slopes = {{"MDTA", fit_loglog_slope(mdta_flops)}, {"spatial-SA", fit_loglog_slope(sa_flops)}};
  report.wall_slopes = {{"MDTA", fit_loglog_slope(mdta_wall)}, {"spatial-SA", fit_loglog_slope(sa_wall)}};
  return report;
}

}  // namespace tatr
