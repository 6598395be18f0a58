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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tatr/network.hpp"

namespace tatr {

/// One layer of the analytic cost model. `flops` counts multiply-accumulates;
/// elementwise work (norms, activations, gating, residual adds, bias adds)
/// counts one unit per output element.
struct CostEntry {
  std::string name;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  std::uint64_t activation_bytes = 0;  // float32 output of the layer
};

struct CostModel {
  std::vector<CostEntry> entries;

  std::uint64_t total_flops() const;
  std::uint64_t total_params() const;
  std::uint64_t total_activation_bytes() const;
};

/// Per-layer costs of the whole network on an H x W input, derived from
/// the layer widths alone (never from the parameter store).
CostModel cost_model(const ModelConfig& cfg, std::size_t height, std::size_t width);

std::uint64_t count_params(const ModelConfig& cfg);
/// Multiply-accumulates for one forward pass; H and W must be multiples of 8.
std::uint64_t count_flops(const ModelConfig& cfg, std::size_t height, std::size_t width);

/// Analytic cost of one attention sub-block (norm, projections, attention,
/// output projection, residual) on a single H x W x C input.
struct AttentionCost {
  std::uint64_t attention_flops = 0;  // the two attention matmuls only
  std::uint64_t total_flops = 0;
  std::uint64_t map_bytes = 0;   // float32 attention maps over all heads
  std::uint64_t peak_bytes = 0;  // map plus the live activation tensors
};

/// Channel attention with depthwise projections: maps are heads x c x c.
AttentionCost mdta_cost(std::size_t channels, std::size_t heads, std::size_t height, std::size_t width);
/// Spatial attention: maps are heads x HW x HW.
AttentionCost spatial_attention_cost(std::size_t channels, std::size_t heads, std::size_t height, std::size_t width);

/// Ordinary least squares slope of ln(y) against ln(x).
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

struct BenchRow {
  std::string kernel;  // "MDTA" or "spatial-SA"
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t heads = 0;
  std::uint64_t analytic_flops = 0;
  std::uint64_t wall_ns = 0;  // median over the timed repeats
  std::uint64_t peak_bytes = 0;
  bool coarse_timer = false;  // median below 20x the timer resolution
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::pair<std::string, double>> wall_slopes;      // measured, per kernel
  std::vector<std::pair<std::string, double>> analytic_slopes;  // attention term, per kernel

  double wall_slope(const std::string& kernel) const;
  double analytic_slope(const std::string& kernel) const;
  std::string to_csv() const;
};

struct BenchOptions {
  std::size_t repeats = 5;
  std::size_t warmups = 2;
  std::uint64_t seed = 0;
};

/// Times single forward passes of a channel-attention and a spatial-attention
/// sub-block at every H = W in `sizes` (strictly increasing, at least 4).
BenchReport scaling_bench(std::size_t channels, std::size_t heads, const std::vector<std::size_t>& sizes,
                          const BenchOptions& options = {});

}  // namespace tatr
