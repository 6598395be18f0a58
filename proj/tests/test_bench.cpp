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

#include <cmath>
#include <numeric>
#include <sstream>

#include "tatr/bench.hpp"

using namespace tatr;

namespace {

const CostEntry& entry(const CostModel& m, const std::string& name) {
  for (const CostEntry& e : m.entries) {
    if (e.name == name) return e;
  }
  FAIL("no cost entry " << name);
  throw;
}

}  // namespace

TEST_CASE("cost model totals are the sum of their entries") {
  const auto m = cost_model(ModelConfig::published(), 64, 64);
  std::uint64_t flops = 0, params = 0, bytes = 0;
  for (const auto& e : m.entries) {
    flops += e.flops;
    params += e.params;
    bytes += e.activation_bytes;
  }
  CHECK(m.total_flops() == flops);
  CHECK(m.total_params() == params);
  CHECK(m.total_activation_bytes() == bytes);
  CHECK(count_flops(ModelConfig::published(), 64, 64) == flops);
}

TEST_CASE("per-layer counts follow the convolution formulas") {
  const auto cfg = ModelConfig::published();
  const auto m = cost_model(cfg, 256, 256);
  CHECK(entry(m, "embed").params == 1296);
  CHECK(entry(m, "embed").flops == 256ull * 256 * 1296);
  const auto& pw = entry(m, "encoder1.block0.attn.q_pw");
  CHECK(pw.flops == 256ull * 256 * 48 * 48);
  CHECK(pw.params == 48 * 48);
  const auto& dw = entry(m, "encoder2.block0.attn.k_dw");
  CHECK(dw.flops == 128ull * 128 * 96 * 9);

  auto with_bias = cfg;
  with_bias.bias_free = false;
  CHECK(cost_model(with_bias, 256, 256).total_params() == count_params(with_bias));
  CHECK(count_params(with_bias) > count_params(cfg));
}

TEST_CASE("count_params agrees with the parameter declarations across configs") {
  for (std::size_t c : {4u, 8u, 16u}) {
    for (bool bias_free : {true, false}) {
      for (FfnVariant f : {FfnVariant::kGdfn, FfnVariant::kFn}) {
        ModelConfig cfg;
        cfg.base_dim = c;
        cfg.num_blocks = {1, 2, 1, 1};
        cfg.heads = {1, 2, 2, 4};
        cfg.refinement_blocks = 2;
        cfg.bias_free = bias_free;
        cfg.ffn_variant = f;
        cfg.attention_variant = f == FfnVariant::kFn ? AttentionVariant::kMta : AttentionVariant::kMdta;
        std::uint64_t total = 0;
        for (const auto& d : model_param_decls(cfg)) total += numel(d.shape);
        CHECK(count_params(cfg) == total);
      }
    }
  }
}

TEST_CASE("published configuration totals") {
  const auto cfg = ModelConfig::published();
  CHECK(std::abs(static_cast<double>(count_params(cfg)) / 26.12e6 - 1.0) < 0.01);
  const double macs = static_cast<double>(count_flops(cfg, 256, 256));
  const bool mac_ok = std::abs(macs / 141e9 - 1.0) <= 0.15;
  const bool double_ok = std::abs(2 * macs / 141e9 - 1.0) <= 0.15;
  CHECK((mac_ok || double_ok));
  CHECK_THROWS_AS(count_flops(cfg, 250, 256), DimensionError);
}

TEST_CASE("attention cost scaling") {
  const auto a = mdta_cost(32, 4, 32, 32);
  const auto b = mdta_cost(32, 4, 32, 64);
  CHECK(b.attention_flops == 2 * a.attention_flops);
  CHECK(a.map_bytes == b.map_bytes);
  CHECK(a.map_bytes == 4ull * 8 * 8 * 4);

  const auto s = spatial_attention_cost(32, 4, 16, 16);
  const auto t = spatial_attention_cost(32, 4, 32, 32);
  CHECK(t.attention_flops == 16 * s.attention_flops);
  CHECK(t.map_bytes == 16 * s.map_bytes);

  std::vector<std::pair<double, double>> mdta, spatial;
  for (std::size_t hw : {32u, 64u, 128u}) {
    mdta.emplace_back(hw * hw, static_cast<double>(mdta_cost(32, 4, hw, hw).attention_flops));
    spatial.emplace_back(hw * hw, static_cast<double>(spatial_attention_cost(32, 4, hw, hw).attention_flops));
  }
  CHECK(fit_loglog_slope(mdta) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit_loglog_slope(spatial) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("log-log slope fit") {
  CHECK(fit_loglog_slope({{1, 1}, {2, 2}, {4, 4}}) == doctest::Approx(1.0));
  CHECK(fit_loglog_slope({{1, 1}, {2, 4}, {4, 16}}) == doctest::Approx(2.0));
  CHECK(fit_loglog_slope({{1, 2}, {2, 4.2}, {4, 7.8}}) == doctest::Approx(0.98).epsilon(0.005));
  const double base = fit_loglog_slope({{1, 3}, {3, 5}, {9, 30}});
  CHECK(fit_loglog_slope({{1, 300}, {3, 500}, {9, 3000}}) == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS_AS(fit_loglog_slope({{1, 1}, {2, 0}}), DomainError);
  CHECK_THROWS_AS(fit_loglog_slope({{-1, 1}, {2, 1}}), DomainError);
  CHECK_THROWS_AS(fit_loglog_slope({{1, 1}}), DomainError);
}

TEST_CASE("scaling bench report structure") {
  const auto r = scaling_bench(8, 2, {8, 12, 16, 24}, {1, 0, 0});
  CHECK(r.rows.size() == 8);
  for (const auto& row : r.rows) {
    CHECK((row.kernel == "MDTA" || row.kernel == "spatial-SA"));
    CHECK(row.channels == 8);
    CHECK(row.wall_ns > 0);
    CHECK(row.analytic_flops > 0);
  }
  CHECK(r.analytic_slope("MDTA") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.analytic_slope("spatial-SA") == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::isfinite(r.wall_slope("MDTA")));

  const std::string csv = r.to_csv();
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "kernel,H,W,C,heads,analytic_flops,wall_ns,peak_bytes");
  CHECK(csv.find("# slope kernel=MDTA value=") != std::string::npos);
  CHECK(csv.find("# slope kernel=spatial-SA value=") != std::string::npos);

  CHECK_THROWS_AS(scaling_bench(8, 2, {8, 16, 24}), ConfigError);
  CHECK_THROWS_AS(scaling_bench(8, 2, {8, 16, 16, 24}), ConfigError);
  CHECK_THROWS_AS(r.wall_slope("none"), UsageError);
}
