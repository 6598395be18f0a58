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
#include <numeric>

#include "oracles.hpp"
#include "tatr/train.hpp"

using namespace tatr;

namespace {

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.base_dim = 8;
  cfg.num_blocks = {1, 1, 1, 1};
  cfg.heads = {1, 1, 1, 1};
  cfg.refinement_blocks = 1;
  return cfg;
}

TrainConfig short_run(std::uint64_t iters) {
  TrainConfig t;
  t.total_iters = iters;
  t.schedule = {{0, 16, 4}, {iters / 2 + 1, 24, 2}};
  t.eval_every = 0;
  t.eval_patch = 16;
  return t;
}

}  // namespace

TEST_CASE("l1 loss value and gradient") {
  Tape<double> tape;
  const auto pred = tape.leaf(Tensor<double>({2}, {1, 3}));
  const auto target = Var<double>::constant(Tensor<double>({2}, {0, 1}));
  const auto loss = l1_loss(pred, target);
  CHECK(loss.value()[0] == 1.5);
  tape.backward(loss);
  CHECK(pred.grad() == Tensor<double>({2}, {0.5, 0.5}));

  Tape<double> tape2;
  const auto p2 = tape2.leaf(Tensor<double>({3}, {1, -2, 0}));
  const auto l2 = l1_loss(p2, Var<double>::constant(Tensor<double>({3}, {1, 0, 1})));
  CHECK(l2.value()[0] == doctest::Approx(1.0));
  tape2.backward(l2);
  CHECK(p2.grad() == Tensor<double>({3}, {0.0, -1.0 / 3, -1.0 / 3}));
  CHECK_THROWS_AS(l1_loss(p2, Var<double>::constant(Tensor<double>({2}))), DimensionError);
}

TEST_CASE("cosine schedule endpoints, midpoint and monotonicity") {
  CHECK(cosine_lr(0, 1000, 3e-4, 1e-6) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(cosine_lr(1000, 1000, 3e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(cosine_lr(500, 1000, 3e-4, 1e-6) == doctest::Approx(1.505e-4).epsilon(1e-12));
  CHECK(cosine_lr(5000, 1000, 3e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
  double prev = 1.0;
  for (std::uint64_t t = 0; t <= 300000; t += 997) {
    const double lr = cosine_lr(t, 300000, 3e-4, 1e-6);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("adamw single-step examples") {
  const auto run = [](double wd, double g) {
    ParamStore<double> p;
    p.add("w", Tensor<double>({1}, {1.0}));
    auto st = OptState<double>::zeros_like(p);
    const std::vector<Tensor<double>> grads{Tensor<double>({1}, {g})};
    adamw_step<double>(p, grads, st, {0.1, 0.9, 0.999, 1e-8, wd});
    return p.at("w")[0];
  };
  CHECK(run(0.0, 1.0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(run(1e-4, 1.0) == doctest::Approx(0.89999).epsilon(1e-7));
  CHECK(run(0.0, 0.0) == 1.0);
}

TEST_CASE("adamw matches the scalar oracle over ten steps") {
  const auto w0 = oracle::random_tensor<double>({7}, 1);
  ParamStore<double> p;
  p.add("w", w0);
  auto st = OptState<double>::zeros_like(p);
  std::vector<oracle::AdamScalar> ref;
  for (double w : w0.data()) ref.push_back({w});
  tatr::Rng rng(2);
  for (int step = 0; step < 10; ++step) {
    Tensor<double> g({7});
    for (double& v : g.data()) v = rng.normal();
    const double lr = 1e-2 * (1.0 + step);
    adamw_step<double>(p, std::vector<Tensor<double>>{g}, st, {lr, 0.9, 0.999, 1e-8, 1e-4});
    for (std::size_t i = 0; i < 7; ++i) oracle::adamw_scalar(ref[i], g[i], lr, 0.9, 0.999, 1e-8, 1e-4);
  }
  CHECK(st.step == 10);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(std::abs(p.at("w")[i] - ref[i].w) <= 1e-12 * std::max(1.0, std::abs(ref[i].w)));
    CHECK(std::abs(st.m[0][i] - ref[i].m) <= 1e-12);
    CHECK(std::abs(st.v[0][i] - ref[i].v) <= 1e-12);
  }
}

TEST_CASE("adamw rejects mismatched gradients") {
  ParamStore<float> p;
  p.add("w", Tensor<float>({2}));
  auto st = OptState<float>::zeros_like(p);
  CHECK_THROWS_AS(adamw_step<float>(p, std::vector<Tensor<float>>{Tensor<float>({3})}, st, {}), DimensionError);
}

TEST_CASE("progressive schedule reproduces the published phases") {
  const auto s = published_schedule();
  REQUIRE(s.size() == 6);
  const std::vector<ScheduleEntry> want{{0, 128, 64},     {92000, 160, 40}, {156000, 192, 32},
                                        {204000, 256, 16}, {240000, 320, 8}, {276000, 384, 8}};
  CHECK(s == want);
  CHECK(progressive_schedule(0, s) == want[0]);
  CHECK(progressive_schedule(91999, s) == want[0]);
  CHECK(progressive_schedule(92000, s) == want[1]);
  for (std::size_t i = 1; i < want.size(); ++i) {
    CHECK(progressive_schedule(want[i].start_iter - 1, s) == want[i - 1]);
    CHECK(progressive_schedule(want[i].start_iter, s) == want[i]);
  }
  CHECK(progressive_schedule(10'000'000, s) == want[5]);
  CHECK_THROWS_AS(progressive_schedule(0, {}), ConfigError);
}

TEST_CASE("training config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.schedule = {{0, 12, 4}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.schedule = {{0, 16, 4}, {0, 24, 2}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.schedule = {{5, 16, 4}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.schedule = {{0, 16, 0}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr_min = t.lr_max;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("synthetic samples: determinism, range and noise level") {
  const auto a = synth_sample(3, 17, 32, 25.0);
  const auto b = synth_sample(3, 17, 32, 25.0);
  CHECK(bit_equal(a.clean, b.clean));
  CHECK(bit_equal(a.noisy, b.noisy));
  CHECK_FALSE(bit_equal(a.clean, synth_sample(3, 18, 32, 25.0).clean));
  for (float v : a.clean.data()) CHECK((v >= 0.0f && v <= 1.0f));

  const auto quiet = synth_sample(3, 17, 32, 0.0);
  CHECK(bit_equal(quiet.clean, quiet.noisy));

  double se = 0.0;
  std::size_t n = 0;
  for (std::uint64_t i = 0; i < 64; ++i) {
    const auto s = synth_sample(9, i, 48, 25.0);
    for (std::size_t j = 0; j < s.clean.size(); ++j) {
      const double d = s.noisy[j] - s.clean[j];
      se += d * d;
    }
    n += s.clean.size();
  }
  const double want = (25.0 / 255.0) * (25.0 / 255.0);
  CHECK(std::abs(se / n / want - 1.0) < 0.05);
}

TEST_CASE("flips") {
  const Tensor<float> x({1, 2, 2, 1}, {1, 2, 3, 4});
  CHECK(flip(x, false, true) == Tensor<float>({1, 2, 2, 1}, {3, 4, 1, 2}));
  CHECK(flip(x, true, false) == Tensor<float>({1, 2, 2, 1}, {2, 1, 4, 3}));
  CHECK(flip(x, false, false) == x);

  const auto r = oracle::random_tensor<float>({2, 5, 7, 3}, 4);
  CHECK(flip(flip(r, true, false), true, false) == r);
  CHECK(flip(flip(r, false, true), false, true) == r);

  Rng rng(5);
  bool seen[2][2] = {};
  for (int i = 0; i < 64; ++i) {
    Rng copy = rng;
    const FlipChoice f = draw_flip(copy);
    const auto y = augment_flip(r, rng);
    CHECK(y == flip(r, f.horizontal, f.vertical));
    seen[f.horizontal][f.vertical] = true;
    std::vector<float> a(r.data().begin(), r.data().end()), b(y.data().begin(), y.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK((seen[0][0] && seen[0][1] && seen[1][0] && seen[1][1]));
}

TEST_CASE("psnr") {
  const auto x = oracle::random_tensor<float>({1, 4, 4, 1}, 6, 0.0, 1.0);
  CHECK(psnr(x, x) == 100.0);
  const auto z = Tensor<double>::full({1, 10, 10, 1}, 0.0);
  const auto o = Tensor<double>::full({1, 10, 10, 1}, 0.1);
  CHECK(psnr(z, o) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(z, Tensor<double>({1, 10, 10, 2})), DimensionError);

  double total = 0.0;
  for (std::uint64_t i = 0; i < 16; ++i) {
    const auto s = synth_sample(1, i, 64, 25.0);
    total += psnr(s.noisy, s.clean);
  }
  CHECK(total / 16 == doctest::Approx(20.17).epsilon(0.01));
}

TEST_CASE("metric log format") {
  CHECK(metric_csv_header() == "iter,lr,patch,batch,loss,eval_psnr");
  MetricRow r{12, 3e-4, 48, 8, 0.125, std::nullopt};
  const std::string line = metric_csv_line(r);
  CHECK(line.starts_with("12,"));
  CHECK(line.back() == ',');
  r.eval_psnr = 25.5;
  CHECK(metric_csv_line(r).ends_with(",25.500000"));
}

TEST_CASE("zero iterations leave the initialization untouched") {
  auto t = short_run(0);
  const auto state = train_loop(small_model(), t);
  CHECK(state.iteration == 0);
  CHECK(bit_equal(state.model.params(), Model<float>::build(small_model(), t.seed).params()));
  CHECK(state.log.empty());
}

TEST_CASE("training lowers the loss and follows the schedule") {
  auto t = short_run(200);
  t.eval_every = 100;
  std::vector<MetricRow> rows;
  const auto state = train_loop(small_model(), t, {.on_row = [&](const MetricRow& r) { rows.push_back(r); }});
  REQUIRE(rows.size() == 200);
  CHECK(state.iteration == 200);
  CHECK(rows[0].patch == 16);
  CHECK(rows[100].patch == 16);
  CHECK(rows[101].patch == 24);
  CHECK(rows[101].batch == 2);
  CHECK(rows[0].lr == doctest::Approx(t.lr_max));
  CHECK(rows[99].eval_psnr.has_value());
  CHECK_FALSE(rows[100].eval_psnr.has_value());
  CHECK(rows[199].eval_psnr.has_value());

  const auto window = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t i = end - 50; i < end; ++i) s += rows[i].loss;
    return s / 50;
  };
  CHECK(window(200) < window(50));
}

TEST_CASE("a diverging run reports its state before failing") {
  auto t = short_run(20);
  t.lr_max = 1e30;
  t.lr_min = 1e29;
  bool dumped = false;
  std::uint64_t failed_at = 0;
  TrainHooks hooks;
  hooks.on_failure = [&](const TrainState& s) {
    dumped = true;
    failed_at = s.iteration;
  };
  CHECK_THROWS_AS(train_loop(small_model(), t, hooks), NumericError);
  CHECK(dumped);
  CHECK(failed_at < 20);
}
