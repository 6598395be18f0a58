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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tatr/network.hpp"
#include "tatr/random.hpp"

namespace tatr {

/// From `start_iter` on, train on patch_size^2 crops in batches of batch_size.
struct ScheduleEntry {
  std::uint64_t start_iter = 0;
  std::size_t patch_size = 128;
  std::size_t batch_size = 64;

  bool operator==(const ScheduleEntry&) const = default;
};

/// (128,64)@0, (160,40)@92K, (192,32)@156K, (256,16)@204K, (320,8)@240K, (384,8)@276K.
std::vector<ScheduleEntry> published_schedule();

struct TrainConfig {
  std::uint64_t total_iters = 300000;
  double lr_max = 3e-4;
  double lr_min = 1e-6;
  std::array<double, 2> betas{0.9, 0.999};
  double weight_decay = 1e-4;
  std::vector<ScheduleEntry> schedule = published_schedule();
  std::uint64_t seed = 0;
  double noise_sigma = 25.0;  // on the 0..255 scale
  std::uint64_t eval_every = 1000;
  std::string dataset = "synthetic";  // or a directory of .pgm / .ppm images
  std::uint64_t ckpt_every = 0;       // 0: only the final checkpoint
  std::size_t eval_patch = 0;         // 0: first schedule patch size

  void validate() const;
};

/// AdamW moments mirroring a ParamStore entry by entry.
template <typename T>
struct OptState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  static OptState zeros_like(const ParamStore<T>& params);
};

struct AdamWSettings {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// mean |pred - target|; the gradient is sign(pred - target) / n with sign(0) = 0.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target);

/// Single-cycle cosine decay from lr_max at t=0 to lr_min at t=total.
/// t > total clamps to lr_min.
double cosine_lr(std::uint64_t t, std::uint64_t total, double lr_max, double lr_min);

/// One decoupled-weight-decay Adam update, in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w
template <typename T>
void adamw_step(ParamStore<T>& params, std::span<const Tensor<T>> grads, OptState<T>& state,
                const AdamWSettings& settings);

/// Entry with the largest start_iter <= iter.
ScheduleEntry progressive_schedule(std::uint64_t iter, std::span<const ScheduleEntry> schedule);

struct Sample {
  Tensor<float> clean;  // 1 x P x P x C in [0, 1]
  Tensor<float> noisy;  // clean + N(0, (sigma/255)^2), not clipped
};

/// Procedural clean patch plus Gaussian noise, a pure function of
/// (seed, index). The clean image is a per-channel linear ramp, overlaid
/// with 1-4 blended rectangles and one oriented sinusoid, clamped to [0, 1].
Sample synth_sample(std::uint64_t seed, std::uint64_t index, std::size_t patch, double sigma,
                    std::size_t channels = 3);

/// Mirror across the vertical axis (`horizontal`) and/or the horizontal axis.
template <typename T>
Tensor<T> flip(const Tensor<T>& x, bool horizontal, bool vertical);

struct FlipChoice {
  bool horizontal = false;
  bool vertical = false;
};
/// Two independent fair coins.
FlipChoice draw_flip(Rng& rng);

template <typename T>
Tensor<T> augment_flip(const Tensor<T>& x, Rng& rng);

/// 10 log10(peak^2 / MSE), capped at 100 dB when the images are identical.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0);

/// Mean per-image PSNR over the batch axis of N x H x W x C tensors.
double mean_psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0);

/// Source of training pairs: synthetic, or random crops from an image directory.
class PatchSource {
 public:
  PatchSource(const TrainConfig& cfg, std::size_t channels);
  Sample sample(std::uint64_t index, std::size_t patch) const;

 private:
  std::uint64_t seed_;
  double sigma_;
  std::size_t channels_;
  std::vector<Tensor<float>> images_;  // empty for synthetic data
};

/// Held-out batch: `count` synthetic patches drawn from seed + 1.
Sample held_out_set(const TrainConfig& cfg, std::size_t channels, std::size_t count = 16);

struct MetricRow {
  std::uint64_t iter = 0;
  double lr = 0.0;
  std::size_t patch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  std::optional<double> eval_psnr;
};

/// Header and one line per row of the metric log.
std::string metric_csv_header();
std::string metric_csv_line(const MetricRow& row);

struct TrainState {
  Model<float> model;
  OptState<float> opt;
  std::uint64_t iteration = 0;
  std::string rng_state;
  std::vector<MetricRow> log;
  double noisy_psnr = 0.0;            // held-out input PSNR
  std::optional<double> final_psnr;   // held-out restored PSNR at the end
};

struct TrainHooks {
  std::function<void(const MetricRow&)> on_row;
  /// Called every ckpt_every iterations and once at the end.
  std::function<void(const TrainState&)> on_checkpoint;
  /// Called with the state at the failing iteration before a NumericError propagates.
  std::function<void(const TrainState&)> on_failure;
};

/// Runs total_iters optimization steps; deterministic given the configs.
TrainState train_loop(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const TrainHooks& hooks = {});

/// Held-out PSNR of `model` on `data.noisy` vs `data.clean`.
double evaluate_psnr(const Model<float>& model, const Sample& data);

}  // namespace tatr
