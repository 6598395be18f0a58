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

#include "tatr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "tatr/image.hpp"

namespace tatr {

std::vector<ScheduleEntry> published_schedule() {
  return {{0, 128, 64}, {92000, 160, 40}, {156000, 192, 32}, {204000, 256, 16}, {240000, 320, 8}, {276000, 384, 8}};
}

void TrainConfig::validate() const {
  if (schedule.empty()) throw ConfigError("schedule must not be empty");
  if (schedule.front().start_iter != 0) throw ConfigError("schedule must start at iteration 0");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const ScheduleEntry& e = schedule[i];
    if (i > 0 && e.start_iter <= schedule[i - 1].start_iter) {
      throw ConfigError("schedule thresholds must be strictly increasing");
    }
    if (e.patch_size < 8 || e.patch_size % 8 != 0) {
      throw ConfigError("patch size " + std::to_string(e.patch_size) + " is not a positive multiple of 8");
    }
    if (e.batch_size == 0) throw ConfigError("batch size must be at least 1");
  }
  if (!(lr_min < lr_max) || lr_min < 0.0) throw ConfigError("need 0 <= lr_min < lr_max");
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (eval_patch % 8 != 0) throw ConfigError("eval_patch must be a multiple of 8");
}

template <typename T>
OptState<T> OptState<T>::zeros_like(const ParamStore<T>& params) {
  OptState s;
  for (const auto& [name, t] : params.entries()) {
    s.m.emplace_back(t.shape());
    s.v.emplace_back(t.shape());
  }
  return s;
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("l1_loss: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  const std::size_t n = pred.value().size();
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) total += std::abs(pred.value()[i] - target.value()[i]);
  const T loss = n ? total / T(n) : T(0);
  return make_result<T>("l1_loss", Tensor<T>::scalar(loss), {&pred, &target},
                        [np = pred.node(), nt = target.node(), n] {
                          return [np, nt, n](const Tensor<T>& g) {
                            Tensor<T> d(np->value.shape());
                            const T s = g[0] / T(n);
                            for (std::size_t i = 0; i < n; ++i) {
                              const T diff = np->value[i] - nt->value[i];
                              d[i] = diff > T(0) ? s : (diff < T(0) ? -s : T(0));
                            }
                            if (np->requires_grad) np->accumulate(d);
                            if (nt->requires_grad) {
                              for (T& v : d.data()) v = -v;
                              nt->accumulate(d);
                            }
                          };
                        });
}

double cosine_lr(std::uint64_t t, std::uint64_t total, double lr_max, double lr_min) {
  if (total == 0 || t >= total) return lr_min;
  const double frac = static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
void adamw_step(ParamStore<T>& params, std::span<const Tensor<T>> grads, OptState<T>& state,
                const AdamWSettings& s) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adamw_step: gradients and optimizer state must mirror the parameter store");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = T(s.beta1), b2 = T(s.beta2);
  const T c1 = T(1.0 - std::pow(s.beta1, t));
  const T c2 = T(1.0 - std::pow(s.beta2, t));
  const T lr = T(s.lr), eps = T(s.eps), decay = T(s.lr * s.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = params.entries()[i].second;
    const Tensor<T>& g = grads[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    if (g.shape() != w.shape() || m.shape() != w.shape() || v.shape() != w.shape()) {
      throw DimensionError("adamw_step: shape mismatch for '" + params.entries()[i].first + "'");
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      w[j] = w[j] - lr * m_hat / (std::sqrt(v_hat) + eps) - decay * w[j];
    }
  }
}

ScheduleEntry progressive_schedule(std::uint64_t iter, std::span<const ScheduleEntry> schedule) {
  if (schedule.empty()) throw ConfigError("progressive_schedule: empty schedule");
  const ScheduleEntry* current = &schedule.front();
  for (const ScheduleEntry& e : schedule) {
    if (e.start_iter <= iter) current = &e;
  }
  return *current;
}

Sample synth_sample(std::uint64_t seed, std::uint64_t index, std::size_t patch, double sigma, std::size_t channels) {
  Rng rng(derive_seed(seed, index));
  Tensor<float> clean({1, patch, patch, channels});
  std::vector<double> img(patch * patch * channels);
  const double size = static_cast<double>(patch);

  for (std::size_t c = 0; c < channels; ++c) {
    const double base = rng.uniform(0.2, 0.8);
    const double gx = rng.uniform(-0.3, 0.3);
    const double gy = rng.uniform(-0.3, 0.3);
    for (std::size_t y = 0; y < patch; ++y)
      for (std::size_t x = 0; x < patch; ++x)
        img[(y * patch + x) * channels + c] = base + gx * (x / size - 0.5) + gy * (y / size - 0.5);
  }

  const std::size_t rects = 1 + rng.below(4);
  for (std::size_t r = 0; r < rects; ++r) {
    const std::size_t x0 = rng.below(patch), y0 = rng.below(patch);
    const std::size_t w = 1 + rng.below(patch / 2 + 1), h = 1 + rng.below(patch / 2 + 1);
    const double opacity = rng.uniform(0.5, 1.0);
    std::vector<double> color(channels);
    for (double& v : color) v = rng.uniform();
    for (std::size_t y = y0; y < std::min(patch, y0 + h); ++y)
      for (std::size_t x = x0; x < std::min(patch, x0 + w); ++x)
        for (std::size_t c = 0; c < channels; ++c) {
          double& px = img[(y * patch + x) * channels + c];
          px = (1.0 - opacity) * px + opacity * color[c];
        }
  }

  const double amplitude = rng.uniform(0.02, 0.15);
  const double cycles = rng.uniform(1.0, 8.0);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> tint(channels);
  for (double& v : tint) v = rng.uniform(0.5, 1.0);
  const double cx = std::cos(angle), cy = std::sin(angle);
  for (std::size_t y = 0; y < patch; ++y)
    for (std::size_t x = 0; x < patch; ++x) {
      const double wave = amplitude * std::sin(2.0 * std::numbers::pi * cycles * (x * cx + y * cy) / size + phase);
      for (std::size_t c = 0; c < channels; ++c) img[(y * patch + x) * channels + c] += tint[c] * wave;
    }

  for (std::size_t i = 0; i < img.size(); ++i) clean[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));

  Sample s{clean, clean};
  if (sigma > 0.0) {
    const double stddev = sigma / 255.0;
    for (float& v : s.noisy.data()) v = static_cast<float>(v + stddev * rng.normal());
  }
  return s;
}

template <typename T>
Tensor<T> flip(const Tensor<T>& x, bool horizontal, bool vertical) {
  require_nhwc(x, "flip");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const std::size_t sy = vertical ? h - 1 - y : y;
        const std::size_t sx = horizontal ? w - 1 - xx : xx;
        std::copy_n(&x.at(b, sy, sx, 0), c, &out.at(b, y, xx, 0));
      }
  return out;
}

FlipChoice draw_flip(Rng& rng) {
  FlipChoice f;
  f.horizontal = rng.coin();
  f.vertical = rng.coin();
  return f;
}

template <typename T>
Tensor<T> augment_flip(const Tensor<T>& x, Rng& rng) {
  const FlipChoice f = draw_flip(rng);
  return flip(x, f.horizontal, f.vertical);
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
  if (a.shape() != b.shape()) throw DimensionError("psnr: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (!(peak > 0.0)) throw DomainError("psnr: peak must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = a.size() ? se / static_cast<double>(a.size()) : 0.0;
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

double mean_psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
  require_nhwc(a, "mean_psnr");
  if (a.shape() != b.shape()) throw DimensionError("mean_psnr: shape mismatch");
  const std::size_t n = a.dim(0), per = a.size() / std::max<std::size_t>(n, 1);
  const Shape one{1, a.dim(1), a.dim(2), a.dim(3)};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> ai(one, std::vector<float>(a.ptr() + i * per, a.ptr() + (i + 1) * per));
    Tensor<float> bi(one, std::vector<float>(b.ptr() + i * per, b.ptr() + (i + 1) * per));
    total += psnr(ai, bi, peak);
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

namespace {

Tensor<float> to_channels(const Tensor<float>& img, std::size_t channels) {
  const std::size_t have = img.dim(3);
  if (have == channels) return img;
  const std::size_t pixels = img.size() / have;
  Tensor<float> out({1, img.dim(1), img.dim(2), channels});
  for (std::size_t p = 0; p < pixels; ++p) {
    if (channels == 1) {
      float acc = 0.0f;
      for (std::size_t c = 0; c < have; ++c) acc += img[p * have + c];
      out[p] = acc / static_cast<float>(have);
    } else {
      for (std::size_t c = 0; c < channels; ++c) out[p * channels + c] = img[p * have];
    }
  }
  return out;
}

}  // namespace

PatchSource::PatchSource(const TrainConfig& cfg, std::size_t channels)
    : seed_(cfg.seed), sigma_(cfg.noise_sigma), channels_(channels) {
  if (cfg.dataset == "synthetic") return;
  const std::filesystem::path dir(cfg.dataset);
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("dataset must be 'synthetic' or a directory, got '" + cfg.dataset + "'");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("dataset directory '" + cfg.dataset + "' holds no .pgm/.ppm images");
  for (const auto& f : files) images_.push_back(to_channels(image_to_tensor(load_image(f)), channels_));
}

Sample PatchSource::sample(std::uint64_t index, std::size_t patch) const {
  if (images_.empty()) return synth_sample(seed_, index, patch, sigma_, channels_);
  Rng rng(derive_seed(seed_ ^ 0xDA7A5E7ULL, index));
  const Tensor<float>& img = images_[rng.below(images_.size())];
  if (img.dim(1) < patch || img.dim(2) < patch) {
    throw ConfigError("dataset image smaller than the " + std::to_string(patch) + " px patch");
  }
  const std::size_t y0 = rng.below(img.dim(1) - patch + 1), x0 = rng.below(img.dim(2) - patch + 1);
  Tensor<float> clean({1, patch, patch, channels_});
  for (std::size_t y = 0; y < patch; ++y)
    std::copy_n(&img.at(0, y0 + y, x0, 0), patch * channels_, &clean.at(0, y, 0, 0));
  Sample s{clean, clean};
  const double stddev = sigma_ / 255.0;
  if (stddev > 0.0) {
    for (float& v : s.noisy.data()) v = static_cast<float>(v + stddev * rng.normal());
  }
  return s;
}

Sample held_out_set(const TrainConfig& cfg, std::size_t channels, std::size_t count) {
  const std::size_t patch = cfg.eval_patch ? cfg.eval_patch : cfg.schedule.front().patch_size;
  Sample set{Tensor<float>({count, patch, patch, channels}), Tensor<float>({count, patch, patch, channels})};
  const std::size_t per = patch * patch * channels;
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = synth_sample(cfg.seed + 1, i, patch, cfg.noise_sigma, channels);
    std::copy_n(s.clean.ptr(), per, set.clean.ptr() + i * per);
    std::copy_n(s.noisy.ptr(), per, set.noisy.ptr() + i * per);
  }
  return set;
}

std::string metric_csv_header() { return "iter,lr,patch,batch,loss,eval_psnr"; }

std::string metric_csv_line(const MetricRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%.9g,%zu,%zu,%.9g,", static_cast<unsigned long long>(row.iter), row.lr,
                row.patch, row.batch, row.loss);
  std::string line = buf;
  if (row.eval_psnr) {
    std::snprintf(buf, sizeof(buf), "%.6f", *row.eval_psnr);
    line += buf;
  }
  return line;
}

double evaluate_psnr(const Model<float>& model, const Sample& data) {
  return mean_psnr(model.infer(data.noisy), data.clean);
}

TrainState train_loop(const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainHooks& hooks) {
  model_cfg.validate();
  cfg.validate();
  const std::size_t channels = model_cfg.in_channels;
  TrainState state{Model<float>::build(model_cfg, cfg.seed), {}, 0, {}, {}, 0.0, std::nullopt};
  state.opt = OptState<float>::zeros_like(state.model.params());
  Rng aug_rng(derive_seed(cfg.seed, 0xF11Bu));
  state.rng_state = aug_rng.state();

  const PatchSource source(cfg, channels);
  const Sample held_out = held_out_set(cfg, channels);
  state.noisy_psnr = mean_psnr(held_out.noisy, held_out.clean);

  const AdamWSettings base{cfg.lr_max, cfg.betas[0], cfg.betas[1], 1e-8, cfg.weight_decay};
  std::uint64_t sample_index = 0;
  for (std::uint64_t it = 0; it < cfg.total_iters; ++it) {
    const ScheduleEntry phase = progressive_schedule(it, cfg.schedule);
    const std::size_t p = phase.patch_size, per = p * p * channels;
    Tensor<float> noisy({phase.batch_size, p, p, channels});
    Tensor<float> clean({phase.batch_size, p, p, channels});
    for (std::size_t b = 0; b < phase.batch_size; ++b) {
      const Sample s = source.sample(sample_index++, p);
      const FlipChoice f = draw_flip(aug_rng);
      const Tensor<float> fc = flip(s.clean, f.horizontal, f.vertical);
      const Tensor<float> fn = flip(s.noisy, f.horizontal, f.vertical);
      std::copy_n(fc.ptr(), per, clean.ptr() + b * per);
      std::copy_n(fn.ptr(), per, noisy.ptr() + b * per);
    }

    AdamWSettings step = base;
    step.lr = cosine_lr(it, cfg.total_iters, cfg.lr_max, cfg.lr_min);
    MetricRow row{it, step.lr, p, phase.batch_size, 0.0, std::nullopt};
    try {
      Tape<float> tape;
      const BoundParams<float> params(state.model.params(), &tape);
      const Var<float> pred = state.model.forward(params, Var<float>::constant(std::move(noisy)));
      const Var<float> loss = l1_loss(pred, Var<float>::constant(std::move(clean)));
      tape.backward(loss);
      row.loss = loss.value()[0];
      std::vector<Tensor<float>> grads;
      grads.reserve(params.vars().size());
      for (const auto& v : params.vars()) grads.push_back(v.grad());
      adamw_step<float>(state.model.params(), grads, state.opt, step);
      if (!std::all_of(state.model.params().entries().begin(), state.model.params().entries().end(),
                       [](const auto& e) { return e.second.all_finite(); })) {
        throw NumericError("optimizer produced non-finite parameters");
      }
    } catch (const NumericError& e) {
      state.iteration = it;
      state.rng_state = aug_rng.state();
      if (hooks.on_failure) hooks.on_failure(state);
      throw NumericError("training diverged at iteration " + std::to_string(it) + " (lr " + std::to_string(step.lr) +
                         ", patch " + std::to_string(p) + "): " + e.what());
    }

    state.iteration = it + 1;
    state.rng_state = aug_rng.state();
    const bool last = state.iteration == cfg.total_iters;
    if ((cfg.eval_every && state.iteration % cfg.eval_every == 0) || last) {
      row.eval_psnr = evaluate_psnr(state.model, held_out);
      if (last) state.final_psnr = row.eval_psnr;
    }
    state.log.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_checkpoint && cfg.ckpt_every && state.iteration % cfg.ckpt_every == 0 && !last) {
      hooks.on_checkpoint(state);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  return state;
}

#define TATR_INSTANTIATE(T)                                                                          \
  template struct OptState<T>;                                                                       \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                             \
  template void adamw_step(ParamStore<T>&, std::span<const Tensor<T>>, OptState<T>&, const AdamWSettings&); \
  template Tensor<T> flip(const Tensor<T>&, bool, bool);                                             \
  template Tensor<T> augment_flip(const Tensor<T>&, Rng&);                                           \
  template double psnr(const Tensor<T>&, const Tensor<T>&, double);

TATR_INSTANTIATE(float)
TATR_INSTANTIATE(double)

#undef TATR_INSTANTIATE

}  // namespace tatr
