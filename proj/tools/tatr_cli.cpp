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

// tatr: train, restore, benchmark and inspect transposed-attention
// restoration models from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tatr/bench.hpp"
#include "tatr/checkpoint.hpp"
#include "tatr/config.hpp"
#include "tatr/gradcheck.hpp"
#include "tatr/image.hpp"
#include "tatr/train.hpp"

namespace {

using namespace tatr;

constexpr double kGradTolerance = 1e-4;

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(n) - 2;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

Tensor<float> reflect_pad(const Tensor<float>& x, std::size_t height, std::size_t width) {
  const std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<float> out({1, height, width, c});
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y), h);
    for (std::size_t xx = 0; xx < width; ++xx) {
      const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(xx), w);
      std::copy_n(&x.at(0, sy, sx, 0), c, &out.at(0, y, xx, 0));
    }
  }
  return out;
}

Tensor<float> crop(const Tensor<float>& x, std::size_t height, std::size_t width) {
  const std::size_t c = x.dim(3);
  Tensor<float> out({1, height, width, c});
  for (std::size_t y = 0; y < height; ++y) std::copy_n(&x.at(0, y, 0, 0), width * c, &out.at(0, y, 0, 0));
  return out;
}

std::size_t round_up8(std::size_t v) { return (v + 7) / 8 * 8; }

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--sizes: '" + item + "' is not a positive integer");
    }
  }
  return out;
}

int run_train(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.train.seed = *seed;
  const std::filesystem::path out(out_dir);
  std::filesystem::create_directories(out);
  {
    std::ofstream resolved(out / "config.json");
    resolved << run_config_to_json(cfg);
  }
  std::ofstream metrics(out / "metrics.csv", std::ios::trunc);
  if (!metrics) throw Error("cannot write " + (out / "metrics.csv").string());
  metrics << metric_csv_header() << "\n";

  TrainHooks hooks;
  hooks.on_row = [&](const MetricRow& row) {
    metrics << metric_csv_line(row) << "\n";
    metrics.flush();
    if (row.eval_psnr) {
      std::printf("iter %llu  loss %.5f  lr %.3g  held-out PSNR %.3f dB\n",
                  static_cast<unsigned long long>(row.iter + 1), row.loss, row.lr, *row.eval_psnr);
      std::fflush(stdout);
    }
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    const Checkpoint ckpt = checkpoint_from_state(s);
    save_checkpoint(ckpt, out / ("ckpt_" + std::to_string(s.iteration) + ".rstm"));
    save_checkpoint(ckpt, out / "final.rstm");
  };
  hooks.on_failure = [&](const TrainState& s) {
    save_checkpoint(checkpoint_from_state(s), out / "failure.rstm");
    std::fprintf(stderr, "state at iteration %llu written to %s\n", static_cast<unsigned long long>(s.iteration),
                 (out / "failure.rstm").string().c_str());
  };
  const TrainState state = train_loop(cfg.model, cfg.train, hooks);
  std::printf("noisy input PSNR %.3f dB\n", state.noisy_psnr);
  if (state.final_psnr) {
    std::printf("restored PSNR %.3f dB (gain %+.3f dB)\n", *state.final_psnr, *state.final_psnr - state.noisy_psnr);
  }
  return 0;
}

int run_restore(const std::string& ckpt_path, const std::string& in_path, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ImageBuffer img = load_image(in_path);
  if (img.channels != ckpt.config.in_channels) {
    throw DimensionError("image has " + std::to_string(img.channels) + " channels, the model expects " +
                         std::to_string(ckpt.config.in_channels));
  }
  const Model<float> model(ckpt.config, ckpt.params);
  const Tensor<float> x = image_to_tensor(img);
  const std::size_t h = round_up8(img.height), w = round_up8(img.width);
  const Tensor<float> padded = (h == img.height && w == img.width) ? x : reflect_pad(x, h, w);
  const Tensor<float> restored = crop(model.infer(padded), img.height, img.width);
  save_image(tensor_to_image(restored, img.bit_depth), out_path);
  return 0;
}

int run_bench(const std::string& sizes, std::size_t channels, std::size_t heads, std::size_t repeats,
              std::size_t warmups, const std::string& out_path, std::uint64_t seed) {
  const BenchReport report = scaling_bench(channels, heads, parse_sizes(sizes), {repeats, warmups, seed});
  const std::string csv = report.to_csv();
  if (out_path.empty() || out_path == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error("cannot write " + out_path);
    out << csv;
    for (const auto& [kernel, slope] : report.wall_slopes) {
      std::printf("%-10s wall-time slope %.3f  analytic attention slope %.3f\n", kernel.c_str(), slope,
                  report.analytic_slope(kernel));
    }
  }
  return 0;
}

int run_gradcheck(const std::string& variant, std::uint64_t seed) {
  std::vector<std::pair<std::string, GradCheckReport>> results;
  const std::string wanted = variant;
  if (wanted.empty() || wanted == "all") {
    results = grad_suite(seed);
  } else if (wanted == "model") {
    results.emplace_back("model", model_grad_check(seed));
  } else {
    const auto plus = wanted.find('+');
    if (plus == std::string::npos) throw UsageError("--variant expects ATTENTION+FFN (e.g. MDTA+GDFN), model or all");
    const AttentionVariant a = parse_attention_variant(wanted.substr(0, plus));
    const FfnVariant f = parse_ffn_variant(wanted.substr(plus + 1));
    results.emplace_back(variant_label(a, f), block_grad_check(a, f, seed));
  }
  bool ok = true;
  for (const auto& [name, r] : results) {
    const bool pass = r.max_rel_error < kGradTolerance;
    ok = ok && pass;
    std::printf("%-10s max rel error %.3e over %zu coordinates  %s\n", name.c_str(), r.max_rel_error,
                r.coordinates_checked, pass ? "ok" : "FAILED");
  }
  return ok ? 0 : 1;
}

int run_count(const std::string& config_path, std::size_t hw) {
  const ModelConfig cfg = config_path.empty() ? ModelConfig::published() : load_run_config(config_path).model;
  const std::uint64_t params = count_params(cfg);
  const std::uint64_t macs = count_flops(cfg, hw, hw);
  std::printf("params        %llu (%.2fM)\n", static_cast<unsigned long long>(params), params / 1e6);
  std::printf("MACs @%zux%zu  %llu (%.2fG)\n", hw, hw, static_cast<unsigned long long>(macs), macs / 1e9);
  std::printf("2xMACs        %llu (%.2fG)\n", static_cast<unsigned long long>(2 * macs), 2 * macs / 1e9);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transposed-attention image restoration: train, restore, bench, gradcheck, count"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool seed_given = false;
  const auto set_seed = [&](std::uint64_t s) {
    seed = s;
    seed_given = true;
  };

  std::string config_path, out_dir;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", config_path, "Config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option_function<std::uint64_t>("--seed", set_seed,
                                            "Random seed (overrides the config)");

  std::string ckpt_path, in_path, out_path;
  auto* restore = app.add_subcommand("restore", "Restore a Netpbm image with a checkpoint");
  restore->add_option("--ckpt", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  restore->add_option("--in", in_path, "Input .pgm/.ppm")->required()->check(CLI::ExistingFile);
  restore->add_option("--out", out_path, "Output .pgm/.ppm")->required();
  restore->add_option_function<std::uint64_t>("--seed", set_seed,
                                              "Random seed (unused by inference)");

  std::string sizes = "32,48,64,96,128", bench_out;
  std::size_t channels = 32, heads = 4, repeats = 5, warmups = 2;
  auto* bench = app.add_subcommand("bench", "Time channel vs spatial attention across resolutions");
  bench->add_option("--sizes", sizes, "Comma-separated H=W values")->capture_default_str();
  bench->add_option("--channels", channels, "Channel count")->capture_default_str();
  bench->add_option("--heads", heads, "Attention heads")->capture_default_str();
  bench->add_option("--repeats", repeats, "Timed repeats (median)")->capture_default_str();
  bench->add_option("--warmups", warmups, "Discarded warmup runs")->capture_default_str();
  bench->add_option("--out", bench_out, "CSV report path ('-' for stdout)");
  bench->add_option_function<std::uint64_t>("--seed", set_seed,
                                            "Random seed");

  std::string variant = "all";
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks in 64-bit");
  gradcheck->add_option("--variant", variant, "ATTENTION+FFN, model, or all")->capture_default_str();
  gradcheck->add_option_function<std::uint64_t>("--seed", set_seed,
                                                "Random seed");

  std::string count_config;
  std::size_t hw = 256;
  auto* count = app.add_subcommand("count", "Parameter and MAC counts");
  count->add_option("--config", count_config, "Config JSON (default: published configuration)")
      ->check(CLI::ExistingFile);
  count->add_option("--hw", hw, "Square input size")->capture_default_str();
  count->add_option_function<std::uint64_t>("--seed", set_seed,
                                            "Random seed (unused)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return run_train(config_path, out_dir, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt);
    if (*restore) return run_restore(ckpt_path, in_path, out_path);
    if (*bench) return run_bench(sizes, channels, heads, repeats, warmups, bench_out, seed);
    if (*gradcheck) return run_gradcheck(variant, seed);
    if (*count) {
      if (hw == 0 || hw % 8 != 0) throw UsageError("--hw must be a positive multiple of 8");
      return run_count(count_config, hw);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
