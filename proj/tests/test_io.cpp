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

#include <cstring>
#include <filesystem>
#include <string>

#include "oracles.hpp"
#include "tatr/checkpoint.hpp"
#include "tatr/config.hpp"
#include "tatr/image.hpp"

using namespace tatr;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> body) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng.next_u64());
  return v;
}

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.base_dim = 8;
  cfg.num_blocks = {1, 1, 1, 1};
  cfg.heads = {1, 1, 1, 1};
  cfg.refinement_blocks = 1;
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tatr_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("netpbm decode examples") {
  auto img = decode_netpbm(bytes_of("P5\n1 1\n255\n", {128}));
  CHECK(img.channels == 1);
  CHECK(img.bit_depth == 8);
  CHECK(img.values[0] == doctest::Approx(0.501961).epsilon(1e-6));

  img = decode_netpbm(bytes_of("P5 1 1 65535\n", {0xFF, 0xFF}));
  CHECK(img.bit_depth == 16);
  CHECK(img.values[0] == 1.0f);

  img = decode_netpbm(bytes_of("P6\n# comment\n2 1\n255\n", {0, 255, 10, 20, 30, 40}));
  CHECK(img.channels == 3);
  CHECK(img.width == 2);
  CHECK(img.values.size() == 6);
  CHECK(img.values[1] == 1.0f);
}

TEST_CASE("netpbm errors carry byte offsets") {
  const auto offset_of = [](const std::vector<std::uint8_t>& b) -> std::ptrdiff_t {
    try {
      decode_netpbm(b);
    } catch (const ParseError& e) {
      return static_cast<std::ptrdiff_t>(e.offset());
    }
    return -1;
  };
  CHECK(offset_of(bytes_of("P3\n1 1\n255\n", {1})) == 0);
  CHECK(offset_of(bytes_of("P5\n1 1\n1000\n", {1})) == 7);
  CHECK(offset_of(bytes_of("P5\n2 2\n255\n", {1, 2, 3})) >= 11);
  CHECK(offset_of(bytes_of("P5\nx 2\n255\n", {})) == 3);
  CHECK(offset_of(bytes_of("P6\n1 1\n65535\n", {0, 1, 2})) >= 0);
}

TEST_CASE("netpbm round trips are byte-identical") {
  for (int depth : {8, 16}) {
    for (std::size_t channels : {1u, 3u}) {
      const std::size_t w = 13, h = 7, sample = depth == 8 ? 1 : 2;
      const std::string header = std::string(channels == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " +
                                 std::to_string(h) + "\n" + (depth == 8 ? "255" : "65535") + "\n";
      const auto file = bytes_of(header, random_bytes(w * h * channels * sample, depth + channels));
      const auto img = decode_netpbm(file);
      CHECK(encode_netpbm(img) == file);
      const auto path = scratch("round" + std::to_string(depth) + std::to_string(channels) + ".pnm");
      save_image(img, path);
      CHECK(read_file(path) == file);
      const auto back = load_image(path);
      CHECK(back.values == img.values);
    }
  }
}

TEST_CASE("encoding rounds half up and clamps") {
  ImageBuffer img{3, 1, 1, 8, {-0.5f, 0.5f, 1.5f}};
  const auto out = encode_netpbm(img);
  const std::vector<std::uint8_t> body(out.end() - 3, out.end());
  CHECK(body == std::vector<std::uint8_t>{0, 128, 255});
}

TEST_CASE("image tensors") {
  ImageBuffer img{2, 2, 3, 8, std::vector<float>(12, 0.25f)};
  const auto t = image_to_tensor(img);
  CHECK(t.shape() == Shape{1, 2, 2, 3});
  const auto back = tensor_to_image(t);
  CHECK(back.values == img.values);
}

TEST_CASE("checkpoint round trip is bit-exact and idempotent") {
  const auto model = Model<float>::build(small_model(), 3);
  Checkpoint ckpt{model.config(), model.params(), std::nullopt};
  const auto bytes = encode_checkpoint(ckpt);
  CHECK(std::memcmp(bytes.data(), "RSTM", 4) == 0);
  CHECK(bytes[4] == 1);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.config == ckpt.config);
  CHECK(bit_equal(back.params, ckpt.params));
  CHECK_FALSE(back.progress.has_value());
  CHECK(encode_checkpoint(back) == bytes);

  const auto x = oracle::random_tensor<float>({1, 16, 16, 3}, 4, 0.0, 1.0);
  CHECK(bit_equal(Model<float>(back.config, back.params).infer(x), model.infer(x)));

  const auto path = scratch("model.rstm");
  save_checkpoint(ckpt, path);
  CHECK(read_file(path) == bytes);
  CHECK(bit_equal(load_checkpoint(path).params, ckpt.params));
}

TEST_CASE("checkpoint optimizer section round trip") {
  TrainConfig t;
  t.total_iters = 3;
  t.schedule = {{0, 16, 2}};
  t.eval_every = 0;
  const auto state = train_loop(small_model(), t);
  const auto ckpt = checkpoint_from_state(state);
  const auto bytes = encode_checkpoint(ckpt);
  const auto back = decode_checkpoint(bytes);
  REQUIRE(back.progress.has_value());
  CHECK(back.progress->iteration == 3);
  CHECK(back.progress->opt.step == 3);
  CHECK(back.progress->rng_state == state.rng_state);
  REQUIRE(back.progress->opt.m.size() == state.opt.m.size());
  for (std::size_t i = 0; i < state.opt.m.size(); ++i) {
    CHECK(bit_equal(back.progress->opt.m[i], state.opt.m[i]));
    CHECK(bit_equal(back.progress->opt.v[i], state.opt.v[i]));
  }
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("corrupted checkpoints are detected") {
  const auto model = Model<float>::build(small_model(), 5);
  const auto bytes = encode_checkpoint({model.config(), model.params(), std::nullopt});

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(std::span(bytes).first(bytes.size() - 5)), IntegrityError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), IntegrityError);
  bad = bytes;
  bad.back() = 7;
  CHECK_THROWS_AS(decode_checkpoint(bad), IntegrityError);

  // A config that disagrees with the stored tensors.
  auto other = small_model();
  other.base_dim = 16;
  const auto other_bytes = encode_checkpoint({other, Model<float>::build(other, 0).params(), std::nullopt});
  const std::string json = model_config_to_json(other);
  std::vector<std::uint8_t> spliced(other_bytes.begin(), other_bytes.begin() + 16 + json.size());
  const std::string own_json = model_config_to_json(small_model());
  spliced.insert(spliced.end(), bytes.begin() + 16 + own_json.size(), bytes.end());
  CHECK_THROWS_AS(decode_checkpoint(spliced), IntegrityError);

  // Single bit flips in the payload: rejected, visible in the forward output, or (for low mantissa bits
  // that the output rounds away) visible in the loaded parameters.
  const auto x = oracle::random_tensor<float>({1, 16, 16, 3}, 6, 0.0, 1.0);
  const auto ref = model.infer(x);
  Rng rng(7);
  int detected = 0, in_output = 0;
  const int trials = 24;
  for (int i = 0; i < trials; ++i) {
    bad = bytes;
    const std::size_t pos = 16 + own_json.size() + rng.below(bad.size() - 17 - own_json.size());
    bad[pos] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    try {
      const auto c = decode_checkpoint(bad);
      const Model<float> m(c.config, c.params);
      const auto y = m.infer(x);
      if (!bit_equal(y, ref)) {
        ++detected;
        ++in_output;
      } else if (!bit_equal(c.params, model.params())) {
        ++detected;
      }
    } catch (const Error&) {
      ++detected;
    }
  }
  CHECK(detected == trials);
  MESSAGE(in_output << " of " << trials << " flips changed the forward output");
}

TEST_CASE("run config parsing is strict") {
  const auto cfg = parse_run_config(R"({"base_dim": 16, "num_blocks": [1,1,1,2], "total_iters": 10,
      "schedule": [{"start_iter": 0, "patch_size": 48, "batch_size": 8}]})");
  CHECK(cfg.model.base_dim == 16);
  CHECK(cfg.model.num_blocks[3] == 2);
  CHECK(cfg.train.total_iters == 10);
  CHECK(cfg.train.schedule.size() == 1);
  CHECK(cfg.train.lr_max == 3e-4);

  CHECK_THROWS_AS(parse_run_config(R"({"base_dim": 16, "learning_rate": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"base_dim": "16"})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"base_dim": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"heads": [1,2,4]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"base_dim": 16, "heads": [1,3,4,8]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"attention_variant": "XDTA"})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"schedule": [{"start_iter": 0, "patch_size": 48}]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"schedule": [{"start_iter": 0, "patch_size": 44, "batch_size": 1}]})"),
                  ConfigError);
  try {
    parse_run_config("{\"base_dim\": 16,,}");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 16);
  }
}

TEST_CASE("run config serialization round trips") {
  RunConfig cfg;
  cfg.model = small_model();
  cfg.model.ffn_variant = FfnVariant::kDfn;
  cfg.train.total_iters = 123;
  cfg.train.schedule = {{0, 16, 4}, {50, 24, 2}};
  const auto back = parse_run_config(run_config_to_json(cfg));
  CHECK(back.model == cfg.model);
  CHECK(back.train.schedule == cfg.train.schedule);
  CHECK(back.train.total_iters == 123);
  CHECK(parse_model_config(model_config_to_json(cfg.model)) == cfg.model);

  const std::string compact = model_config_to_json(cfg.model);
  CHECK(compact.find(' ') == std::string::npos);
  CHECK(compact.find("\"attention_variant\"") < compact.find("\"base_dim\""));
}

TEST_CASE("training is bit-reproducible") {
  TrainConfig t;
  t.total_iters = 6;
  t.schedule = {{0, 16, 2}, {3, 24, 1}};
  t.eval_every = 3;
  t.seed = 11;
  const auto a = encode_checkpoint(checkpoint_from_state(train_loop(small_model(), t)));
  const auto b = encode_checkpoint(checkpoint_from_state(train_loop(small_model(), t)));
  CHECK(a == b);
  t.seed = 12;
  CHECK(a != encode_checkpoint(checkpoint_from_state(train_loop(small_model(), t))));
}
