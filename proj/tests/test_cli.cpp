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

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "oracles.hpp"
#include "tatr/checkpoint.hpp"
#include "tatr/image.hpp"

using namespace tatr;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(TATR_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tatr_cli_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.base_dim = 8;
  cfg.num_blocks = {1, 1, 1, 1};
  cfg.heads = {1, 1, 1, 1};
  cfg.refinement_blocks = 1;
  return cfg;
}

ImageBuffer random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  ImageBuffer img{w, h, 3, 8, {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < w * h * 3; ++i) img.values.push_back(static_cast<float>(rng.below(256)) / 255.0f);
  return img;
}

}  // namespace

TEST_CASE("cli count prints both MAC conventions") {
  const auto r = run("count --config " + std::string(TATR_SOURCE_DIR) + "/configs/published.json --hw 256");
  CHECK(r.code == 0);
  CHECK(r.out.find("26.12M") != std::string::npos);
  CHECK(r.out.find("MACs") != std::string::npos);
  CHECK(r.out.find("2xMACs") != std::string::npos);
}

TEST_CASE("cli usage errors exit with 2") {
  CHECK(run("count --bogus").code == 2);
  CHECK(run("").code == 2);
  CHECK(run("count --hw 7").code == 2);
  CHECK(run("bench --sizes 8,x,16,24").code == 2);
  CHECK(run("gradcheck --variant MDTA").code == 2);
}

TEST_CASE("cli runtime failures exit with 1") {
  const auto bad = scratch("bad.json");
  std::ofstream(bad) << R"({"base_dim": 8, "colour": 1})";
  const auto r = run("count --config " + bad.string());
  CHECK(r.code == 1);
  CHECK(r.out.find("colour") != std::string::npos);
  CHECK(run("restore --ckpt " + bad.string() + " --in " + bad.string() + " --out /dev/null").code == 1);
}

TEST_CASE("cli gradcheck on one variant") {
  const auto r = run("gradcheck --variant MTA+GFN --seed 3");
  CHECK(r.code == 0);
  CHECK(r.out.find("MTA+GFN") != std::string::npos);
}

TEST_CASE("cli restore: zero image stays zero with a bias-free model") {
  const auto ckpt = scratch("zero.rstm");
  save_checkpoint({small_model(), Model<float>::build(small_model(), 1).params(), std::nullopt}, ckpt);
  const auto in = scratch("zero.ppm");
  save_image(ImageBuffer{20, 13, 3, 8, std::vector<float>(20 * 13 * 3, 0.0f)}, in);
  const auto out = scratch("zero_out.ppm");
  REQUIRE(run("restore --ckpt " + ckpt.string() + " --in " + in.string() + " --out " + out.string()).code == 0);
  const auto img = load_image(out);
  CHECK(img.width == 20);
  CHECK(img.height == 13);
  for (float v : img.values) CHECK(v == 0.0f);
}

TEST_CASE("cli restore matches a direct forward when no padding is needed") {
  const auto model = Model<float>::build(small_model(), 2);
  const auto ckpt = scratch("direct.rstm");
  save_checkpoint({model.config(), model.params(), std::nullopt}, ckpt);
  const auto img = random_image(24, 16, 3);
  const auto in = scratch("direct.ppm");
  save_image(img, in);
  const auto out = scratch("direct_out.ppm");
  REQUIRE(run("restore --ckpt " + ckpt.string() + " --in " + in.string() + " --out " + out.string()).code == 0);
  const auto want = encode_netpbm(tensor_to_image(model.infer(image_to_tensor(img))));
  CHECK(read_file(out) == want);
}

TEST_CASE("cli restore reflect-pads and crops odd sizes") {
  const auto model = Model<float>::build(small_model(), 4);
  const auto ckpt = scratch("pad.rstm");
  save_checkpoint({model.config(), model.params(), std::nullopt}, ckpt);
  const auto img = random_image(13, 10, 5);
  const auto in = scratch("pad.ppm");
  save_image(img, in);
  const auto out = scratch("pad_out.ppm");
  REQUIRE(run("restore --ckpt " + ckpt.string() + " --in " + in.string() + " --out " + out.string()).code == 0);

  // Reference: mirror without repeating the edge sample up to 16 x 16, then crop.
  const auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * (n - 1) - i; };
  const auto x = image_to_tensor(img);
  Tensor<float> padded({1, 16, 16, 3});
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t xx = 0; xx < 16; ++xx)
      for (std::size_t c = 0; c < 3; ++c) padded.at(0, y, xx, c) = x.at(0, reflect(y, 10), reflect(xx, 13), c);
  const auto full = model.infer(padded);
  Tensor<float> cropped({1, 10, 13, 3});
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t xx = 0; xx < 13; ++xx)
      for (std::size_t c = 0; c < 3; ++c) cropped.at(0, y, xx, c) = full.at(0, y, xx, c);
  CHECK(read_file(out) == encode_netpbm(tensor_to_image(cropped)));
}

TEST_CASE("cli train writes metrics and checkpoints") {
  const auto cfg = scratch("train.json");
  std::ofstream(cfg) << R"({"base_dim": 8, "num_blocks": [1,1,1,1], "heads": [1,1,1,1], "refinement_blocks": 1,
    "total_iters": 4, "schedule": [{"start_iter": 0, "patch_size": 16, "batch_size": 2}],
    "eval_every": 2, "ckpt_every": 2, "eval_patch": 16})";
  const auto dir = scratch("train_out");
  std::filesystem::remove_all(dir);
  const auto r = run("train --config " + cfg.string() + " --out " + dir.string() + " --seed 9");
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "ckpt_2.rstm"));
  CHECK(std::filesystem::exists(dir / "final.rstm"));
  CHECK(std::filesystem::exists(dir / "config.json"));
  std::ifstream metrics(dir / "metrics.csv");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) ++lines;
  CHECK(lines == 5);
  const auto final_ckpt = load_checkpoint(dir / "final.rstm");
  REQUIRE(final_ckpt.progress.has_value());
  CHECK(final_ckpt.progress->iteration == 4);
  std::ifstream resolved(dir / "config.json");
  const std::string text((std::istreambuf_iterator<char>(resolved)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"seed\": 9") != std::string::npos);
}
