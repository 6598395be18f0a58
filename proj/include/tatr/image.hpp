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
#include <filesystem>
#include <span>
#include <vector>

#include "tatr/tensor.hpp"

namespace tatr {

/// Decoded image, interleaved H x W x C with values in [0, 1].
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (P5) or 3 (P6)
  int bit_depth = 8;         // 8 (maxval 255) or 16 (maxval 65535)
  std::vector<float> values;
};

/// Binary Netpbm P5 / P6 with maxval 255 or 65535. Sample p maps to
/// p / maxval, clamped to [0, 1]. Throws ParseError with the byte offset.
ImageBuffer decode_netpbm(std::span<const std::uint8_t> bytes);
/// Inverse of decode_netpbm: round half up, clamp to [0, maxval].
std::vector<std::uint8_t> encode_netpbm(const ImageBuffer& image);

ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

/// 1 x H x W x C tensor view of an image.
Tensor<float> image_to_tensor(const ImageBuffer& image);
/// Image from a 1 x H x W x C tensor; values are clamped to [0, 1].
ImageBuffer tensor_to_image(const Tensor<float>& t, int bit_depth = 8);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace tatr
