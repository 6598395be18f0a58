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

#include "tatr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace tatr {

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 30)) throw ParseError(std::string("netpbm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("netpbm: expected ") + what, start);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size()) throw ParseError("netpbm: header ends before the pixel data", pos_);
    const char c = static_cast<char>(bytes_[pos_]);
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') {
      throw ParseError("netpbm: expected whitespace after maxval", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageBuffer decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("netpbm: expected magic P5 or P6", 0);
  }
  ImageBuffer img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes, 2);
  img.width = reader.number("width");
  img.height = reader.number("height");
  reader.skip_space_and_comments();
  const std::size_t maxval_pos = reader.pos();
  const std::size_t maxval = reader.number("maxval");
  if (img.width == 0 || img.height == 0) throw ParseError("netpbm: zero image extent", 2);
  if (maxval != 255 && maxval != 65535) {
    throw ParseError("netpbm: unsupported maxval " + std::to_string(maxval), maxval_pos);
  }
  reader.single_whitespace();
  img.bit_depth = maxval == 255 ? 8 : 16;

  const std::size_t body = reader.pos();
  const std::size_t samples = img.width * img.height * img.channels;
  const std::size_t sample_bytes = maxval == 255 ? 1 : 2;
  if (bytes.size() - body < samples * sample_bytes) {
    throw ParseError("netpbm: truncated pixel data (need " + std::to_string(samples * sample_bytes) + " bytes)",
                     bytes.size());
  }
  img.values.resize(samples);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < samples; ++i) {
    std::size_t p;
    if (sample_bytes == 1) {
      p = bytes[body + i];
    } else {
      p = (static_cast<std::size_t>(bytes[body + 2 * i]) << 8) | bytes[body + 2 * i + 1];
    }
    img.values[i] = std::min(1.0f, static_cast<float>(p) * scale);
  }
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) throw DimensionError("netpbm: images must have 1 or 3 channels");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw DimensionError("netpbm: bit depth must be 8 or 16");
  if (img.values.size() != img.width * img.height * img.channels) {
    throw DimensionError("netpbm: value count does not match the image extents");
  }
  const unsigned maxval = img.bit_depth == 8 ? 255u : 65535u;
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.values.size() * (img.bit_depth / 8));
  for (float v : img.values) {
    const double scaled = std::floor(static_cast<double>(v) * maxval + 0.5);
    const auto p = static_cast<unsigned>(std::clamp(scaled, 0.0, static_cast<double>(maxval)));
    if (img.bit_depth == 8) {
      out.push_back(static_cast<std::uint8_t>(p));
    } else {
      out.push_back(static_cast<std::uint8_t>(p >> 8));
      out.push_back(static_cast<std::uint8_t>(p & 0xFF));
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

ImageBuffer load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_netpbm(bytes);
}

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
  write_file(path, encode_netpbm(image));
}

Tensor<float> image_to_tensor(const ImageBuffer& image) {
  return Tensor<float>({1, image.height, image.width, image.channels}, image.values);
}

ImageBuffer tensor_to_image(const Tensor<float>& t, int bit_depth) {
  require_nhwc(t, "tensor_to_image");
  if (t.dim(0) != 1) throw DimensionError("tensor_to_image: batch must be 1");
  ImageBuffer img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.channels = t.dim(3);
  img.bit_depth = bit_depth;
  img.values.assign(t.data().begin(), t.data().end());
  for (float& v : img.values) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace tatr
