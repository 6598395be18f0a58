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

#include "tatr/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "tatr/config.hpp"
#include "tatr/image.hpp"

namespace tatr {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'T', 'M'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void text32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    text32(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (float v : t.data()) u32(std::bit_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw IntegrityError(std::string("checkpoint: truncated while reading ") + what + " at byte " +
                           std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[i];
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[i];
    return v;
  }
  std::string text(std::size_t n, const char* what) {
    const auto s = take(n, what);
    return std::string(s.begin(), s.end());
  }
  std::pair<std::string, Tensor<float>> tensor() {
    const std::string name = text(u32("tensor name length"), "tensor name");
    const std::uint32_t rank = u32("tensor rank");
    if (rank > 8) throw IntegrityError("checkpoint: tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = u64("tensor dims");
      if (d != 0 && count > (bytes_.size() / 4) / d) {
        throw IntegrityError("checkpoint: tensor '" + name + "' is larger than the file");
      }
      count *= d;
    }
    const auto raw = take(count * 4, "tensor values");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) | (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
      values[i] = std::bit_cast<float>(bits);
    }
    return {name, Tensor<float>(std::move(shape), std::move(values))};
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void expect(bool ok, const std::string& message) {
  if (!ok) throw IntegrityError("checkpoint: " + message);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string json = model_config_to_json(ckpt.config);
  w.u64(json.size());
  w.bytes(json.data(), json.size());
  w.u64(ckpt.params.size());
  for (const auto& [name, t] : ckpt.params.entries()) w.tensor(name, t);
  if (!ckpt.progress) {
    w.u8(0);
    return w.take();
  }
  const TrainingProgress& p = *ckpt.progress;
  if (p.opt.m.size() != ckpt.params.size() || p.opt.v.size() != ckpt.params.size()) {
    throw IntegrityError("checkpoint: optimizer state does not mirror the parameters");
  }
  w.u8(1);
  w.u64(p.opt.step);
  w.u64(p.iteration);
  w.text32(p.rng_state);
  w.u64(2 * ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.tensor("m/" + ckpt.params.entries()[i].first, p.opt.m[i]);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) w.tensor("v/" + ckpt.params.entries()[i].first, p.opt.v[i]);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: missing RSTM magic");
  }
  Reader r(bytes);
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t json_len = r.u64("config length");
  expect(json_len <= bytes.size(), "config length exceeds the file");
  Checkpoint ckpt;
  try {
    ckpt.config = parse_model_config(r.text(json_len, "config"));
  } catch (const ParseError& e) {
    throw IntegrityError(std::string("checkpoint: config is not valid JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  }

  const auto decls = model_param_decls(ckpt.config);
  const std::uint64_t count = r.u64("tensor count");
  expect(count == decls.size(), "holds " + std::to_string(count) + " tensors, the config needs " +
                                    std::to_string(decls.size()));
  for (const ParamDecl& d : decls) {
    auto [name, t] = r.tensor();
    expect(name == d.name, "expected tensor '" + d.name + "', found '" + name + "'");
    expect(t.shape() == d.shape, "tensor '" + name + "' has shape " + to_string(t.shape()) + ", expected " +
                                     to_string(d.shape));
    ckpt.params.add(name, std::move(t));
  }

  const std::uint8_t flag = r.u8("optimizer flag");
  expect(flag <= 1, "optimizer flag must be 0 or 1");
  if (flag == 1) {
    TrainingProgress p;
    p.opt.step = r.u64("optimizer step");
    p.iteration = r.u64("iteration");
    p.rng_state = r.text(r.u32("rng state length"), "rng state");
    const std::uint64_t moments = r.u64("optimizer tensor count");
    expect(moments == 2 * decls.size(), "optimizer section holds " + std::to_string(moments) + " tensors");
    for (const char* prefix : {"m/", "v/"}) {
      auto& dst = prefix[0] == 'm' ? p.opt.m : p.opt.v;
      for (const ParamDecl& d : decls) {
        auto [name, t] = r.tensor();
        expect(name == prefix + d.name, "expected optimizer tensor '" + std::string(prefix) + d.name + "'");
        expect(t.shape() == d.shape, "optimizer tensor '" + name + "' has the wrong shape");
        dst.push_back(std::move(t));
      }
    }
    ckpt.progress = std::move(p);
  }
  expect(r.done(), std::to_string(bytes.size() - r.pos()) + " trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint checkpoint_from_state(const TrainState& state) {
  return {state.model.config(), state.model.params(), TrainingProgress{state.opt, state.iteration, state.rng_state}};
}

}  // namespace tatr
