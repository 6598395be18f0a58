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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tatr/network.hpp"
#include "tatr/train.hpp"

namespace tatr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Optimizer section of a checkpoint: moments plus the loop position.
struct TrainingProgress {
  OptState<float> opt;
  std::uint64_t iteration = 0;
  std::string rng_state;
};

struct Checkpoint {
  ModelConfig config;
  ParamStore<float> params;
  std::optional<TrainingProgress> progress;
};

/// Binary layout, all integers little-endian:
///   "RSTM" | u32 version | u64 json length | model config JSON
///   | u64 tensor count | tensors
///   | u8 flag, and when the flag is 1:
///     u64 optimizer step | u64 iteration | u32 length | RNG state text
///     | u64 tensor count | tensors named "m/<param>" then "v/<param>"
/// where each tensor is u32 name length | name | u32 rank | u64 dims | f32 values.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);

/// Throws FormatError on a bad magic or version and IntegrityError when the
/// payload is truncated, has trailing bytes, or disagrees with the config.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Checkpoint of a training state, with its optimizer section.
Checkpoint checkpoint_from_state(const TrainState& state);

}  // namespace tatr
