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
#include <string>
#include <utility>
#include <vector>

#include "tatr/blocks.hpp"

namespace tatr {

inline constexpr std::size_t kLevels = 4;

/// Architecture of the 4-level encoder-decoder.
struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t base_dim = 48;
  std::array<std::size_t, kLevels> num_blocks{4, 6, 6, 8};
  std::array<std::size_t, kLevels> heads{1, 2, 4, 8};
  std::size_t refinement_blocks = 4;
  double ffn_gamma = 2.66;
  bool bias_free = true;
  AttentionVariant attention_variant = AttentionVariant::kMdta;
  FfnVariant ffn_variant = FfnVariant::kGdfn;
  bool qk_l2_normalize = false;

  /// Published configuration: C=48, blocks [4,6,6,8], heads [1,2,4,8],
  /// 4 refinement blocks, gamma 2.66, bias-free.
  static ModelConfig published();

  /// Encoder width at level 1..4: 2^(level-1) * base_dim.
  std::size_t level_width(std::size_t level) const { return base_dim << (level - 1); }
  BlockOptions block_options() const;
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// One stage of the encoder-decoder, in parameter-store order.
struct StageLayout {
  std::string prefix;  // e.g. "encoder2."
  std::size_t width = 0;
  std::size_t heads = 1;
  std::size_t blocks = 0;
  std::size_t scale = 1;  // spatial downscale factor relative to the input
};

/// Transformer stages in canonical order (encoder 1..4, decoder 3..1, refinement).
std::vector<StageLayout> stage_layout(const ModelConfig& cfg);

/// Every parameter of the model in canonical order: embed, encoder levels
/// 1..4, downsamples 1..3, upsamples 3..1, channel reductions 3 and 2,
/// decoder levels 3..1, refinement, output.
std::vector<ParamDecl> model_param_decls(const ModelConfig& cfg);

/// Activation shapes recorded during a forward pass.
struct ForwardTrace {
  std::vector<std::pair<std::string, Shape>> stages;
  const Shape* find(const std::string& name) const;
};

/// 3x3 conv C -> C/2 then pixel_unshuffle(2): N x H x W x C -> N x H/2 x W/2 x 2C.
template <typename T>
Var<T> downsample(const Var<T>& x, const ConvParams<T>& conv);

/// 3x3 conv C -> 2C then pixel_shuffle(2): N x H x W x C -> N x 2H x 2W x C/2.
template <typename T>
Var<T> upsample(const Var<T>& x, const ConvParams<T>& conv);

/// Concatenates decoder then encoder features; at levels 2 and 3 a 1x1
/// `reduce` conv halves the channels, at level 1 it must be null.
template <typename T>
Var<T> skip_merge(const Var<T>& decoder, const Var<T>& encoder, std::size_t level, const ConvParams<T>* reduce);

template <typename T>
class Model {
 public:
  /// Fresh model with parameters initialized deterministically from `seed`.
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  /// Wraps existing parameters; throws IntegrityError if they do not match
  /// the layout implied by `cfg`.
  Model(ModelConfig cfg, ParamStore<T> params);

  const ModelConfig& config() const noexcept { return cfg_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  ParamStore<T>& params() noexcept { return params_; }

  /// Restored image I + R. H and W must be multiples of 8.
  Var<T> forward(const BoundParams<T>& params, const Var<T>& image, ForwardTrace* trace = nullptr) const;

  /// Forward without recording a tape.
  Tensor<T> infer(const Tensor<T>& image) const;

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace tatr
