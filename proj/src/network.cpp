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

#include "tatr/network.hpp"

namespace tatr {

ModelConfig ModelConfig::published() { return ModelConfig{}; }

BlockOptions ModelConfig::block_options() const {
  BlockOptions o;
  o.attention = attention_variant;
  o.ffn = ffn_variant;
  o.ffn_gamma = ffn_gamma;
  o.bias_free = bias_free;
  o.qk_l2_normalize = qk_l2_normalize;
  return o;
}

void ModelConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) {
    throw ConfigError("in_channels must be 1 or 3, got " + std::to_string(in_channels));
  }
  if (base_dim == 0 || base_dim % 2 != 0) {
    throw ConfigError("base_dim must be a positive even number, got " + std::to_string(base_dim));
  }
  if (!(ffn_gamma > 0.0)) throw ConfigError("ffn_gamma must be positive");
  for (std::size_t l = 1; l <= kLevels; ++l) {
    const std::size_t h = heads[l - 1];
    if (h == 0 || level_width(l) % h != 0) {
      throw ConfigError("heads[" + std::to_string(l - 1) + "]=" + std::to_string(h) + " does not divide level-" +
                        std::to_string(l) + " width " + std::to_string(level_width(l)));
    }
  }
}

std::vector<StageLayout> stage_layout(const ModelConfig& cfg) {
  const std::size_t c = cfg.base_dim;
  std::vector<StageLayout> s;
  for (std::size_t l = 1; l <= kLevels; ++l) {
    s.push_back({"encoder" + std::to_string(l) + ".", cfg.level_width(l), cfg.heads[l - 1], cfg.num_blocks[l - 1],
                 std::size_t{1} << (l - 1)});
  }
  s.push_back({"decoder3.", 4 * c, cfg.heads[2], cfg.num_blocks[2], 4});
  s.push_back({"decoder2.", 2 * c, cfg.heads[1], cfg.num_blocks[1], 2});
  s.push_back({"decoder1.", 2 * c, cfg.heads[0], cfg.num_blocks[0], 1});
  s.push_back({"refine.", 2 * c, cfg.heads[0], cfg.refinement_blocks, 1});
  return s;
}

namespace {

void declare_stage(std::vector<ParamDecl>& out, const StageLayout& stage, const BlockOptions& o) {
  for (std::size_t b = 0; b < stage.blocks; ++b) {
    auto decls = block_param_decls(stage.prefix + "block" + std::to_string(b) + ".", stage.width, stage.heads, o);
    out.insert(out.end(), decls.begin(), decls.end());
  }
}

}  // namespace

std::vector<ParamDecl> model_param_decls(const ModelConfig& cfg) {
  cfg.validate();
  const BlockOptions o = cfg.block_options();
  const std::size_t c = cfg.base_dim;
  const auto stages = stage_layout(cfg);
  std::vector<ParamDecl> d;
  declare_conv(d, "embed", 3, cfg.in_channels, c, cfg.bias_free);
  for (std::size_t i = 0; i < kLevels; ++i) declare_stage(d, stages[i], o);
  for (std::size_t l = 1; l < kLevels; ++l) {
    const std::size_t w = cfg.level_width(l);
    declare_conv(d, "down" + std::to_string(l), 3, w, w / 2, cfg.bias_free);
  }
  for (std::size_t l = kLevels - 1; l >= 1; --l) {
    const std::size_t w = cfg.level_width(l + 1);
    declare_conv(d, "up" + std::to_string(l), 3, w, 2 * w, cfg.bias_free);
  }
  declare_conv(d, "reduce3", 1, 8 * c, 4 * c, cfg.bias_free);
  declare_conv(d, "reduce2", 1, 4 * c, 2 * c, cfg.bias_free);
  for (std::size_t i = kLevels; i < stages.size(); ++i) declare_stage(d, stages[i], o);
  declare_conv(d, "output", 3, 2 * c, cfg.in_channels, cfg.bias_free);
  return d;
}

const Shape* ForwardTrace::find(const std::string& name) const {
  for (const auto& [n, s] : stages) {
    if (n == name) return &s;
  }
  return nullptr;
}

template <typename T>
Var<T> downsample(const Var<T>& x, const ConvParams<T>& conv) {
  require_nhwc(x.value(), "downsample");
  if (x.shape()[1] % 2 != 0 || x.shape()[2] % 2 != 0) {
    throw DimensionError("downsample: odd spatial extent in " + to_string(x.shape()));
  }
  return pixel_unshuffle(apply_conv(conv, x), 2);
}

template <typename T>
Var<T> upsample(const Var<T>& x, const ConvParams<T>& conv) {
  require_nhwc(x.value(), "upsample");
  if (x.shape()[3] % 2 != 0) throw DimensionError("upsample: odd channel count in " + to_string(x.shape()));
  return pixel_shuffle(apply_conv(conv, x), 2);
}

template <typename T>
Var<T> skip_merge(const Var<T>& decoder, const Var<T>& encoder, std::size_t level, const ConvParams<T>* reduce) {
  if (level == 1 && reduce != nullptr) throw ConfigError("skip_merge: level 1 has no channel reduction");
  if (level != 1 && reduce == nullptr) throw ConfigError("skip_merge: levels 2 and 3 need a reduction conv");
  const Var<T> merged = concat_channels(decoder, encoder);
  return reduce ? apply_conv(*reduce, merged) : merged;
}

namespace {

template <typename T>
Var<T> run_stage(const BoundParams<T>& params, const StageLayout& stage, const BlockOptions& o, Var<T> x) {
  for (std::size_t b = 0; b < stage.blocks; ++b) {
    const auto block = bind_block(params, stage.prefix + "block" + std::to_string(b) + ".", stage.width, stage.heads, o);
    x = transformer_block_forward(x, block);
  }
  return x;
}

}  // namespace

template <typename T>
Model<T> Model<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
  const auto decls = model_param_decls(cfg);
  // Draw in double and convert, so float and double builds share values up to rounding.
  return Model(cfg, ParamStore<double>::initialize(decls, seed).template cast<T>());
}

template <typename T>
Model<T>::Model(ModelConfig cfg, ParamStore<T> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  const auto decls = model_param_decls(cfg_);
  if (decls.size() != params_.size()) {
    throw IntegrityError("model: expected " + std::to_string(decls.size()) + " parameter tensors, got " +
                         std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const auto& [name, t] = params_.entries()[i];
    if (name != decls[i].name || t.shape() != decls[i].shape) {
      throw IntegrityError("model: parameter " + std::to_string(i) + " is '" + name + "' " + to_string(t.shape()) +
                           ", expected '" + decls[i].name + "' " + to_string(decls[i].shape));
    }
  }
}

template <typename T>
Var<T> Model<T>::forward(const BoundParams<T>& params, const Var<T>& image, ForwardTrace* trace) const {
  require_nhwc(image.value(), "forward");
  const Shape& s = image.shape();
  if (s[1] % 8 != 0 || s[2] % 8 != 0) {
    throw DimensionError("forward: height and width must be multiples of 8, got " + to_string(s));
  }
  if (s[3] != cfg_.in_channels) {
    throw DimensionError("forward: expected " + std::to_string(cfg_.in_channels) + " channels, got " + to_string(s));
  }
  const BlockOptions o = cfg_.block_options();
  const auto stages = stage_layout(cfg_);
  auto note = [trace](const char* name, const Var<T>& v) {
    if (trace) trace->stages.emplace_back(name, v.shape());
  };

  const Var<T> f0 = apply_conv(bind_conv(params, "embed"), image);
  note("embed", f0);
  const Var<T> e1 = run_stage(params, stages[0], o, f0);
  note("encoder1", e1);
  const Var<T> e2 = run_stage(params, stages[1], o, downsample(e1, bind_conv(params, "down1")));
  note("encoder2", e2);
  const Var<T> e3 = run_stage(params, stages[2], o, downsample(e2, bind_conv(params, "down2")));
  note("encoder3", e3);
  const Var<T> latent = run_stage(params, stages[3], o, downsample(e3, bind_conv(params, "down3")));
  note("latent", latent);

  const ConvParams<T> reduce3 = bind_conv(params, "reduce3");
  const ConvParams<T> reduce2 = bind_conv(params, "reduce2");
  Var<T> d = skip_merge(upsample(latent, bind_conv(params, "up3")), e3, 3, &reduce3);
  d = run_stage(params, stages[4], o, d);
  note("decoder3", d);
  d = skip_merge(upsample(d, bind_conv(params, "up2")), e2, 2, &reduce2);
  d = run_stage(params, stages[5], o, d);
  note("decoder2", d);
  d = skip_merge<T>(upsample(d, bind_conv(params, "up1")), e1, 1, nullptr);
  d = run_stage(params, stages[6], o, d);
  note("decoder1", d);
  d = run_stage(params, stages[7], o, d);
  note("refine", d);
  const Var<T> residual = apply_conv(bind_conv(params, "output"), d);
  note("residual", residual);
  const Var<T> out = add(image, residual);
  note("output", out);
  return out;
}

template <typename T>
Tensor<T> Model<T>::infer(const Tensor<T>& image) const {
  const BoundParams<T> params(params_, nullptr);
  return forward(params, Var<T>::constant(image)).value();
}

template class Model<float>;
template class Model<double>;

#define TATR_INSTANTIATE(T)                                                                   \
  template Var<T> downsample(const Var<T>&, const ConvParams<T>&);                          \
  template Var<T> upsample(const Var<T>&, const ConvParams<T>&);                            \
  template Var<T> skip_merge(const Var<T>&, const Var<T>&, std::size_t, const ConvParams<T>*);

TATR_INSTANTIATE(float)
TATR_INSTANTIATE(double)

#undef TATR_INSTANTIATE

}  // namespace tatr
