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

#include "tatr/config.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

namespace tatr {

namespace {

using nlohmann::json;

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys{"in_channels",       "base_dim",  "num_blocks",        "heads",
                                          "refinement_blocks", "ffn_gamma", "bias_free",         "attention_variant",
                                          "ffn_variant",       "qk_l2_normalize"};
  return keys;
}

const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys{"total_iters", "lr_max",      "lr_min",     "betas",
                                          "weight_decay", "schedule",   "seed",       "noise_sigma",
                                          "eval_every",   "dataset",    "ckpt_every", "eval_patch"};
  return keys;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte == 0 ? 0 : e.byte - 1);
  }
}

std::uint64_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer()) throw ConfigError("config: '" + key + "' must be non-negative");
    throw ConfigError("config: '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config: '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config: '" + key + "' must be a string");
  return v.get<std::string>();
}

std::array<std::size_t, kLevels> as_levels(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != kLevels) {
    throw ConfigError("config: '" + key + "' must be an array of " + std::to_string(kLevels) + " integers");
  }
  std::array<std::size_t, kLevels> out{};
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = as_count(v[i], key + "[" + std::to_string(i) + "]");
  return out;
}

void apply_model_key(ModelConfig& m, const std::string& key, const json& v) {
  if (key == "in_channels") {
    m.in_channels = as_count(v, key);
  } else if (key == "base_dim") {
    m.base_dim = as_count(v, key);
  } else if (key == "num_blocks") {
    m.num_blocks = as_levels(v, key);
  } else if (key == "heads") {
    m.heads = as_levels(v, key);
  } else if (key == "refinement_blocks") {
    m.refinement_blocks = as_count(v, key);
  } else if (key == "ffn_gamma") {
    m.ffn_gamma = as_real(v, key);
  } else if (key == "bias_free") {
    m.bias_free = as_bool(v, key);
  } else if (key == "attention_variant") {
    m.attention_variant = parse_attention_variant(as_string(v, key));
  } else if (key == "ffn_variant") {
    m.ffn_variant = parse_ffn_variant(as_string(v, key));
  } else if (key == "qk_l2_normalize") {
    m.qk_l2_normalize = as_bool(v, key);
  }
}

std::vector<ScheduleEntry> as_schedule(const json& v) {
  if (!v.is_array() || v.empty()) throw ConfigError("config: 'schedule' must be a non-empty array");
  std::vector<ScheduleEntry> out;
  for (const json& item : v) {
    if (!item.is_object()) throw ConfigError("config: schedule entries must be objects");
    ScheduleEntry e;
    std::set<std::string> seen;
    for (const auto& [k, val] : item.items()) {
      if (k == "start_iter") {
        e.start_iter = as_count(val, "schedule.start_iter");
      } else if (k == "patch_size") {
        e.patch_size = as_count(val, "schedule.patch_size");
      } else if (k == "batch_size") {
        e.batch_size = as_count(val, "schedule.batch_size");
      } else {
        throw ConfigError("config: unknown schedule key '" + k + "'");
      }
      seen.insert(k);
    }
    if (seen.size() != 3) throw ConfigError("config: schedule entries need start_iter, patch_size and batch_size");
    out.push_back(e);
  }
  return out;
}

void apply_train_key(TrainConfig& t, const std::string& key, const json& v) {
  if (key == "total_iters") {
    t.total_iters = as_count(v, key);
  } else if (key == "lr_max") {
    t.lr_max = as_real(v, key);
  } else if (key == "lr_min") {
    t.lr_min = as_real(v, key);
  } else if (key == "betas") {
    if (!v.is_array() || v.size() != 2) throw ConfigError("config: 'betas' must be an array of 2 numbers");
    t.betas = {as_real(v[0], "betas[0]"), as_real(v[1], "betas[1]")};
  } else if (key == "weight_decay") {
    t.weight_decay = as_real(v, key);
  } else if (key == "schedule") {
    t.schedule = as_schedule(v);
  } else if (key == "seed") {
    t.seed = as_count(v, key);
  } else if (key == "noise_sigma") {
    t.noise_sigma = as_real(v, key);
  } else if (key == "eval_every") {
    t.eval_every = as_count(v, key);
  } else if (key == "dataset") {
    t.dataset = as_string(v, key);
  } else if (key == "ckpt_every") {
    t.ckpt_every = as_count(v, key);
  } else if (key == "eval_patch") {
    t.eval_patch = as_count(v, key);
  }
}

json model_json(const ModelConfig& m) {
  json j;
  j["in_channels"] = m.in_channels;
  j["base_dim"] = m.base_dim;
  j["num_blocks"] = m.num_blocks;
  j["heads"] = m.heads;
  j["refinement_blocks"] = m.refinement_blocks;
  j["ffn_gamma"] = m.ffn_gamma;
  j["bias_free"] = m.bias_free;
  j["attention_variant"] = std::string(to_string(m.attention_variant));
  j["ffn_variant"] = std::string(to_string(m.ffn_variant));
  j["qk_l2_normalize"] = m.qk_l2_normalize;
  return j;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  const json root = parse_json(json_text);
  if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : root.items()) {
    if (model_keys().count(key)) {
      apply_model_key(cfg.model, key, value);
    } else if (train_keys().count(key)) {
      apply_train_key(cfg.train, key, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j = model_json(cfg.model);
  const TrainConfig& t = cfg.train;
  j["total_iters"] = t.total_iters;
  j["lr_max"] = t.lr_max;
  j["lr_min"] = t.lr_min;
  j["betas"] = t.betas;
  j["weight_decay"] = t.weight_decay;
  json schedule = json::array();
  for (const ScheduleEntry& e : t.schedule) {
    schedule.push_back({{"start_iter", e.start_iter}, {"patch_size", e.patch_size}, {"batch_size", e.batch_size}});
  }
  j["schedule"] = schedule;
  j["seed"] = t.seed;
  j["noise_sigma"] = t.noise_sigma;
  j["eval_every"] = t.eval_every;
  j["dataset"] = t.dataset;
  j["ckpt_every"] = t.ckpt_every;
  j["eval_patch"] = t.eval_patch;
  return j.dump(2) + "\n";
}

std::string model_config_to_json(const ModelConfig& cfg) { return model_json(cfg).dump(); }

ModelConfig parse_model_config(std::string_view json_text) {
  const json root = parse_json(json_text);
  if (!root.is_object()) throw ConfigError("model config: top level must be a JSON object");
  ModelConfig m;
  for (const auto& [key, value] : root.items()) {
    if (!model_keys().count(key)) throw ConfigError("model config: unknown key '" + key + "'");
    apply_model_key(m, key, value);
  }
  m.validate();
  return m;
}

}  // namespace tatr
