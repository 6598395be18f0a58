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

#include <filesystem>
#include <string>
#include <string_view>

#include "tatr/network.hpp"
#include "tatr/train.hpp"

namespace tatr {

/// A configuration file: architecture keys and training keys side by side
/// in one flat JSON object. Absent keys keep their defaults; unknown keys,
/// wrong types and out-of-range values raise ConfigError, malformed JSON
/// raises ParseError.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

/// Architecture keys only, sorted, no whitespace. Checkpoints embed this form.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig parse_model_config(std::string_view json_text);

}  // namespace tatr
