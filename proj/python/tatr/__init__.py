# Copyright 2026 The tatr Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the tatr restoration network.

Arrays are float32 in NHWC layout.
"""

from tatr._tatr import (
    ConfigError,
    DimensionError,
    DomainError,
    Error,
    FormatError,
    IntegrityError,
    Model,
    NumericError,
    ParseError,
    ResourceError,
    UsageError,
    block_grad_check,
    conv2d,
    cosine_lr,
    count_macs,
    count_params,
    gelu,
    load_image,
    matmul,
    published_config_json,
    pixel_shuffle,
    pixel_unshuffle,
    psnr,
    save_image,
    softmax,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "Error",
    "FormatError",
    "IntegrityError",
    "Model",
    "NumericError",
    "ParseError",
    "ResourceError",
    "UsageError",
    "block_grad_check",
    "conv2d",
    "cosine_lr",
    "count_macs",
    "count_params",
    "gelu",
    "load_image",
    "matmul",
    "published_config_json",
    "pixel_shuffle",
    "pixel_unshuffle",
    "psnr",
    "save_image",
    "softmax",
]
