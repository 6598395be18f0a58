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

import json

import numpy as np
import pytest

import tatr

TINY = json.dumps(
    {"base_dim": 8, "num_blocks": [1, 1, 1, 1], "heads": [1, 1, 1, 1], "refinement_blocks": 1}
)


def naive_conv(x, w):
    k = w.shape[0]
    pad = k // 2
    n, h, wd, _ = x.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    out = np.zeros((n, h, wd, w.shape[3]))
    for ky in range(k):
        for kx in range(k):
            out += np.einsum("nhwc,cd->nhwd", xp[:, ky : ky + h, kx : kx + wd, :], w[ky, kx])
    return out


def test_conv2d_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (1, 6, 5, 3)).astype(np.float32)
    w = rng.uniform(-1, 1, (3, 3, 3, 4)).astype(np.float32)
    got = tatr.conv2d(x, w)
    assert got.shape == (1, 6, 5, 4)
    np.testing.assert_allclose(got, naive_conv(x, w), rtol=1e-5, atol=1e-5)


def test_pixel_shuffle_round_trip():
    x = np.arange(2 * 4 * 6 * 3, dtype=np.float32).reshape(2, 4, 6, 3)
    down = tatr.pixel_unshuffle(x, 2)
    assert down.shape == (2, 2, 3, 12)
    np.testing.assert_array_equal(tatr.pixel_shuffle(down, 2), x)


def test_softmax_rows_sum_to_one():
    x = np.random.default_rng(1).uniform(-1000, 1000, (5, 7)).astype(np.float32)
    np.testing.assert_allclose(tatr.softmax(x).sum(axis=-1), 1.0, atol=1e-6)


def test_published_size():
    assert abs(tatr.count_params(tatr.published_config_json()) / 26.12e6 - 1) < 0.01


def test_model_zero_fixed_point_and_checkpoint(tmp_path):
    model = tatr.Model(TINY, seed=3)
    assert model.num_params == tatr.count_params(TINY)
    assert np.all(model.infer(np.zeros((1, 16, 16, 3), np.float32)) == 0)
    x = np.random.default_rng(2).uniform(0, 1, (1, 16, 16, 3)).astype(np.float32)
    path = tmp_path / "m.rstm"
    model.save(path)
    np.testing.assert_array_equal(tatr.Model.load(path).infer(x), model.infer(x))


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(tatr.ConfigError):
        tatr.Model(json.dumps({"base_dim": 8, "heads": [1, 3, 1, 1]}))
    with pytest.raises(tatr.DimensionError):
        tatr.pixel_unshuffle(np.zeros((1, 3, 4, 1), np.float32), 2)
    bad = tmp_path / "bad.rstm"
    bad.write_bytes(b"XXXX")
    with pytest.raises(tatr.FormatError):
        tatr.Model.load(bad)
    assert issubclass(tatr.IntegrityError, tatr.Error)


def test_image_round_trip(tmp_path):
    levels = np.random.default_rng(4).integers(0, 256, (1, 5, 7, 3))
    path = tmp_path / "a.ppm"
    tatr.save_image(levels.astype(np.float32) / 255, path)
    loaded = tatr.load_image(path)
    np.testing.assert_array_equal(np.rint(loaded * 255), levels)
    again = tmp_path / "b.ppm"
    tatr.save_image(loaded, again)
    assert again.read_bytes() == path.read_bytes()
    noisy = np.clip(loaded + 0.1, 0, 1)
    assert 15 < tatr.psnr(noisy, loaded) < 25


def test_block_grad_check():
    assert tatr.block_grad_check("MDTA", "GDFN") < 1e-4
