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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tatr/bench.hpp"
#include "tatr/checkpoint.hpp"
#include "tatr/config.hpp"
#include "tatr/gradcheck.hpp"
#include "tatr/image.hpp"
#include "tatr/ops.hpp"
#include "tatr/train.hpp"

namespace py = pybind11;
using namespace tatr;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor<float>& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Var<float> cst(const Array& a) { return Var<float>::constant(to_tensor(a)); }

}  // namespace

PYBIND11_MODULE(_tatr, m) {
  m.doc() = "Transposed-attention image restoration network (CPU, NHWC float32).";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<UsageError>(m, "UsageError", error.ptr());
  py::register_exception<ResourceError>(m, "ResourceError", error.ptr());
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", error.ptr());

  m.def(
      "conv2d",
      [](const Array& x, const Array& w, std::optional<Array> bias, std::size_t groups) {
        return to_array(conv2d(cst(x), cst(w), bias ? cst(*bias) : Var<float>(), groups).value());
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("groups") = 1);
  m.def("pixel_unshuffle", [](const Array& x, std::size_t r) { return to_array(pixel_unshuffle(cst(x), r).value()); });
  m.def("pixel_shuffle", [](const Array& x, std::size_t r) { return to_array(pixel_shuffle(cst(x), r).value()); });
  m.def("gelu", [](const Array& x) { return to_array(gelu(cst(x)).value()); });
  m.def(
      "softmax", [](const Array& x, int axis) { return to_array(softmax(cst(x), axis).value()); }, py::arg("x"),
      py::arg("axis") = -1);
  m.def("matmul", [](const Array& a, const Array& b) { return to_array(matmul(cst(a), cst(b)).value()); });

  m.def("cosine_lr", &cosine_lr, py::arg("t"), py::arg("total"), py::arg("lr_max") = 3e-4, py::arg("lr_min") = 1e-6);
  m.def(
      "psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_tensor(a), to_tensor(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

  m.def(
      "count_params", [](const std::string& json) { return count_params(parse_model_config(json)); },
      py::arg("config_json") = "{}");
  m.def(
      "count_macs",
      [](const std::string& json, std::size_t h, std::size_t w) { return count_flops(parse_model_config(json), h, w); },
      py::arg("config_json") = "{}", py::arg("height") = 256, py::arg("width") = 256);
  m.def("published_config_json", [] { return model_config_to_json(ModelConfig::published()); });

  m.def(
      "block_grad_check",
      [](const std::string& attention, const std::string& ffn, std::uint64_t seed) {
        const auto cfg = parse_model_config(R"({"attention_variant":")" + attention + R"(","ffn_variant":")" + ffn +
                                            R"("})");
        return block_grad_check(cfg.attention_variant, cfg.ffn_variant, seed).max_rel_error;
      },
      py::arg("attention") = "MDTA", py::arg("ffn") = "GDFN", py::arg("seed") = 0);

  m.def("load_image", [](const std::filesystem::path& p) { return to_array(image_to_tensor(load_image(p))); });
  m.def(
      "save_image",
      [](const Array& x, const std::filesystem::path& p, int bit_depth) {
        save_image(tensor_to_image(to_tensor(x), bit_depth), p);
      },
      py::arg("image"), py::arg("path"), py::arg("bit_depth") = 8);

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](const std::string& json, std::uint64_t seed) {
             return Model<float>::build(parse_model_config(json), seed);
           }),
           py::arg("config_json") = "{}", py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) {
        auto ckpt = load_checkpoint(p);
        return Model<float>(ckpt.config, std::move(ckpt.params));
      })
      .def("save",
           [](const Model<float>& model, const std::filesystem::path& p) {
             save_checkpoint({model.config(), model.params(), std::nullopt}, p);
           })
      .def("infer", [](const Model<float>& model, const Array& x) { return to_array(model.infer(to_tensor(x))); })
      .def_property_readonly("config_json", [](const Model<float>& model) { return model_config_to_json(model.config()); })
      .def_property_readonly("num_params", [](const Model<float>& model) {
        std::size_t n = 0;
        for (const auto& [name, t] : model.params().entries()) n += t.size();
        return n;
      })
      .def("param_names", [](const Model<float>& model) {
        std::vector<std::string> names;
        for (const auto& [name, t] : model.params().entries()) names.push_back(name);
        return names;
      });
}
