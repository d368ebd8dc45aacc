/* Copyright 2026 The Treeprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "treeprune/errors.hpp"
#include "treeprune/fixtures.hpp"
#include "treeprune/interp.hpp"

namespace tp = treeprune;
namespace tt = treeprune::testing;

namespace {

double max_abs_diff(const std::vector<float>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

tp::TensorValue value(std::vector<int64_t> dims, std::vector<float> data) {
  return tp::TensorValue{std::move(dims), std::move(data)};
}

}  // namespace

TEST_CASE("fire module matches a hand-rolled direct convolution") {
  const tp::ModelArchive m = tp::synthesize_model({"fire_module", 2, 21});
  const tp::TensorMap in = tp::random_inputs(m, 3);
  const tp::TensorMap all = tp::run_all(m, in);
  auto w = [&](const std::string& n) -> const tp::Tensor& { return tt::weight_of(m, n); };

  std::vector<double> x(in.at("input").data.begin(), in.at("input").data.end());
  int64_t h = 0, wd = 0;
  auto sq = tt::direct_conv(x, 16, 16, 16, w("squeeze.weight"), &w("squeeze.bias"), 1, 0, &h, &wd);
  CHECK(max_abs_diff(all.at("squeeze_out").data, sq) < 1e-5);
  tt::relu_in_place(sq);
  auto e1 = tt::direct_conv(sq, 8, h, wd, w("expand1x1.weight"), &w("expand1x1.bias"), 1, 0, &h, &wd);
  auto e3 = tt::direct_conv(sq, 8, h, wd, w("expand3x3.weight"), &w("expand3x3.bias"), 1, 1, &h, &wd);
  CHECK(max_abs_diff(all.at("expand1x1_out").data, e1) < 1e-5);
  CHECK(max_abs_diff(all.at("expand3x3_out").data, e3) < 1e-5);
  tt::relu_in_place(e1);
  tt::relu_in_place(e3);
  std::vector<double> cat = e1;
  cat.insert(cat.end(), e3.begin(), e3.end());
  CHECK(max_abs_diff(all.at("concat_out").data, cat) < 1e-5);
  const auto cls = tt::direct_conv(cat, 32, h, wd, w("classifier.weight"), &w("classifier.bias"), 1,
                                   0, &h, &wd);
  std::vector<double> pooled(10, 0.0);
  for (int c = 0; c < 10; ++c) {
    for (int64_t s = 0; s < h * wd; ++s) pooled[c] += cls[c * h * wd + s];
    pooled[c] /= static_cast<double>(h * wd);
  }
  CHECK(all.at("output").dims == std::vector<int64_t>{1, 10});
  CHECK(max_abs_diff(all.at("output").data, pooled) < 1e-5);
}

TEST_CASE("strided convolution with asymmetric output") {
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 3, 7, 5}));
  m.graph.initializers.push_back(tt::filled("w", {4, 3, 3, 3}, 2));
  tp::NodeDef n = tt::make_node("Conv", "conv", {"x", "w"}, {"y"});
  n.set_attribute("kernel_shape", std::vector<int64_t>{3, 3});
  n.set_attribute("strides", std::vector<int64_t>{2, 2});
  n.set_attribute("pads", std::vector<int64_t>{1, 1, 1, 1});
  m.graph.nodes.push_back(n);
  m.graph.outputs.push_back(tt::float_info("y", {1, 4, 4, 3}));
  const tp::TensorMap in = tp::random_inputs(m, 8);
  const tp::TensorValue y = tp::run(m, in).at("y");
  std::vector<double> x(in.at("x").data.begin(), in.at("x").data.end());
  int64_t h = 0, w = 0;
  const auto want = tt::direct_conv(x, 3, 7, 5, tt::weight_of(m, "w"), nullptr, 2, 1, &h, &w);
  CHECK(y.dims == std::vector<int64_t>{1, 4, h, w});
  CHECK(max_abs_diff(y.data, want) < 1e-5);
}

TEST_CASE("Gemm with transposed weight") {
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {2, 3}));
  m.graph.initializers.push_back(tp::make_float_tensor("w", {2, 3}, {1, 2, 3, 4, 5, 6}));
  m.graph.initializers.push_back(tp::make_float_tensor("b", {2}, {0.5f, -1}));
  tp::NodeDef n = tt::make_node("Gemm", "fc", {"x", "w", "b"}, {"y"});
  n.set_attribute("transB", int64_t{1});
  n.set_attribute("alpha", 2.0f);
  m.graph.nodes.push_back(n);
  m.graph.outputs.push_back(tt::float_info("y", {2, 2}));
  const auto y = tp::run(m, {{"x", value({2, 3}, {1, 0, -1, 2, 1, 0})}}).at("y");
  // alpha * x @ w^T + b
  CHECK(y.data == std::vector<float>{2 * (1 - 3) + 0.5f, 2 * (4 - 6) - 1.0f, 2 * (2 + 2) + 0.5f,
                                     2 * (8 + 5) - 1.0f});
}

TEST_CASE("pooling, batch norm, softmax and data movement") {
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 2, 2, 2}));
  tp::NodeDef mp = tt::make_node("MaxPool", "mp", {"x"}, {"mp"});
  mp.set_attribute("kernel_shape", std::vector<int64_t>{2, 2});
  m.graph.nodes.push_back(mp);
  tp::NodeDef ap = tt::make_node("AveragePool", "ap", {"x"}, {"ap"});
  ap.set_attribute("kernel_shape", std::vector<int64_t>{2, 2});
  m.graph.nodes.push_back(ap);
  m.graph.initializers.push_back(tp::make_float_tensor("s", {2}, {2, 1}));
  m.graph.initializers.push_back(tp::make_float_tensor("b", {2}, {1, 0}));
  m.graph.initializers.push_back(tp::make_float_tensor("mu", {2}, {0, 1}));
  m.graph.initializers.push_back(tp::make_float_tensor("var", {2}, {1, 4}));
  tp::NodeDef bn = tt::make_node("BatchNormalization", "bn", {"x", "s", "b", "mu", "var"}, {"bn"});
  bn.set_attribute("epsilon", 0.0f);
  m.graph.nodes.push_back(bn);
  tp::NodeDef sm = tt::make_node("Softmax", "sm", {"x"}, {"sm"});
  sm.set_attribute("axis", int64_t{1});
  m.graph.nodes.push_back(sm);
  tp::NodeDef tr = tt::make_node("Transpose", "tr", {"x"}, {"tr"});
  tr.set_attribute("perm", std::vector<int64_t>{0, 2, 3, 1});
  m.graph.nodes.push_back(tr);
  for (const char* o : {"mp", "ap", "bn", "sm", "tr"}) {
    tp::ValueInfo vi;
    vi.name = o;
    m.graph.outputs.push_back(vi);
  }

  const auto out = tp::run(m, {{"x", value({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8})}});
  CHECK(out.at("mp").data == std::vector<float>{4, 8});
  CHECK(out.at("ap").data == std::vector<float>{2.5f, 6.5f});
  CHECK(out.at("bn").data == std::vector<float>{3, 5, 7, 9, 2, 2.5f, 3, 3.5f});
  const auto& s = out.at("sm").data;
  for (int p = 0; p < 4; ++p) CHECK(s[p] + s[4 + p] == doctest::Approx(1.0));
  CHECK(s[0] == doctest::Approx(1.0 / (1.0 + std::exp(4.0))));
  CHECK(out.at("tr").dims == std::vector<int64_t>{1, 2, 2, 2});
  CHECK(out.at("tr").data == std::vector<float>{1, 5, 2, 6, 3, 7, 4, 8});
}

TEST_CASE("broadcasting elementwise ops") {
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {2, 3}));
  m.graph.initializers.push_back(tp::make_float_tensor("r", {3}, {1, 2, 3}));
  m.graph.nodes.push_back(tt::make_node("Sub", "sub", {"x", "r"}, {"y"}));
  m.graph.nodes.push_back(tt::make_node("Div", "div", {"y", "r"}, {"z"}));
  m.graph.outputs.push_back(tt::float_info("z", {2, 3}));
  const auto z = tp::run(m, {{"x", value({2, 3}, {1, 2, 3, 4, 5, 6})}}).at("z");
  CHECK(z.data == std::vector<float>{0, 0, 0, 3, 1.5f, 1});
}

TEST_CASE("unsupported ops and bad inputs are reported") {
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 4}));
  m.graph.nodes.push_back(tt::make_node("FancyOp", "f", {"x"}, {"y"}));
  m.graph.outputs.push_back(tt::float_info("y", {1, 4}));
  CHECK_FALSE(tp::interpreter_supports("FancyOp"));
  CHECK(tp::interpreter_supports("Conv"));
  CHECK_THROWS_AS(tp::run(m, tp::random_inputs(m, 0)), tp::UnsupportedOp);

  const tp::ModelArchive chain = tp::synthesize_model({"conv_chain", 2, 0});
  CHECK_THROWS_AS(tp::run(chain, {}), tp::ShapeMismatch);
  CHECK_THROWS_AS(tp::run(chain, {{"input", value({1, 2, 32, 32}, std::vector<float>(2048))}}),
                  tp::ShapeMismatch);
}

TEST_CASE("random inputs are seeded and honour the batch size") {
  const tp::ModelArchive m = tp::synthesize_model({"conv_chain", 2, 0});
  const auto a = tp::random_inputs(m, 4);
  CHECK(a == tp::random_inputs(m, 4));
  CHECK_FALSE(a == tp::random_inputs(m, 5));
  CHECK(tp::random_inputs(m, 4, 3).at("input").dims == std::vector<int64_t>{3, 3, 32, 32});
}
