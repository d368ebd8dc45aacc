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

#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "treeprune/errors.hpp"
#include "treeprune/fixtures.hpp"
#include "treeprune/model_io.hpp"
#include "treeprune/report.hpp"
#include "treeprune/rewriter.hpp"
#include "treeprune/validate.hpp"

namespace tp = treeprune;
namespace tt = treeprune::testing;

namespace {

tp::PruningPlan plan_for(const tp::ModelArchive& m, double ratio, bool include_classifier = false) {
  const tp::AttributeRegistry reg;
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  tp::PlanOptions opt;
  opt.ratio = ratio;
  opt.include_classifier = include_classifier;
  return tp::make_plan(m, a, reg, opt);
}

// conv(2 -> 4, 3x3) on a 3x3 map, then a flattening op, then Gemm(36 -> 5).
tp::ModelArchive conv_to_gemm(const std::string& flatten_op) {
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 2, 3, 3}));
  tt::add_conv(m, "conv", "x", "c", 2, 4, 3, 1);
  m.graph.nodes.push_back(tt::make_node("Relu", "relu", {"c"}, {"r"}));
  if (flatten_op == "Flatten") {
    tp::NodeDef f = tt::make_node("Flatten", "flat", {"r"}, {"f"});
    f.set_attribute("axis", int64_t{1});
    m.graph.nodes.push_back(f);
  } else {
    m.graph.initializers.push_back(tp::make_int64_tensor("flat_shape", {2}, {1, 36}));
    m.graph.nodes.push_back(tt::make_node("Reshape", "flat", {"r", "flat_shape"}, {"f"}));
  }
  m.graph.initializers.push_back(tt::filled("fc.w", {5, 36}, 7));
  m.graph.initializers.push_back(tt::filled("fc.b", {5}, 8));
  tp::NodeDef gemm = tt::make_node("Gemm", "fc", {"f", "fc.w", "fc.b"}, {"y"});
  gemm.set_attribute("transB", int64_t{1});
  m.graph.nodes.push_back(gemm);
  m.graph.outputs.push_back(tt::float_info("y", {1, 5}));
  return m;
}

}  // namespace

TEST_CASE("slice_initializer gathers along an axis") {
  const tp::Tensor t = tp::make_float_tensor("t", {2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  const tp::Tensor s = tp::slice_initializer(t, 1, {0, 2});
  CHECK(s.dims == std::vector<int64_t>{2, 2, 2});
  CHECK(s.float_data == std::vector<float>{0, 1, 4, 5, 6, 7, 10, 11});
  CHECK(tp::slice_initializer(t, 0, {1}).float_data == std::vector<float>{6, 7, 8, 9, 10, 11});
  const tp::Tensor ints = tp::make_int64_tensor("i", {4}, {10, 20, 30, 40});
  CHECK(tp::slice_initializer(ints, 0, {1, 3}).int_data == std::vector<int64_t>{20, 40});
  CHECK_THROWS_AS(tp::slice_initializer(t, 3, {0}), tp::AxisError);
  CHECK_THROWS_AS(tp::slice_initializer(t, 1, {2, 0}), tp::IndexError);
  CHECK_THROWS_AS(tp::slice_initializer(t, 1, {0, 0}), tp::IndexError);
  CHECK_THROWS_AS(tp::slice_initializer(t, 1, {3}), tp::IndexError);
}

TEST_CASE("removed elements account for every lost parameter") {
  for (const auto& name : tp::fixture_templates()) {
    CAPTURE(name);
    const tp::ModelArchive m = tp::synthesize_model({name, 2, 5});
    for (double r : {0.2, 0.6}) {
      const tp::RewriteResult res = tp::apply_plan_detailed(m, plan_for(m, r));
      int64_t removed = 0;
      for (const auto& a : res.actions) {
        CHECK(std::is_sorted(a.keep_indices.begin(), a.keep_indices.end()));
        removed += a.removed_elements;
      }
      CHECK(tp::count_params(res.model) + removed == tp::count_params(m));
      CHECK_FALSE(tp::has_errors(tp::validate_syntax(res.model)));
    }
  }
}

TEST_CASE("rewritten VGG has the expected layer widths") {
  const tp::ModelArchive m = tp::synthesize_model({"vgg16_cifar", 2, 0});
  const tp::ModelArchive p = tp::apply_plan(m, plan_for(m, 0.5));
  CHECK(p.graph.find_initializer("conv1.weight")->dims == std::vector<int64_t>{32, 3, 3, 3});
  CHECK(p.graph.find_initializer("conv2.weight")->dims == std::vector<int64_t>{32, 32, 3, 3});
  CHECK(p.graph.find_initializer("conv13.weight")->dims == std::vector<int64_t>{256, 256, 3, 3});
  CHECK(p.graph.find_initializer("fc1.weight")->dims == std::vector<int64_t>{128, 256});
  CHECK(p.graph.find_initializer("fc2.weight")->dims == std::vector<int64_t>{10, 128});
  CHECK(p.graph.find_initializer("fc2.bias")->dims == std::vector<int64_t>{10});
}

TEST_CASE("a weight that is both producer and leaf is sliced on both axes") {
  const tp::ModelArchive m = tp::synthesize_model({"fire_module", 2, 0});
  const tp::RewriteResult res = tp::apply_plan_detailed(m, plan_for(m, 0.5));
  int on_expand = 0;
  for (const auto& a : res.actions) on_expand += a.target == "expand3x3.weight";
  CHECK(on_expand == 2);
  CHECK(res.model.graph.find_initializer("expand3x3.weight")->dims ==
        std::vector<int64_t>{8, 4, 3, 3});
  CHECK(res.model.graph.find_initializer("classifier.weight")->dims ==
        std::vector<int64_t>{10, 16, 1, 1});
}

TEST_CASE("pruning through Flatten removes position blocks from the Gemm input") {
  const tp::ModelArchive m = conv_to_gemm("Flatten");
  const tp::PruningPlan plan = plan_for(m, 0.5);
  REQUIRE(plan.groups.size() == 1);
  const tp::ModelArchive p = tp::apply_plan(m, plan);
  CHECK(p.graph.find_initializer("fc.w")->dims == std::vector<int64_t>{5, 18});
  const auto v = tp::validate_equivalence(m, plan, p, 4, 1e-5, 1);
  CHECK(v.passed);
  CHECK(v.max_deviation <= 1e-5);
}

TEST_CASE("pruning through Reshape rewrites the concrete target shape") {
  const tp::ModelArchive m = conv_to_gemm("Reshape");
  const tp::PruningPlan plan = plan_for(m, 0.25);
  REQUIRE(plan.groups.size() == 1);
  const tp::ModelArchive p = tp::apply_plan(m, plan);
  CHECK(p.graph.find_initializer("flat_shape")->int_data == std::vector<int64_t>{1, 27});
  CHECK(p.graph.find_initializer("fc.w")->dims == std::vector<int64_t>{5, 27});
  CHECK(tp::validate_equivalence(m, plan, p, 4, 1e-5, 1).passed);
}

TEST_CASE("the input model is left untouched") {
  const tp::ModelArchive m = tp::synthesize_model({"resnet_stage", 2, 0});
  const std::string before = tp::serialize_model(m);
  (void)tp::apply_plan(m, plan_for(m, 0.5));
  CHECK(tp::serialize_model(m) == before);
}

TEST_CASE("an initializer shared with an unpruned node is refused") {
  // convA and convB read the same weight; convB's output is a graph output,
  // so only convA's group is planned.
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 4, 4, 4}));
  tt::add_conv(m, "convA", "x", "a", 4, 4, 3, 1);
  tp::NodeDef b = m.graph.nodes.back();
  b.name = "convB";
  b.outputs = {"b"};
  m.graph.nodes.push_back(b);
  m.graph.nodes.push_back(tt::make_node("Relu", "relu", {"a"}, {"r"}));
  tt::add_conv(m, "head", "r", "y", 4, 2, 1, 2);
  m.graph.outputs.push_back(tt::float_info("y", {1, 2, 4, 4}));
  m.graph.outputs.push_back(tt::float_info("b", {1, 4, 4, 4}));
  const tp::PruningPlan plan = plan_for(m, 0.5);
  bool refused = plan.groups.empty();
  if (!refused) {
    try {
      (void)tp::apply_plan(m, plan);
    } catch (const tp::UnsupportedRewrite&) {
      refused = true;
    }
  }
  CHECK(refused);
}

TEST_CASE("inconsistent plans raise MaskConflict") {
  const tp::ModelArchive m = tp::synthesize_model({"conv_chain", 2, 0});
  tp::PruningPlan plan = plan_for(m, 0.5);
  REQUIRE_FALSE(plan.groups.empty());
  plan.groups[0].keep.pop_back();
  CHECK_THROWS_AS(tp::apply_plan(m, plan), tp::MaskConflict);

  tp::PruningPlan twice = plan_for(m, 0.5);
  twice.groups.push_back(twice.groups[0]);
  twice.groups.back().id = 99;
  CHECK_THROWS_AS(tp::apply_plan(m, twice), tp::MaskConflict);
}

TEST_CASE("value_info shapes follow the rewrite") {
  tp::ModelArchive m = tp::synthesize_model({"conv_chain", 2, 0});
  m.graph.value_infos.push_back(tt::float_info("conv1_out", {1, 64, 32, 32}));
  const tp::ModelArchive p = tp::apply_plan(m, plan_for(m, 0.5));
  REQUIRE(p.graph.value_infos.size() == 1);
  CHECK(p.graph.value_infos[0].shape->at(1).value == 32);
}
