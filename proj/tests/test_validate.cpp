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
#include <limits>

#include "doctest.h"
#include "support.hpp"
#include "treeprune/fixtures.hpp"
#include "treeprune/rewriter.hpp"
#include "treeprune/validate.hpp"

namespace tp = treeprune;
namespace tt = treeprune::testing;

namespace {

tp::PruningPlan plan_for(const tp::ModelArchive& m, double ratio,
                         tp::ScoreMode mode = tp::ScoreMode::kTreeLevel) {
  const tp::AttributeRegistry reg;
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  tp::PlanOptions opt;
  opt.ratio = ratio;
  opt.mode = mode;
  return tp::make_plan(m, a, reg, opt);
}

}  // namespace

TEST_CASE("a faithful rewrite matches the masked model") {
  for (const char* name : {"conv_chain", "fire_module", "resnet_stage", "many_to_many"}) {
    CAPTURE(name);
    const tp::ModelArchive m = tp::synthesize_model({name, 2, 13});
    const tp::PruningPlan plan = plan_for(m, 0.5);
    const auto v = tp::validate_equivalence(m, plan, tp::apply_plan(m, plan), 3, 1e-5, 2);
    CHECK(v.passed);
    CHECK_FALSE(v.downgraded);
    CHECK(v.per_trial.size() == 3);
    CHECK(v.max_deviation <= 1e-5);
  }
}

TEST_CASE("fault injection: corrupted or mismatched pruned models are rejected") {
  const tp::ModelArchive m = tp::synthesize_model({"residual_block", 2, 13});
  const tp::PruningPlan plan = plan_for(m, 0.5);

  SUBCASE("perturbed kept weight") {
    tp::ModelArchive bad = tp::apply_plan(m, plan);
    bad.graph.find_initializer("conv1.weight")->floats()[3] += 0.25f;
    const auto v = tp::validate_equivalence(m, plan, bad, 2, 1e-5, 0);
    CHECK_FALSE(v.passed);
    CHECK(v.max_deviation > 1e-3);
  }
  SUBCASE("pruned with a different plan") {
    const tp::PruningPlan other = plan_for(m, 0.5, tp::ScoreMode::kSingleNode);
    REQUIRE(other.groups[0].keep != plan.groups[0].keep);
    const auto v = tp::validate_equivalence(m, plan, tp::apply_plan(m, other), 2, 1e-5, 0);
    CHECK_FALSE(v.passed);
  }
  SUBCASE("output shape change") {
    const tp::PruningPlan wider = plan_for(m, 0.25);
    const auto v = tp::validate_equivalence(m, plan, tp::apply_plan(m, wider), 1, 1e-5, 0);
    CHECK_FALSE(v.passed);
  }
}

TEST_CASE("mask_model zeroes exactly the pruned slices") {
  const tp::ModelArchive m = tp::synthesize_model({"one_to_one", 2, 1});
  const tp::PruningPlan plan = plan_for(m, 0.5);
  const tp::ModelArchive masked = tp::mask_model(m, plan);
  const auto& keep = plan.groups.at(0).keep;
  const auto& w = masked.graph.find_initializer("conv_n.weight")->float_data;
  const auto& b = masked.graph.find_initializer("conv_n.bias")->float_data;
  const auto& leaf = masked.graph.find_initializer("conv_n1.weight")->float_data;
  const int64_t per_filter = 8 * 9;
  for (size_t i = 0; i < keep.size(); ++i) {
    bool all_zero = true;
    for (int64_t e = 0; e < per_filter; ++e) all_zero &= w[i * per_filter + e] == 0.0f;
    CHECK(all_zero == !keep[i]);
    CHECK((b[i] == 0.0f) == !keep[i]);
    bool leaf_zero = true;
    for (int64_t k = 0; k < 12; ++k) {
      for (int s = 0; s < 9; ++s) leaf_zero &= leaf[(k * 16 + i) * 9 + s] == 0.0f;
    }
    CHECK(leaf_zero == !keep[i]);
  }
}

TEST_CASE("validation is reproducible for a fixed seed") {
  const tp::ModelArchive m = tp::synthesize_model({"fire_module", 2, 4});
  const tp::PruningPlan plan = plan_for(m, 0.3);
  tp::ModelArchive bad = tp::apply_plan(m, plan);
  bad.graph.find_initializer("squeeze.bias")->floats()[0] += 0.01f;
  const auto a = tp::validate_equivalence(m, plan, bad, 2, 1e-5, 9);
  const auto b = tp::validate_equivalence(m, plan, bad, 2, 1e-5, 9);
  CHECK(a.per_trial == b.per_trial);
  CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("channel-mixing ops downgrade a failure to a warning") {
  // conv -> Softmax over channels -> conv: removing channels renormalizes the
  // remaining ones, so exact equivalence cannot hold.
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 3, 4, 4}));
  tt::add_conv(m, "conv", "x", "c", 3, 6, 3, 1);
  tp::NodeDef sm = tt::make_node("Softmax", "softmax", {"c"}, {"s"});
  sm.set_attribute("axis", int64_t{1});
  m.graph.nodes.push_back(sm);
  tt::add_conv(m, "head", "s", "y", 6, 2, 1, 2);
  m.graph.outputs.push_back(tt::float_info("y", {1, 2, 4, 4}));
  const tp::PruningPlan plan = plan_for(m, 0.5);
  REQUIRE(plan.groups.size() == 1);
  CHECK(plan.groups[0].flow.mixes_channels);
  const auto v = tp::validate_equivalence(m, plan, tp::apply_plan(m, plan), 2, 1e-5, 0);
  CHECK(v.passed);
  CHECK(v.downgraded);
  CHECK(v.max_deviation > 1e-5);
  CHECK_FALSE(v.warnings.empty());
}

TEST_CASE("an elementwise Sigmoid on the pruned path stays exact") {
  // sigmoid(0) = 0.5 on masked channels, but the leaf's matching input slices
  // are masked too, so the outputs still agree.
  tp::ModelArchive m = tt::empty_model();
  m.graph.inputs.push_back(tt::float_info("x", {1, 3, 4, 4}));
  tt::add_conv(m, "conv", "x", "c", 3, 6, 3, 1);
  m.graph.nodes.push_back(tt::make_node("Sigmoid", "sigmoid", {"c"}, {"s"}));
  tt::add_conv(m, "head", "s", "y", 6, 2, 1, 2);
  m.graph.outputs.push_back(tt::float_info("y", {1, 2, 4, 4}));
  const tp::PruningPlan plan = plan_for(m, 0.5);
  REQUIRE(plan.groups.size() == 1);
  CHECK_FALSE(plan.groups[0].flow.mixes_channels);
  const auto v = tp::validate_equivalence(m, plan, tp::apply_plan(m, plan), 2, 1e-5, 0);
  CHECK(v.passed);
  CHECK_FALSE(v.downgraded);
  CHECK(v.max_deviation <= 1e-5);
}

TEST_CASE("non-finite deviations serialize as null") {
  tp::ValidationReport r;
  r.trials = 1;
  r.max_deviation = std::numeric_limits<double>::infinity();
  r.per_trial = {std::numeric_limits<double>::infinity()};
  const auto j = r.to_json();
  CHECK(j["max_deviation"].is_null());
  CHECK(j["per_trial"][0].is_null());
}
