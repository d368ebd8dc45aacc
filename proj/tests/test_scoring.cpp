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
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "treeprune/errors.hpp"
#include "treeprune/fixtures.hpp"
#include "treeprune/scoring.hpp"

namespace tp = treeprune;
namespace tt = treeprune::testing;

namespace {

// Norm over every element whose multi-index has index[axis] in `keep`,
// enumerating multi-indices explicitly.
double brute_norm(const tp::Tensor& t, int axis, const std::set<int64_t>& keep, bool l2) {
  std::vector<int64_t> idx(t.dims.size(), 0);
  double acc = 0.0;
  for (size_t flat = 0; flat < t.float_data.size(); ++flat) {
    if (keep.count(idx[axis])) {
      const double v = t.float_data[flat];
      acc += l2 ? v * v : std::fabs(v);
    }
    for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[d] < t.dims[d]) break;
      idx[d] = 0;
    }
  }
  return l2 ? std::sqrt(acc) : acc;
}

// Norm over elements with index[out_axis] == k and index[in_axis] in cols.
double brute_norm2(const tp::Tensor& t, int in_axis, const std::set<int64_t>& cols, int out_axis,
                   int64_t k, bool l2) {
  std::vector<int64_t> idx(t.dims.size(), 0);
  double acc = 0.0;
  for (size_t flat = 0; flat < t.float_data.size(); ++flat) {
    if (idx[out_axis] == k && cols.count(idx[in_axis])) {
      const double v = t.float_data[flat];
      acc += l2 ? v * v : std::fabs(v);
    }
    for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[d] < t.dims[d]) break;
      idx[d] = 0;
    }
  }
  return l2 ? std::sqrt(acc) : acc;
}

bool close(double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); }

}  // namespace

TEST_CASE("slice and filter norms match brute-force enumeration") {
  const tp::Tensor w = tt::filled("w", {5, 3, 2, 4}, 17);
  for (bool l2 : {false, true}) {
    const auto kind = l2 ? tp::NormKind::kL2 : tp::NormKind::kL1;
    for (int axis = 0; axis < 4; ++axis) {
      const auto norms = tp::filter_norms(w, axis, kind);
      REQUIRE(norms.size() == static_cast<size_t>(w.dims[axis]));
      for (int64_t i = 0; i < w.dims[axis]; ++i) CHECK(close(norms[i], brute_norm(w, axis, {i}, l2)));
    }
    CHECK(close(tp::slice_norm(w, 1, {0, 2}, kind), brute_norm(w, 1, {0, 2}, l2)));
  }
  CHECK_THROWS_AS(tp::slice_norm(w, 4, {0}, tp::NormKind::kL1), tp::AxisError);
  CHECK_THROWS_AS(tp::slice_norm(w, 1, {3}, tp::NormKind::kL1), tp::IndexError);
}

TEST_CASE("leaf norm sums match brute force, including multi-position maps") {
  const tp::Tensor w = tt::filled("w", {4, 6, 3, 3}, 5);
  // Group channel i feeds leaf input positions {2i, 2i+1} (as after a Flatten).
  const tp::IndexMap map{{0, 1}, {2, 3}, {4, 5}};
  for (bool l2 : {false, true}) {
    const auto got = tp::leaf_norm_sums(w, 1, 0, map, l2 ? tp::NormKind::kL2 : tp::NormKind::kL1);
    REQUIRE(got.size() == 3);
    for (size_t i = 0; i < map.size(); ++i) {
      double want = 0.0;
      const std::set<int64_t> cols(map[i].begin(), map[i].end());
      for (int64_t k = 0; k < 4; ++k) want += brute_norm2(w, 1, cols, 0, k, l2);
      CHECK(close(got[i], want));
    }
  }
}

TEST_CASE("tree score equals the literal formula on the basic structures") {
  const tp::AttributeRegistry reg;
  for (uint64_t seed : {0u, 1u, 2u}) {
    for (const auto& c : tt::literal_cases()) {
      CAPTURE(c.fixture);
      CAPTURE(c.first_member);
      const tp::ModelArchive m = tp::synthesize_model({c.fixture, 2, seed});
      const tp::ModelAnalysis a = tp::analyze_model(m, reg);
      const tp::PruningGroup* grp = nullptr;
      for (const auto& g : a.groups) {
        if (a.graph.nodes[g.members.front()].name == c.first_member) grp = &g;
      }
      REQUIRE(grp != nullptr);
      const tp::GroupFlow flow = tp::analyze_flow(m, a.graph, a.shapes, reg, *grp);
      for (bool l2 : {false, true}) {
        const auto got = tp::tree_score(m, flow, l2 ? tp::NormKind::kL2 : tp::NormKind::kL1);
        const auto want = tt::literal_scores(m, c.group, c.channels, l2);
        CHECK_FALSE(got.diagnostic.has_value());
        REQUIRE(got.values.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) CHECK(close(got.values[i], want[i]));
      }
    }
  }
}

TEST_CASE("single-node score is the producer factor alone") {
  const tp::AttributeRegistry reg;
  const tp::ModelArchive m = tp::synthesize_model({"many_to_one", 2, 4});
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  const tp::GroupFlow flow = tp::analyze_flow(m, a.graph, a.shapes, reg, a.groups[0]);
  const auto got = tp::single_node_score(m, flow, tp::NormKind::kL1).values;
  for (int64_t i = 0; i < 16; ++i) {
    const double want = tt::literal_norm(tt::weight_of(m, "conv_nm1.weight"), i, -1, false) +
                        tt::literal_norm(tt::weight_of(m, "conv_n.weight"), i, -1, false);
    CHECK(close(got[i], want));
  }
}

TEST_CASE("a tree without leaves falls back to producer norms with a diagnostic") {
  const tp::AttributeRegistry reg;
  const tp::ModelArchive m = tp::synthesize_model({"fire_module", 2, 4});
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  const tp::GroupFlow flow = tp::analyze_flow(m, a.graph, a.shapes, reg, a.groups.back());
  const auto tree = tp::tree_score(m, flow, tp::NormKind::kL1);
  const auto single = tp::single_node_score(m, flow, tp::NormKind::kL1);
  CHECK(tree.diagnostic.has_value());
  CHECK(tree.values == single.values);
}

TEST_CASE("prune_count rounds half away from zero and keeps one channel") {
  CHECK(tp::prune_count(0.0, 10) == 0);
  CHECK(tp::prune_count(0.25, 10) == 3);  // 2.5 -> 3
  CHECK(tp::prune_count(0.5, 3) == 2);    // 1.5 -> 2
  CHECK(tp::prune_count(0.3, 16) == 5);   // 4.8 -> 5
  CHECK(tp::prune_count(0.99, 10) == 9);  // 9.9 -> 10, clamped to 9
  CHECK(tp::prune_count(0.9, 1) == 0);
}

TEST_CASE("select_channels prunes the lowest scores, higher index first on ties") {
  CHECK(tp::select_channels({3.0, 1.0, 2.0, 4.0}, 0.5) == std::vector<bool>{true, false, false, true});
  CHECK(tp::select_channels({1.0, 1.0, 1.0, 1.0}, 0.25) ==
        std::vector<bool>{true, true, true, false});
  CHECK(tp::select_channels({2.0, 1.0, 1.0, 5.0}, 0.25) ==
        std::vector<bool>{true, true, false, true});
  CHECK(tp::select_channels({2.0, 1.0}, 0.0) == std::vector<bool>{true, true});
}

TEST_CASE("overlap index") {
  CHECK(tp::overlap_index({1, 2, 3}, {2, 3, 4, 5}) == doctest::Approx(0.5));
  CHECK(tp::overlap_index({}, {1}) == 0.0);
  CHECK(tp::overlap_index({1, 2}, {1, 2}) == 1.0);
  CHECK_THROWS_AS(tp::overlap_index({1}, {}), tp::EmptyReference);
}

TEST_CASE("plans exclude output-reaching groups unless asked") {
  const tp::AttributeRegistry reg;
  const tp::ModelArchive m = tp::synthesize_model({"vgg16_cifar", 2, 1});
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  CHECK(a.trees.size() == 15);
  tp::PlanOptions opt;
  const tp::PruningPlan plan = tp::make_plan(m, a, reg, opt);
  CHECK(plan.groups.size() == 14);
  REQUIRE(plan.excluded.size() == 1);
  CHECK(plan.excluded[0].members == std::vector<std::string>{"fc2"});
  opt.include_classifier = true;
  CHECK(tp::make_plan(m, a, reg, opt).groups.size() == 15);
  opt.ratio = 1.0;
  CHECK_THROWS_AS(tp::make_plan(m, a, reg, opt), std::invalid_argument);
  opt.ratio = -0.1;
  CHECK_THROWS_AS(tp::make_plan(m, a, reg, opt), std::invalid_argument);
}

TEST_CASE("plans round-trip through JSON and do not depend on thread count") {
  const tp::AttributeRegistry reg;
  const tp::ModelArchive m = tp::synthesize_model({"resnet_stage", 2, 3});
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  tp::PlanOptions opt;
  opt.ratio = 0.4;
  opt.norm = tp::NormKind::kL2;
  const tp::PruningPlan plan = tp::make_plan(m, a, reg, opt);
  const auto j = tp::plan_to_json(plan);
  CHECK(j["criterion"]["norm"] == "l2");
  CHECK(j["criterion"]["mode"] == "tree");
  const tp::PruningPlan back = tp::plan_from_json(nlohmann::json::parse(j.dump()), m, a, reg);
  CHECK(tp::plan_to_json(back).dump() == j.dump());
  opt.threads = 4;
  CHECK(tp::plan_to_json(tp::make_plan(m, a, reg, opt)).dump() == j.dump());

  auto broken = nlohmann::json::parse(j.dump());
  broken["groups"][0]["members"] = {"no_such_node"};
  CHECK_THROWS_AS(tp::plan_from_json(broken, m, a, reg), tp::ParseError);
  broken = nlohmann::json::parse(j.dump());
  broken["groups"][0]["keep"].erase(0);
  CHECK_THROWS_AS(tp::plan_from_json(broken, m, a, reg), tp::ParseError);
  broken = nlohmann::json::parse(j.dump());
  broken.erase("version");
  CHECK_THROWS_AS(tp::plan_from_json(broken, m, a, reg), tp::ParseError);
}

TEST_CASE("tree-level and single-node plans differ at low ratios") {
  const tp::AttributeRegistry reg;
  const tp::ModelArchive m = tp::synthesize_model({"conv_chain", 3, 9});
  const tp::ModelAnalysis a = tp::analyze_model(m, reg);
  tp::PlanOptions opt;
  opt.ratio = 0.3;
  const auto tree = tp::make_plan(m, a, reg, opt);
  opt.mode = tp::ScoreMode::kSingleNode;
  const auto single = tp::make_plan(m, a, reg, opt);
  bool differs = false;
  for (size_t i = 0; i < tree.groups.size(); ++i) differs |= tree.groups[i].keep != single.groups[i].keep;
  CHECK(differs);
}

TEST_CASE("norm and mode names") {
  CHECK(tp::parse_norm_kind("l1") == tp::NormKind::kL1);
  CHECK(tp::parse_norm_kind("l2") == tp::NormKind::kL2);
  CHECK_FALSE(tp::parse_norm_kind("l3").has_value());
  CHECK(tp::parse_score_mode("tree") == tp::ScoreMode::kTreeLevel);
  CHECK(tp::parse_score_mode("single") == tp::ScoreMode::kSingleNode);
}
