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

// Channel importance and pruning plans.
//
// The tree-level score of group channel i is
//
//   score(i) = (sum over producers p of |W_p^i|)
//            * (sum over leaves l, sum over k of |W_l^{k, map(i)}|)
//
// where W_p^i is filter i of producer p, W_l^{k, map(i)} the slice of leaf
// filter k that reads channel i, and |.| the l1 or l2 norm. Single-node
// scoring keeps only the producer factor.

#ifndef TREEPRUNE_SCORING_HPP_
#define TREEPRUNE_SCORING_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "treeprune/assoc_tree.hpp"
#include "treeprune/attributes.hpp"
#include "treeprune/channel_flow.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model.hpp"

namespace treeprune {

enum class NormKind { kL1, kL2 };
enum class ScoreMode { kSingleNode, kTreeLevel };

std::string_view to_string(NormKind k);
std::string_view to_string(ScoreMode m);
std::optional<NormKind> parse_norm_kind(std::string_view text);    // "l1", "l2"
std::optional<ScoreMode> parse_score_mode(std::string_view text);  // "tree", "single"

// Norm of the entries of `w` whose index on `axis` is in `indices`.
// Throws AxisError / IndexError on a bad axis or index.
double slice_norm(const Tensor& w, int axis, const std::vector<int64_t>& indices, NormKind kind);
// Norm of every slice along `axis` (the usual per-filter norm for axis 0).
std::vector<double> filter_norms(const Tensor& w, int axis, NormKind kind);
// For each group channel i: sum over k (index on out_axis) of the norm of the
// entries with out_axis index k and in_axis index in map[i].
std::vector<double> leaf_norm_sums(const Tensor& w, int in_axis, int out_axis,
                                   const IndexMap& map, NormKind kind);

struct ScoreVector {
  std::vector<double> values;
  // Set when the tree-level score fell back to producer norms only.
  std::optional<std::string> diagnostic;
};

ScoreVector tree_score(const ModelArchive& model, const GroupFlow& flow, NormKind kind);
ScoreVector single_node_score(const ModelArchive& model, const GroupFlow& flow, NormKind kind);

// round-half-away(ratio * C) clamped to [0, C-1].
int64_t prune_count(double ratio, int64_t channels);
// Prunes the lowest scores; among equal scores the higher index goes first.
std::vector<bool> select_channels(const std::vector<double>& scores, double ratio);

// |a ∩ b| / |b|. Throws EmptyReference when b is empty.
double overlap_index(const std::set<int64_t>& a, const std::set<int64_t>& b);

// Everything the planner and the rewriter need to know about one model.
struct ModelAnalysis {
  NodeGraph graph;
  ShapeEnv shapes;
  std::map<int, AssocTree> trees;
  std::vector<PruningGroup> groups;
};

ModelAnalysis analyze_model(const ModelArchive& model, const AttributeRegistry& registry,
                            const std::map<std::string, TensorShape>& input_shapes = {});

struct PlanOptions {
  double ratio = 0.5;
  NormKind norm = NormKind::kL1;
  ScoreMode mode = ScoreMode::kTreeLevel;
  // Also prune groups whose channels reach a graph output (the logits layer).
  bool include_classifier = false;
  // Worker threads for per-group scoring. The plan is identical for any value.
  int threads = 1;
};

struct GroupPlan {
  int id = 0;
  std::vector<std::string> members;
  std::vector<bool> keep;
  std::vector<double> scores;
  GroupFlow flow;

  std::set<int64_t> pruned() const;
};

struct ExcludedGroup {
  int id = 0;
  std::vector<std::string> members;
  std::string reason;
};

struct PruningPlan {
  double ratio = 0.0;
  NormKind norm = NormKind::kL1;
  ScoreMode mode = ScoreMode::kTreeLevel;
  std::vector<GroupPlan> groups;
  std::vector<ExcludedGroup> excluded;
  std::vector<std::string> notes;

  const GroupPlan* find(const std::vector<std::string>& members) const;
};

// Throws std::invalid_argument for a ratio outside [0, 1).
PruningPlan make_plan(const ModelArchive& model, const ModelAnalysis& analysis,
                      const AttributeRegistry& registry, const PlanOptions& options);

// {version, ratio, criterion, groups:[{id, members, keep, scores}], excluded}
nlohmann::ordered_json plan_to_json(const PruningPlan& plan);
// Rebinds a serialized plan to `model` by member names and recomputes the
// channel flows. Throws ParseError on a malformed or mismatching plan.
PruningPlan plan_from_json(const nlohmann::json& j, const ModelArchive& model,
                           const ModelAnalysis& analysis, const AttributeRegistry& registry);

}  // namespace treeprune

#endif  // TREEPRUNE_SCORING_HPP_
