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

// Parameter, FLOP and index-overlap statistics.
//
// FLOP convention (batch 1):
//   Conv           2 * CO * CI/group * prod(kernel) * prod(output spatial)
//   ConvTranspose  2 * CI * CO/group * prod(kernel) * prod(input spatial)
//   Gemm, MatMul   2 * M * K * N (per batch entry)
//   BatchNorm, elementwise unary/binary ops, Softmax   2 per output element
//   MaxPool, AveragePool   prod(kernel) per output element
//   GlobalAveragePool, ReduceMean, ReduceMax   1 per input element
//   data movement (Reshape, Flatten, Concat, Pad, ...)   0

#ifndef TREEPRUNE_REPORT_HPP_
#define TREEPRUNE_REPORT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model.hpp"
#include "treeprune/scoring.hpp"

namespace treeprune {

inline constexpr const char* kFlopConvention =
    "FLOPs = 2 x multiply-accumulates for Conv/Gemm/MatMul; 2 per element for BatchNorm and "
    "elementwise ops; kernel size per output element for pooling; batch 1";

// Sum of element counts of initializers read by at least one node.
int64_t count_params(const ModelArchive& model);

int64_t node_flops(const NodeGraph& graph, const ShapeEnv& shapes, int node);
// Throws UnsupportedOpShape when a needed shape is unknown.
int64_t count_flops(const ModelArchive& model, const NodeGraph& graph, const ShapeEnv& shapes);
int64_t count_flops(const ModelArchive& model);

struct LayerRow {
  std::string name;
  std::string op_type;
  std::vector<int64_t> weight_before;
  std::vector<int64_t> weight_after;
  int64_t params_before = 0;
  int64_t params_after = 0;
  int64_t flops_before = 0;
  int64_t flops_after = 0;
  std::optional<double> overlap;
};

struct PruneReport {
  int64_t params_before = 0;
  int64_t params_after = 0;
  double sparsity = 0.0;
  int64_t flops_before = 0;
  int64_t flops_after = 0;
  double speedup = 1.0;
  std::vector<LayerRow> layers;
  bool has_reference = false;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

// `plan` and `reference` are optional. With both, each pruned layer carries
// overlap_index(plan's pruned channels, reference's pruned channels).
PruneReport summarize(const ModelArchive& before, const ModelArchive& after,
                      const PruningPlan* plan = nullptr, const PruningPlan* reference = nullptr);

// overlap_index per group present in both plans, keyed by first member name.
// Groups whose reference prunes nothing are skipped.
std::vector<std::pair<std::string, double>> plan_overlap(const PruningPlan& plan,
                                                         const PruningPlan& reference);

}  // namespace treeprune

#endif  // TREEPRUNE_REPORT_HPP_
