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

// Structural rewrite: physically removes the pruned channels from every
// initializer a plan touches.

#ifndef TREEPRUNE_REWRITER_HPP_
#define TREEPRUNE_REWRITER_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "treeprune/model.hpp"
#include "treeprune/scoring.hpp"

namespace treeprune {

enum class RewriteReason { kProducerOutput, kLeafInput, kSideParam };

std::string_view to_string(RewriteReason r);

struct RewriteAction {
  std::string target;  // initializer name
  int axis = 0;
  std::vector<int64_t> keep_indices;  // strictly increasing
  RewriteReason reason = RewriteReason::kProducerOutput;
  int64_t removed_elements = 0;
};

// Gathers `keep` along `axis`. Throws AxisError for a bad axis and IndexError
// for unsorted, duplicate or out-of-range indices.
Tensor slice_initializer(const Tensor& t, int axis, const std::vector<int64_t>& keep);

struct RewriteResult {
  ModelArchive model;
  // One per (initializer, axis); a weight that is both a producer and a leaf
  // is sliced on its output and its input axis.
  std::vector<RewriteAction> actions;
};

// Removals from different groups landing on the same (initializer, axis), as
// behind a Concat, are merged; overlapping removals raise MaskConflict. The
// input model is not modified. Throws UnsupportedRewrite when a sliced
// initializer is also read by a node outside the plan's channel flows.
RewriteResult apply_plan_detailed(const ModelArchive& model, const PruningPlan& plan);
ModelArchive apply_plan(const ModelArchive& model, const PruningPlan& plan);

// Rewrites graph value_info and output shapes from fresh shape inference and
// drops value_info entries that can no longer be inferred.
void refresh_value_infos(ModelArchive& model);

}  // namespace treeprune

#endif  // TREEPRUNE_REWRITER_HPP_
