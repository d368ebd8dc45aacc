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

// Channel flow: where each channel of a pruning group lands on every tensor,
// leaf weight and side parameter downstream of the group's producers.
//
// Scoring reads leaf slices through it, the rewriter slices along it and the
// masked model zeroes along it, so all three agree on the index mapping.

#ifndef TREEPRUNE_CHANNEL_FLOW_HPP_
#define TREEPRUNE_CHANNEL_FLOW_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "treeprune/assoc_tree.hpp"
#include "treeprune/attributes.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model.hpp"

namespace treeprune {

// Group channel i -> positions on one axis. Plain Conv->Conv gives {i};
// after a Concat the positions are shifted; after a Flatten channel i owns a
// contiguous block of spatial positions.
using IndexMap = std::vector<std::vector<int64_t>>;

// Positions of all channels whose keep flag is false.
std::vector<int64_t> removed_positions(const IndexMap& map, const std::vector<bool>& keep);

struct TensorSite {
  std::string tensor;
  int axis = 0;
  int64_t extent = 0;  // length of `axis` in the unpruned model
  IndexMap map;
};

struct ProducerSlice {
  int node = -1;
  std::string weight;
  int out_axis = 0;
  std::string bias;  // empty when absent or broadcast along the channels
  int bias_axis = 0;
};

struct LeafSlice {
  int node = -1;
  int slot = 0;  // data input carrying the channels
  std::string weight;
  int in_axis = 0;   // axis of `weight` indexed by the incoming channels
  int out_axis = 0;  // the leaf's own output-channel axis (k)
  IndexMap map;
};

// A per-channel parameter of a processing node on the path: BatchNorm
// scale/bias/mean/var, or an initializer operand of Add/Sub/Mul/Div whose
// broadcast extent on the carried axis is not 1.
struct SideSlice {
  int node = -1;
  std::string initializer;
  int axis = 0;
  IndexMap map;
  bool batchnorm = false;
  bool batchnorm_scale_or_bias = false;
};

// A constant Reshape target whose entry must shrink by the removed positions.
struct ShapeEdit {
  int node = -1;
  std::string initializer;
  int entry = 0;
  IndexMap map;  // positions on output axis `entry`
};

struct GroupFlow {
  int64_t channels = 0;
  std::vector<ProducerSlice> producers;
  std::vector<LeafSlice> leaves;  // deduplicated by (node, slot)
  std::vector<SideSlice> sides;
  std::vector<TensorSite> sites;  // every tensor carrying the channels
  std::vector<TensorSite> outputs;  // subset of sites that are graph outputs
  std::vector<ShapeEdit> shape_edits;
  // Non-fatal observations, e.g. a Softmax normalizing over the pruned axis.
  std::vector<std::string> warnings;
  // True when some op on the path mixes channels so that zeroing a channel
  // does not remove its influence (masked equivalence cannot hold exactly).
  bool mixes_channels = false;
};

// Throws UnsupportedRewrite when the group's channels reach a construct that
// cannot be sliced structurally (grouped conv, Gather/Reduce/Slice/Pad over the
// pruned axis, a weighted op consuming the channels through its weight input,
// ...), and UnsupportedOpShape when a needed shape is unknown.
GroupFlow analyze_flow(const ModelArchive& model, const NodeGraph& graph, const ShapeEnv& shapes,
                       const AttributeRegistry& registry, const PruningGroup& group);

}  // namespace treeprune

#endif  // TREEPRUNE_CHANNEL_FLOW_HPP_
