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

#ifndef TREEPRUNE_GRAPH_HPP_
#define TREEPRUNE_GRAPH_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "treeprune/model.hpp"

namespace treeprune {

// Producer/consumer adjacency over a model's nodes.
struct NodeGraph {
  std::vector<NodeDef> nodes;
  std::map<std::string, int> producer;
  // Each consumer appears once per tensor, in graph order.
  std::map<std::string, std::vector<int>> consumers;
  std::vector<int> topo_order;
  // Position of each node inside topo_order.
  std::vector<int> topo_rank;

  std::map<std::string, std::vector<int64_t>> initializer_dims;
  std::set<std::string> graph_inputs;
  std::set<std::string> graph_outputs;

  bool is_initializer(const std::string& tensor) const {
    return initializer_dims.count(tensor) != 0;
  }
  const std::vector<int>& consumers_of(const std::string& tensor) const;
  // Index of the node named `name`, or -1.
  int find_node(const std::string& name) const;
};

// Throws CycleError if the dataflow graph has a cycle.
NodeGraph build_graph(const ModelArchive& model);

// Dimension 0 may be symbolic (kSymbolicDim); all other dims are concrete.
inline constexpr int64_t kSymbolicDim = -1;

struct TensorShape {
  std::vector<int64_t> dims;

  size_t rank() const { return dims.size(); }
  bool has_symbolic_batch() const { return !dims.empty() && dims[0] == kSymbolicDim; }
  // Element count with a symbolic batch counted as `batch`.
  int64_t elements(int64_t batch = 1) const;

  bool operator==(const TensorShape&) const = default;
};

std::string to_string(const TensorShape& s);

struct ShapeEnv {
  std::map<std::string, TensorShape> shapes;
  // Nodes whose outputs could not be inferred (unsupported op or unknown input).
  std::vector<std::string> unresolved;

  bool has(const std::string& tensor) const { return shapes.count(tensor) != 0; }
  // Throws UnsupportedOpShape when the tensor has no inferred shape.
  const TensorShape& at(const std::string& tensor) const;
};

// Graph inputs absent from input_shapes take their declared ValueInfo shape;
// a dim_param in position 0 becomes kSymbolicDim.
ShapeEnv infer_shapes(const ModelArchive& model, const NodeGraph& graph,
                      const std::map<std::string, TensorShape>& input_shapes = {});

// Ops infer_shapes knows.
bool shape_inference_supported(const std::string& op_type);

// Normalizes a possibly negative axis against rank, throwing AxisError when
// out of range.
int normalize_axis(int64_t axis, size_t rank);

}  // namespace treeprune

#endif  // TREEPRUNE_GRAPH_HPP_
