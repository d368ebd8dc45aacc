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

// Node association trees and the pruning groups derived from them.
//
// A tree is rooted at a weighted node whose output channels are to be
// pruned. Its children are the consumers of the root's outputs; pass-through
// and processing nodes are expanded further, weighted consumers end a branch
// as leaves. A node reachable along several paths appears once per path.

#ifndef TREEPRUNE_ASSOC_TREE_HPP_
#define TREEPRUNE_ASSOC_TREE_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "treeprune/attributes.hpp"
#include "treeprune/graph.hpp"

namespace treeprune {

struct TreeNode {
  int node = -1;  // index into NodeGraph::nodes
  NodeAttribute tag = NodeAttribute::kPruned;
  int parent = -1;  // index into AssocTree::nodes, -1 for the root
  std::vector<int> children;
};

struct AssocTree {
  int root = -1;
  // nodes[0] is the root; children precede grandchildren (breadth-first).
  std::vector<TreeNode> nodes;
  // Classification notes (e.g. a Mul treated as a merge).
  std::vector<std::string> notes;

  std::set<int> leaves() const;
  // Graph-node tag for every node in the tree.
  std::map<int, NodeAttribute> tags() const;
  // (parent graph node, child graph node) for every tree edge, in tree order.
  std::vector<std::pair<int, int>> edges() const;
  std::set<int> node_set() const;
  // Root output plus the outputs of every expanded (non-leaf) node: the
  // tensors carrying the root's channel axis.
  std::set<std::string> carried_tensors(const NodeGraph& graph) const;
};

struct TreeOptions {
  size_t max_nodes = 1u << 16;
};

// Throws UnknownOperator for an unregistered op on the traversal and
// UnboundedTree when the expansion exceeds options.max_nodes.
AssocTree build_tree(const NodeGraph& graph, const AttributeRegistry& registry, int root,
                     const TreeOptions& options = {});

// True when the root's channel axis reaches a graph output (e.g. the final
// classifier producing the logits).
bool reaches_graph_output(const NodeGraph& graph, const AssocTree& tree);

struct TreePolicy {
  bool exclude_classifier = false;
  TreeOptions tree_options;
};

// One tree per node classifying as Pruned, keyed by node index.
std::map<int, AssocTree> build_all_trees(const NodeGraph& graph,
                                         const AttributeRegistry& registry,
                                         const TreePolicy& policy = {});

// Output channel count of a weighted root, if its layout is resolvable.
std::optional<int64_t> root_channels(const NodeGraph& graph, int node);

struct PruningGroup {
  int id = 0;
  std::vector<int> members;  // ordered by topological position
  std::vector<AssocTree> trees;
  int64_t channels = 0;
  // Set when the group cannot be pruned structurally.
  std::optional<std::string> blocked;
  bool reaches_output = false;
};

// Union-find closure: roots whose channels meet at an elementwise merge
// (Add/Sub/Mul/Div) share a group. Throws ChannelMismatch when coupled roots
// disagree on their channel count.
std::vector<PruningGroup> merge_groups(const NodeGraph& graph, const AttributeRegistry& registry,
                                       const std::map<int, AssocTree>& trees);

nlohmann::ordered_json tree_to_json(const NodeGraph& graph, const AssocTree& tree);
std::string tree_to_dot(const NodeGraph& graph, const AssocTree& tree);
nlohmann::ordered_json groups_to_json(const NodeGraph& graph,
                                      const std::vector<PruningGroup>& groups);

}  // namespace treeprune

#endif  // TREEPRUNE_ASSOC_TREE_HPP_
