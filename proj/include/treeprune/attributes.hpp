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

// Operator attribute library: the four roles an operator can play in a node
// association tree.

#ifndef TREEPRUNE_ATTRIBUTES_HPP_
#define TREEPRUNE_ATTRIBUTES_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "treeprune/graph.hpp"
#include "treeprune/model.hpp"

namespace treeprune {

enum class NodeAttribute { kPruned, kNextNoProcess, kNextProcess, kStopProcess };

enum class TraversalRole { kRoot, kDescendant };

std::string_view to_string(NodeAttribute a);
// Accepts "Pruned", "NextNoProcess", ... and the kebab-case forms
// "pruned", "next-no-process", "next-process", "stop-process".
std::optional<NodeAttribute> parse_node_attribute(std::string_view text);

struct OpExtension {
  NodeAttribute attribute = NodeAttribute::kNextNoProcess;
  // Channel remapping used when the op lies on a pruned path. Only
  // "elementwise" (shape-preserving, channel-independent) exists today.
  std::string remap_handler = "elementwise";
};

class AttributeRegistry {
 public:
  // Built-in sets; asserts pairwise disjointness.
  AttributeRegistry();

  const std::set<std::string>& root_set() const { return root_set_; }
  const std::set<std::string>& no_process_set() const { return no_process_set_; }
  const std::set<std::string>& process_set() const { return process_set_; }
  const std::map<std::string, OpExtension>& extensions() const { return extensions_; }

  bool knows(const std::string& op_type) const;

  // Returns a new registry; throws ConflictError if op_type is already
  // classified (built-in or previously registered).
  AttributeRegistry with_extension(const std::string& op_type, OpExtension ext) const;

 private:
  std::set<std::string> root_set_;
  std::set<std::string> no_process_set_;
  std::set<std::string> process_set_;
  std::map<std::string, OpExtension> extensions_;
};

// Pure mapping from op type and traversal position to attribute. Throws
// UnknownOperator for ops outside every set.
NodeAttribute classify(const AttributeRegistry& registry, const std::string& op_type,
                       TraversalRole role);

AttributeRegistry register_custom(const AttributeRegistry& registry,
                                  const std::string& op_type, NodeAttribute attribute);

// Node-aware classification. A Mul only counts as a weighted op when exactly
// one of its inputs is an initializer; otherwise it is an elementwise merge
// (NextProcess) and `note` receives an explanation.
NodeAttribute classify_node(const AttributeRegistry& registry, const NodeGraph& graph,
                            int node, TraversalRole role, std::string* note = nullptr);

// Reads `OpType=Attribute` lines ('#' starts a comment) and registers each.
AttributeRegistry load_registry_extensions(const AttributeRegistry& base,
                                           const std::filesystem::path& path);

}  // namespace treeprune

#endif  // TREEPRUNE_ATTRIBUTES_HPP_
