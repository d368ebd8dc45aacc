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

#include "treeprune/attributes.hpp"

#include <fstream>

#include "treeprune/errors.hpp"

namespace treeprune {

std::string_view to_string(NodeAttribute a) {
  switch (a) {
    case NodeAttribute::kPruned: return "Pruned";
    case NodeAttribute::kNextNoProcess: return "NextNoProcess";
    case NodeAttribute::kNextProcess: return "NextProcess";
    case NodeAttribute::kStopProcess: return "StopProcess";
  }
  return "?";
}

std::optional<NodeAttribute> parse_node_attribute(std::string_view text) {
  if (text == "Pruned" || text == "pruned") return NodeAttribute::kPruned;
  if (text == "NextNoProcess" || text == "next-no-process") return NodeAttribute::kNextNoProcess;
  if (text == "NextProcess" || text == "next-process") return NodeAttribute::kNextProcess;
  if (text == "StopProcess" || text == "stop-process") return NodeAttribute::kStopProcess;
  return std::nullopt;
}

AttributeRegistry::AttributeRegistry()
    : root_set_{"Conv", "ConvTranspose", "Gemm", "MatMul", "Mul"},
      no_process_set_{"Relu",      "Sigmoid",    "Softmax",   "Tanh",
                      "MaxPool",   "AveragePool", "Flatten",  "GlobalAveragePool",
                      "Pad",       "Reshape",    "Transpose", "ReduceMean",
                      "ReduceMax", "Pow",        "Sqrt",      "Erf",
                      "Unsqueeze", "Resize",     "Slice",     "Cast"},
      process_set_{"Add", "Concat", "BatchNormalization", "Sub", "Div", "Gather"} {
  for (const auto& op : root_set_) {
    if (no_process_set_.count(op) || process_set_.count(op)) {
      throw std::logic_error("attribute sets overlap on '" + op + "'");
    }
  }
  for (const auto& op : no_process_set_) {
    if (process_set_.count(op)) throw std::logic_error("attribute sets overlap on '" + op + "'");
  }
}

bool AttributeRegistry::knows(const std::string& op_type) const {
  return root_set_.count(op_type) || no_process_set_.count(op_type) ||
         process_set_.count(op_type) || extensions_.count(op_type);
}

AttributeRegistry AttributeRegistry::with_extension(const std::string& op_type,
                                                    OpExtension ext) const {
  if (knows(op_type)) {
    throw ConflictError("operator '" + op_type + "' is already classified");
  }
  if (ext.remap_handler != "elementwise") {
    throw ConflictError("unknown remap handler '" + ext.remap_handler + "' for '" + op_type + "'");
  }
  AttributeRegistry copy = *this;
  copy.extensions_.emplace(op_type, std::move(ext));
  return copy;
}

NodeAttribute classify(const AttributeRegistry& registry, const std::string& op_type,
                       TraversalRole role) {
  if (registry.root_set().count(op_type)) {
    return role == TraversalRole::kRoot ? NodeAttribute::kPruned : NodeAttribute::kStopProcess;
  }
  if (registry.no_process_set().count(op_type)) return NodeAttribute::kNextNoProcess;
  if (registry.process_set().count(op_type)) return NodeAttribute::kNextProcess;
  if (auto it = registry.extensions().find(op_type); it != registry.extensions().end()) {
    // A registered weighted op behaves like the built-in root set.
    if (it->second.attribute == NodeAttribute::kPruned && role == TraversalRole::kDescendant) {
      return NodeAttribute::kStopProcess;
    }
    return it->second.attribute;
  }
  throw UnknownOperator("operator '" + op_type + "' is not in the attribute library");
}

AttributeRegistry register_custom(const AttributeRegistry& registry, const std::string& op_type,
                                  NodeAttribute attribute) {
  return registry.with_extension(op_type, OpExtension{attribute, "elementwise"});
}

NodeAttribute classify_node(const AttributeRegistry& registry, const NodeGraph& graph, int node,
                            TraversalRole role, std::string* note) {
  const NodeDef& n = graph.nodes.at(node);
  if (n.op_type == "Mul") {
    int constants = 0;
    for (const auto& in : n.inputs) constants += graph.is_initializer(in) ? 1 : 0;
    if (constants != 1) {
      if (note != nullptr) {
        *note = "Mul '" + n.display_name() + "' has " + std::to_string(constants) +
                " initializer inputs; treated as an elementwise merge (NextProcess)";
      }
      return NodeAttribute::kNextProcess;
    }
  }
  return classify(registry, n.op_type, role);
}

AttributeRegistry load_registry_extensions(const AttributeRegistry& base,
                                           const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry extension file '" + path.string() + "'");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  AttributeRegistry reg = base;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected OpType=Attribute");
    }
    const std::string op = trim(line.substr(0, eq));
    const std::string attr_text = trim(line.substr(eq + 1));
    auto attr = parse_node_attribute(attr_text);
    if (op.empty() || !attr) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad entry '" + line + "'");
    }
    reg = register_custom(reg, op, *attr);
  }
  return reg;
}

}  // namespace treeprune
