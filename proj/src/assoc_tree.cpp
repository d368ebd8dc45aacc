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

#include "treeprune/assoc_tree.hpp"

#include <algorithm>
#include <deque>

#include "disjoint_set.hpp"
#include "treeprune/errors.hpp"

namespace treeprune {

std::set<int> AssocTree::leaves() const {
  std::set<int> out;
  for (const auto& n : nodes) {
    if (n.tag == NodeAttribute::kStopProcess) out.insert(n.node);
  }
  return out;
}

std::map<int, NodeAttribute> AssocTree::tags() const {
  std::map<int, NodeAttribute> out;
  for (const auto& n : nodes) out.emplace(n.node, n.tag);
  return out;
}

std::vector<std::pair<int, int>> AssocTree::edges() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& n : nodes) {
    for (int c : n.children) out.emplace_back(n.node, nodes[c].node);
  }
  return out;
}

std::set<int> AssocTree::node_set() const {
  std::set<int> out;
  for (const auto& n : nodes) out.insert(n.node);
  return out;
}

std::set<std::string> AssocTree::carried_tensors(const NodeGraph& graph) const {
  std::set<std::string> out;
  for (const auto& n : nodes) {
    if (n.tag == NodeAttribute::kStopProcess) continue;
    for (const auto& t : graph.nodes[n.node].outputs) {
      if (!t.empty()) out.insert(t);
    }
  }
  return out;
}

namespace {

bool expands(NodeAttribute a) {
  return a == NodeAttribute::kNextProcess || a == NodeAttribute::kNextNoProcess;
}

std::vector<int> children_of(const NodeGraph& graph, int node) {
  std::vector<int> out;
  for (const auto& t : graph.nodes[node].outputs) {
    if (t.empty()) continue;
    for (int c : graph.consumers_of(t)) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

bool is_merge_op(const std::string& op) {
  return op == "Add" || op == "Sub" || op == "Mul" || op == "Div";
}

}  // namespace

AssocTree build_tree(const NodeGraph& graph, const AttributeRegistry& registry, int root,
                     const TreeOptions& options) {
  std::string note;
  const NodeAttribute root_tag = classify_node(registry, graph, root, TraversalRole::kRoot, &note);
  if (root_tag != NodeAttribute::kPruned) {
    throw UnknownOperator("node '" + graph.nodes[root].display_name() +
                          "' is not a prunable root (" + std::string(to_string(root_tag)) + ")");
  }
  AssocTree tree;
  tree.root = root;
  tree.nodes.push_back(TreeNode{root, NodeAttribute::kPruned, -1, {}});

  std::deque<int> frontier{0};
  while (!frontier.empty()) {
    const int parent = frontier.front();
    frontier.pop_front();
    for (int child : children_of(graph, tree.nodes[parent].node)) {
      note.clear();
      const NodeAttribute tag =
          classify_node(registry, graph, child, TraversalRole::kDescendant, &note);
      if (!note.empty() &&
          std::find(tree.notes.begin(), tree.notes.end(), note) == tree.notes.end()) {
        tree.notes.push_back(note);
      }
      if (tree.nodes.size() >= options.max_nodes) {
        throw UnboundedTree("association tree of '" + graph.nodes[root].display_name() +
                            "' exceeds " + std::to_string(options.max_nodes) + " nodes");
      }
      const int id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(TreeNode{child, tag, parent, {}});
      tree.nodes[parent].children.push_back(id);
      // Stop-process nodes end their branch; a node with no consumers ends
      // it as well.
      if (expands(tag)) frontier.push_back(id);
    }
  }
  return tree;
}

bool reaches_graph_output(const NodeGraph& graph, const AssocTree& tree) {
  for (const auto& t : tree.carried_tensors(graph)) {
    if (graph.graph_outputs.count(t)) return true;
  }
  return false;
}

std::map<int, AssocTree> build_all_trees(const NodeGraph& graph,
                                         const AttributeRegistry& registry,
                                         const TreePolicy& policy) {
  std::map<int, AssocTree> trees;
  for (int idx : graph.topo_order) {
    if (!registry.knows(graph.nodes[idx].op_type)) continue;
    if (classify_node(registry, graph, idx, TraversalRole::kRoot) != NodeAttribute::kPruned) {
      continue;
    }
    AssocTree tree = build_tree(graph, registry, idx, policy.tree_options);
    if (policy.exclude_classifier && reaches_graph_output(graph, tree)) continue;
    trees.emplace(idx, std::move(tree));
  }
  return trees;
}

std::optional<int64_t> root_channels(const NodeGraph& graph, int node) {
  const NodeDef& n = graph.nodes[node];
  if (n.inputs.size() < 2) return std::nullopt;
  auto it = graph.initializer_dims.find(n.inputs[1]);
  if (it == graph.initializer_dims.end()) return std::nullopt;
  const auto& w = it->second;
  if (n.op_type == "Conv") {
    if (w.size() < 3) return std::nullopt;
    return w[0];
  }
  if (n.op_type == "ConvTranspose") {
    if (w.size() < 3) return std::nullopt;
    return w[1] * n.attr_int("group", 1);
  }
  if (n.op_type == "Gemm") {
    if (w.size() != 2) return std::nullopt;
    return n.attr_int("transB", 0) != 0 ? w[0] : w[1];
  }
  if (n.op_type == "MatMul") {
    if (w.size() != 2) return std::nullopt;
    return w[1];
  }
  return std::nullopt;
}

std::vector<PruningGroup> merge_groups(const NodeGraph& graph, const AttributeRegistry& registry,
                                       const std::map<int, AssocTree>& trees) {
  std::vector<int> roots;
  for (const auto& [root, tree] : trees) roots.push_back(root);
  std::sort(roots.begin(), roots.end(),
            [&](int a, int b) { return graph.topo_rank[a] < graph.topo_rank[b]; });
  std::map<int, size_t> slot;
  for (size_t i = 0; i < roots.size(); ++i) slot[roots[i]] = i;

  std::vector<std::set<std::string>> carried(roots.size());
  std::map<std::string, std::vector<size_t>> carriers;
  for (size_t i = 0; i < roots.size(); ++i) {
    carried[i] = trees.at(roots[i]).carried_tensors(graph);
    for (const auto& t : carried[i]) carriers[t].push_back(i);
  }

  detail::DisjointSet sets(roots.size());
  std::vector<std::vector<std::string>> reasons(roots.size());
  for (size_t i = 0; i < roots.size(); ++i) {
    const AssocTree& tree = trees.at(roots[i]);
    std::set<int> visited;
    for (const auto& tn : tree.nodes) {
      if (tn.tag != NodeAttribute::kNextProcess || !visited.insert(tn.node).second) continue;
      const NodeDef& n = graph.nodes[tn.node];
      if (!is_merge_op(n.op_type)) continue;
      for (const auto& in : n.inputs) {
        if (in.empty() || graph.is_initializer(in) || carried[i].count(in)) continue;
        auto it = carriers.find(in);
        if (it == carriers.end()) {
          reasons[i].push_back(n.op_type + " '" + n.display_name() + "' merges operand '" + in +
                               "' that no prunable node produces");
          continue;
        }
        for (size_t other : it->second) sets.unite(i, other);
      }
    }
    const NodeDef& rn = graph.nodes[roots[i]];
    if (!root_channels(graph, roots[i])) {
      reasons[i].push_back(rn.op_type + " '" + rn.display_name() +
                           "' has no weight initializer with a resolvable output-channel axis");
    }
  }

  // Components in order of their first member.
  std::map<size_t, size_t> component_index;
  std::vector<PruningGroup> groups;
  for (size_t i = 0; i < roots.size(); ++i) {
    const size_t rep = sets.find(i);
    auto [it, inserted] = component_index.emplace(rep, groups.size());
    if (inserted) {
      PruningGroup g;
      g.id = static_cast<int>(groups.size());
      groups.push_back(std::move(g));
    }
    PruningGroup& g = groups[it->second];
    g.members.push_back(roots[i]);
    g.trees.push_back(trees.at(roots[i]));
    g.reaches_output = g.reaches_output || reaches_graph_output(graph, trees.at(roots[i]));
    for (const auto& r : reasons[i]) {
      if (!g.blocked) g.blocked = r;
      else if (g.blocked->find(r) == std::string::npos) *g.blocked += "; " + r;
    }
  }

  for (auto& g : groups) {
    std::optional<int64_t> channels;
    for (int m : g.members) {
      auto c = root_channels(graph, m);
      if (!c) continue;
      if (channels && *channels != *c) {
        std::string names;
        for (int mm : g.members) {
          names += (names.empty() ? "" : ", ") + graph.nodes[mm].display_name() + "=" +
                   std::to_string(root_channels(graph, mm).value_or(-1));
        }
        throw ChannelMismatch("coupled producers disagree on channel count: " + names);
      }
      channels = c;
    }
    g.channels = channels.value_or(0);
  }
  (void)registry;
  return groups;
}

nlohmann::ordered_json tree_to_json(const NodeGraph& graph, const AssocTree& tree) {
  std::function<nlohmann::ordered_json(int)> emit = [&](int id) {
    const TreeNode& tn = tree.nodes[id];
    const NodeDef& n = graph.nodes[tn.node];
    nlohmann::ordered_json j;
    j["name"] = n.display_name();
    j["op_type"] = n.op_type;
    j["attribute"] = std::string(to_string(tn.tag));
    j["children"] = nlohmann::ordered_json::array();
    for (int c : tn.children) j["children"].push_back(emit(c));
    return j;
  };
  return emit(0);
}

std::string tree_to_dot(const NodeGraph& graph, const AssocTree& tree) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  std::string out = "digraph " + quote("tree_" + graph.nodes[tree.root].display_name()) + " {\n";
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& tn = tree.nodes[i];
    const NodeDef& n = graph.nodes[tn.node];
    const char* shape = tn.tag == NodeAttribute::kPruned        ? "doubleoctagon"
                        : tn.tag == NodeAttribute::kStopProcess ? "box"
                                                                : "ellipse";
    out += "  t" + std::to_string(i) + " [label=" +
           quote(n.display_name() + "\\n" + n.op_type + " / " + std::string(to_string(tn.tag))) +
           ", shape=" + shape + "];\n";
  }
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    for (int c : tree.nodes[i].children) {
      out += "  t" + std::to_string(i) + " -> t" + std::to_string(c) + ";\n";
    }
  }
  return out + "}\n";
}

nlohmann::ordered_json groups_to_json(const NodeGraph& graph,
                                      const std::vector<PruningGroup>& groups) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    nlohmann::ordered_json j;
    j["id"] = g.id;
    j["members"] = nlohmann::ordered_json::array();
    for (int m : g.members) j["members"].push_back(graph.nodes[m].display_name());
    j["channels"] = g.channels;
    j["reaches_output"] = g.reaches_output;
    if (g.blocked) j["blocked"] = *g.blocked;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace treeprune
