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

#include "treeprune/rewriter.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "treeprune/errors.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model_io.hpp"

namespace treeprune {

std::string_view to_string(RewriteReason r) {
  switch (r) {
    case RewriteReason::kProducerOutput: return "producer-output";
    case RewriteReason::kLeafInput: return "leaf-input";
    case RewriteReason::kSideParam: return "side-param";
  }
  return "?";
}

Tensor slice_initializer(const Tensor& t, int axis, const std::vector<int64_t>& keep) {
  if (axis < 0 || axis >= static_cast<int>(t.dims.size())) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for '" + t.name + "'");
  }
  const int64_t extent = t.dims[axis];
  for (size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= extent || (k > 0 && keep[k] <= keep[k - 1])) {
      throw IndexError("keep indices for '" + t.name + "' must be increasing and inside [0, " +
                       std::to_string(extent) + ")");
    }
  }
  int64_t outer = 1;
  int64_t inner = 1;
  for (int k = 0; k < axis; ++k) outer *= t.dims[k];
  for (size_t k = axis + 1; k < t.dims.size(); ++k) inner *= t.dims[k];

  Tensor out = t;
  out.dims[axis] = static_cast<int64_t>(keep.size());
  auto gather = [&](const auto& src, auto& dst) {
    dst.clear();
    dst.reserve(static_cast<size_t>(outer) * keep.size() * inner);
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t j : keep) {
        const auto first = src.begin() + (o * extent + j) * inner;
        dst.insert(dst.end(), first, first + inner);
      }
    }
  };
  if (t.dtype == DataType::kFloat) {
    gather(t.float_data, out.float_data);
  } else if (is_integer_type(t.dtype)) {
    gather(t.int_data, out.int_data);
  } else {
    throw UnsupportedDtype("cannot slice initializer '" + t.name + "' of element type " +
                           std::to_string(static_cast<int>(t.dtype)));
  }
  return out;
}

namespace {

struct Removal {
  std::set<int64_t> removed;
  std::map<int, std::set<int64_t>> by_group;
  RewriteReason reason = RewriteReason::kProducerOutput;
  std::set<int> users;
};

class RemovalTable {
 public:
  void add(const std::string& init, int axis, int group, const std::vector<int64_t>& removed,
           RewriteReason reason, int user) {
    Removal& r = table_[{init, axis}];
    if (r.users.empty()) r.reason = reason;
    r.users.insert(user);
    const std::set<int64_t> incoming(removed.begin(), removed.end());
    auto [it, fresh] = r.by_group.emplace(group, incoming);
    if (!fresh) {
      if (it->second != incoming) {
        throw MaskConflict("group " + std::to_string(group) + " removes two different index sets "
                           "from '" + init + "'");
      }
      return;
    }
    for (int64_t v : incoming) {
      if (!r.removed.insert(v).second) {
        throw MaskConflict("index " + std::to_string(v) + " of '" + init +
                           "' is removed by two groups");
      }
    }
  }

  const std::map<std::pair<std::string, int>, Removal>& entries() const { return table_; }

 private:
  std::map<std::pair<std::string, int>, Removal> table_;
};

std::vector<Dimension> to_dimensions(const TensorShape& s, const std::vector<Dimension>* old) {
  std::vector<Dimension> out;
  for (size_t k = 0; k < s.dims.size(); ++k) {
    Dimension d;
    if (s.dims[k] == kSymbolicDim) {
      d.param = old != nullptr && k < old->size() && !(*old)[k].param.empty() ? (*old)[k].param
                                                                                : "N";
    } else {
      d.value = s.dims[k];
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace

void refresh_value_infos(ModelArchive& model) {
  const NodeGraph graph = build_graph(model);
  const ShapeEnv shapes = infer_shapes(model, graph);
  auto refresh = [&](ValueInfo& vi) {
    if (!shapes.has(vi.name)) return false;
    const std::vector<Dimension>* old = vi.shape ? &*vi.shape : nullptr;
    vi.shape = to_dimensions(shapes.at(vi.name), old);
    return true;
  };
  std::vector<ValueInfo> kept;
  for (auto& vi : model.graph.value_infos) {
    if (refresh(vi)) kept.push_back(vi);
  }
  model.graph.value_infos = std::move(kept);
  for (auto& vi : model.graph.outputs) refresh(vi);
}

RewriteResult apply_plan_detailed(const ModelArchive& model, const PruningPlan& plan) {
  const NodeGraph graph = build_graph(model);
  RemovalTable table;
  // (node, shape initializer) -> entry -> removed positions
  std::map<std::pair<int, std::string>, std::map<int, int64_t>> shape_edits;

  for (const auto& g : plan.groups) {
    const GroupFlow& f = g.flow;
    if (static_cast<int64_t>(g.keep.size()) != f.channels) {
      throw MaskConflict("group " + std::to_string(g.id) + " mask length differs from its flow");
    }
    std::vector<int64_t> pruned;
    for (size_t i = 0; i < g.keep.size(); ++i) {
      if (!g.keep[i]) pruned.push_back(static_cast<int64_t>(i));
    }
    if (pruned.empty()) continue;
    for (const auto& p : f.producers) {
      table.add(p.weight, p.out_axis, g.id, pruned, RewriteReason::kProducerOutput, p.node);
      if (!p.bias.empty()) {
        table.add(p.bias, p.bias_axis, g.id, pruned, RewriteReason::kSideParam, p.node);
      }
    }
    for (const auto& l : f.leaves) {
      table.add(l.weight, l.in_axis, g.id, removed_positions(l.map, g.keep),
                RewriteReason::kLeafInput, l.node);
    }
    for (const auto& s : f.sides) {
      table.add(s.initializer, s.axis, g.id, removed_positions(s.map, g.keep),
                RewriteReason::kSideParam, s.node);
    }
    for (const auto& e : f.shape_edits) {
      shape_edits[{e.node, e.initializer}][e.entry] +=
          static_cast<int64_t>(removed_positions(e.map, g.keep).size());
    }
  }

  RewriteResult result;
  result.model = model;
  GraphDef& out = result.model.graph;
  for (const auto& [key, r] : table.entries()) {
    const auto& [name, axis] = key;
    for (int c : graph.consumers_of(name)) {
      if (!r.users.count(c)) {
        throw UnsupportedRewrite("initializer '" + name + "' is shared with '" +
                                 graph.nodes[c].display_name() +
                                 "', which does not follow the pruned channels");
      }
    }
    if (graph.graph_outputs.count(name)) {
      throw UnsupportedRewrite("initializer '" + name + "' is also a graph output");
    }
    Tensor* t = out.find_initializer(name);
    if (t == nullptr) throw MaskConflict("plan refers to missing initializer '" + name + "'");
    std::vector<int64_t> keep;
    for (int64_t j = 0; j < t->dims[axis]; ++j) {
      if (!r.removed.count(j)) keep.push_back(j);
    }
    if (keep.empty()) throw MaskConflict("every index of '" + name + "' would be removed");
    const int64_t before = t->num_elements();
    *t = slice_initializer(*t, axis, keep);
    result.actions.push_back(
        RewriteAction{name, axis, std::move(keep), r.reason, before - t->num_elements()});
  }

  for (const auto& [key, entries] : shape_edits) {
    const auto& [node, init] = key;
    const Tensor* src = out.find_initializer(init);
    if (src == nullptr) throw MaskConflict("missing shape initializer '" + init + "'");
    Tensor edited = *src;
    for (const auto& [entry, removed] : entries) {
      if (removed == 0) continue;
      edited.int_data.at(entry) -= removed;
      if (edited.int_data[entry] <= 0) throw MaskConflict("reshape target collapses to zero");
    }
    NodeDef& n = out.nodes[node];
    if (graph.consumers_of(init).size() > 1) {
      std::string name = init + "_" + n.display_name();
      while (out.is_initializer(name) || graph.producer.count(name)) name += "_";
      edited.name = name;
      out.initializers.push_back(std::move(edited));
      n.inputs[1] = name;
    } else {
      *out.find_initializer(init) = std::move(edited);
    }
  }

  refresh_value_infos(result.model);
  const auto diags = validate_syntax(result.model);
  if (has_errors(diags)) {
    std::string msg = "rewritten model is invalid:";
    for (const auto& d : diags) {
      if (d.severity == Severity::kError) msg += " " + to_string(d) + ";";
    }
    throw MaskConflict(msg);
  }
  return result;
}

ModelArchive apply_plan(const ModelArchive& model, const PruningPlan& plan) {
  return apply_plan_detailed(model, plan).model;
}

}  // namespace treeprune
