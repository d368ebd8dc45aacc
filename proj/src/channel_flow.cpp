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

#include "treeprune/channel_flow.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>

#include "op_utils.hpp"
#include "treeprune/errors.hpp"

namespace treeprune {

std::vector<int64_t> removed_positions(const IndexMap& map, const std::vector<bool>& keep) {
  std::vector<int64_t> out;
  for (size_t i = 0; i < map.size() && i < keep.size(); ++i) {
    if (!keep[i]) out.insert(out.end(), map[i].begin(), map[i].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

IndexMap identity_map(int64_t c) {
  IndexMap m(static_cast<size_t>(c));
  for (int64_t i = 0; i < c; ++i) m[i] = {i};
  return m;
}

IndexMap shifted(const IndexMap& m, int64_t offset) {
  IndexMap out = m;
  for (auto& v : out) {
    for (auto& p : v) p += offset;
  }
  return out;
}

// Axes [lo, hi) of `dims` collapse into one; `axis` lies inside the range.
IndexMap collapse(const IndexMap& m, const std::vector<int64_t>& dims, int lo, int hi, int axis,
                  const std::string& where) {
  int64_t outer = 1;
  int64_t inner = 1;
  for (int k = lo; k < axis; ++k) {
    if (dims[k] == kSymbolicDim) {
      throw UnsupportedRewrite(where + ": pruned axis merges with a symbolic dimension");
    }
    outer *= dims[k];
  }
  for (int k = axis + 1; k < hi; ++k) {
    if (dims[k] == kSymbolicDim) {
      throw UnsupportedRewrite(where + ": pruned axis merges with a symbolic dimension");
    }
    inner *= dims[k];
  }
  if (outer == 1 && inner == 1) return m;
  const int64_t d = dims[axis];
  IndexMap out(m.size());
  for (size_t i = 0; i < m.size(); ++i) {
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t p : m[i]) {
        for (int64_t s = 0; s < inner; ++s) out[i].push_back((o * d + p) * inner + s);
      }
    }
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

bool is_binary_elementwise(const std::string& op) {
  return op == "Add" || op == "Sub" || op == "Mul" || op == "Div" || op == "Pow";
}

bool is_unary_passthrough(const std::string& op) {
  return op == "Relu" || op == "Sigmoid" || op == "Tanh" || op == "Erf" || op == "Sqrt" ||
         op == "Cast";
}

class FlowBuilder {
 public:
  FlowBuilder(const ModelArchive& model, const NodeGraph& graph, const ShapeEnv& shapes,
              const AttributeRegistry& registry)
      : model_(model), graph_(graph), shapes_(shapes), registry_(registry) {}

  GroupFlow run(const PruningGroup& group) {
    flow_.channels = group.channels;
    for (int m : group.members) add_producer(m);
    while (!work_.empty()) {
      const std::string t = work_.top().second;
      work_.pop();
      for (int c : graph_.consumers_of(t)) visit(c, t);
    }
    check_pending();
    for (const auto& [name, site] : sites_) {
      flow_.sites.push_back(site);
      if (graph_.graph_outputs.count(name)) flow_.outputs.push_back(site);
    }
    return std::move(flow_);
  }

 private:
  [[noreturn]] void unsupported(int node, const std::string& why) const {
    throw UnsupportedRewrite("'" + graph_.nodes[node].display_name() + "' (" +
                             graph_.nodes[node].op_type + "): " + why);
  }

  const std::vector<int64_t>& dims_of(const std::string& t) const {
    if (auto it = graph_.initializer_dims.find(t); it != graph_.initializer_dims.end()) {
      return it->second;
    }
    return shapes_.at(t).dims;
  }

  int rank_of_producer(const std::string& t) const {
    auto it = graph_.producer.find(t);
    return it == graph_.producer.end() ? -1 : graph_.topo_rank[it->second];
  }

  void add_site(const std::string& t, int axis, IndexMap map, bool merge_concat = false) {
    const auto& dims = dims_of(t);
    if (axis < 0 || axis >= static_cast<int>(dims.size())) {
      throw AxisError("channel axis " + std::to_string(axis) + " out of range for '" + t + "'");
    }
    auto it = sites_.find(t);
    if (it != sites_.end()) {
      TensorSite& s = it->second;
      if (s.axis != axis) {
        throw UnsupportedRewrite("tensor '" + t + "' carries the same channels on two axes");
      }
      if (s.map == map) return;
      if (!merge_concat) {
        throw UnsupportedRewrite("tensor '" + t + "' carries the same channels at two layouts");
      }
      for (size_t i = 0; i < map.size(); ++i) {
        s.map[i].insert(s.map[i].end(), map[i].begin(), map[i].end());
        std::sort(s.map[i].begin(), s.map[i].end());
        s.map[i].erase(std::unique(s.map[i].begin(), s.map[i].end()), s.map[i].end());
      }
      return;
    }
    TensorSite s;
    s.tensor = t;
    s.axis = axis;
    s.extent = dims[axis];
    s.map = std::move(map);
    for (const auto& v : s.map) {
      for (int64_t p : v) {
        if (p < 0 || p >= s.extent) {
          throw IndexError("channel position " + std::to_string(p) + " outside '" + t + "'");
        }
      }
    }
    sites_.emplace(t, std::move(s));
    work_.emplace(-rank_of_producer(t), t);
  }

  void add_producer(int m) {
    const NodeDef& n = graph_.nodes[m];
    ProducerSlice p;
    p.node = m;
    if (n.inputs.size() < 2 || !graph_.is_initializer(n.inputs[1])) {
      unsupported(m, "weight is not an initializer");
    }
    p.weight = n.inputs[1];
    const auto& w = graph_.initializer_dims.at(p.weight);
    int out_axis = 1;
    if (n.op_type == "Conv") {
      if (n.attr_int("group", 1) != 1) unsupported(m, "grouped convolution");
      p.out_axis = 0;
    } else if (n.op_type == "ConvTranspose") {
      if (n.attr_int("group", 1) != 1) unsupported(m, "grouped transposed convolution");
      p.out_axis = 1;
    } else if (n.op_type == "Gemm") {
      p.out_axis = n.attr_int("transB", 0) != 0 ? 0 : 1;
    } else if (n.op_type == "MatMul") {
      if (w.size() != 2) unsupported(m, "MatMul weight must be 2-D");
      p.out_axis = 1;
      out_axis = static_cast<int>(shapes_.at(n.outputs[0]).rank()) - 1;
    } else {
      unsupported(m, "no output-channel layout for this op");
    }
    if (w[p.out_axis] != flow_.channels) {
      throw ChannelMismatch("'" + n.display_name() + "' has " + std::to_string(w[p.out_axis]) +
                            " output channels, group has " + std::to_string(flow_.channels));
    }
    if (n.inputs.size() > 2 && !n.inputs[2].empty()) {
      const std::string& b = n.inputs[2];
      if (!graph_.is_initializer(b)) unsupported(m, "bias is not an initializer");
      const auto& bd = graph_.initializer_dims.at(b);
      if (n.op_type == "Gemm") {
        if (!bd.empty() && bd.back() == flow_.channels) {
          p.bias = b;
          p.bias_axis = static_cast<int>(bd.size()) - 1;
        } else if (!bd.empty() && bd.back() != 1) {
          unsupported(m, "bias does not broadcast along the output channels");
        }
      } else {
        if (bd.size() != 1 || bd[0] != flow_.channels) unsupported(m, "bias length mismatch");
        p.bias = b;
        p.bias_axis = 0;
      }
    }
    flow_.producers.push_back(p);
    add_site(n.outputs[0], out_axis, identity_map(flow_.channels));
  }

  void add_leaf(int node, int slot, const std::string& weight, int in_axis, int out_axis,
                const TensorSite& in) {
    if (!graph_.is_initializer(weight)) unsupported(node, "weight is not an initializer");
    const auto& w = graph_.initializer_dims.at(weight);
    if (in_axis >= static_cast<int>(w.size()) || w[in_axis] != in.extent) {
      throw ShapeMismatch("'" + graph_.nodes[node].display_name() +
                          "' weight does not match the incoming channel extent");
    }
    for (const auto& l : flow_.leaves) {
      if (l.node == node && l.slot == slot) return;
    }
    flow_.leaves.push_back(LeafSlice{node, slot, weight, in_axis, out_axis, in.map});
  }

  void add_side(int node, const std::string& init, int axis, const IndexMap& map, bool bn,
                bool bn_affine) {
    for (const auto& s : flow_.sides) {
      if (s.node == node && s.initializer == init) return;
    }
    flow_.sides.push_back(SideSlice{node, init, axis, map, bn, bn_affine});
  }

  void visit(int c, const std::string& t) {
    if (!visited_.insert({c, t}).second) return;
    const NodeDef& n = graph_.nodes[c];
    const TensorSite in = sites_.at(t);
    std::vector<int> slots;
    for (size_t s = 0; s < n.inputs.size(); ++s) {
      if (n.inputs[s] == t) slots.push_back(static_cast<int>(s));
    }
    const NodeAttribute tag = classify_node(registry_, graph_, c, TraversalRole::kDescendant);
    const int r = static_cast<int>(dims_of(t).size());
    const std::string& op = n.op_type;

    if (tag == NodeAttribute::kStopProcess) {
      if (slots.size() != 1 || slots[0] != 0) {
        unsupported(c, "pruned channels enter through a weight operand");
      }
      if (op == "Conv" || op == "ConvTranspose") {
        if (n.attr_int("group", 1) != 1) unsupported(c, "grouped convolution consumes pruned channels");
        if (in.axis != 1) unsupported(c, "pruned axis is not the channel axis");
        if (op == "Conv") add_leaf(c, 0, n.inputs[1], 1, 0, in);
        else add_leaf(c, 0, n.inputs[1], 0, 1, in);
      } else if (op == "Gemm") {
        const int k_axis = n.attr_int("transA", 0) != 0 ? 0 : 1;
        if (in.axis != k_axis) unsupported(c, "pruned axis is not the reduction axis");
        const bool tb = n.attr_int("transB", 0) != 0;
        add_leaf(c, 0, n.inputs[1], tb ? 1 : 0, tb ? 0 : 1, in);
      } else if (op == "MatMul") {
        if (r < 2 || in.axis != r - 1) unsupported(c, "pruned axis is not the reduction axis");
        if (!graph_.is_initializer(n.inputs[1]) || graph_.initializer_dims.at(n.inputs[1]).size() != 2) {
          unsupported(c, "MatMul without a 2-D initializer weight");
        }
        add_leaf(c, 0, n.inputs[1], 0, 1, in);
      } else {
        unsupported(c, "weighted consumer without an input-channel layout");
      }
      return;
    }

    const std::string out = n.outputs.empty() ? std::string() : n.outputs[0];
    auto same_axis = [&]() { add_site(out, in.axis, in.map); };

    if (is_unary_passthrough(op)) return same_axis();
    if (op == "Softmax") {
      const int ax = normalize_axis(n.attr_int("axis", model_.opset_version() >= 13 ? -1 : 1), r);
      const bool mixes = model_.opset_version() >= 13 ? ax == in.axis : in.axis >= ax;
      if (mixes) {
        flow_.mixes_channels = true;
        flow_.warnings.push_back("Softmax '" + n.display_name() +
                                 "' normalizes over the pruned axis; masked equivalence is "
                                 "approximate");
      }
      return same_axis();
    }
    if (op == "MaxPool" || op == "AveragePool" || op == "GlobalAveragePool") {
      if (in.axis != 1) unsupported(c, "pooling over the pruned axis");
      return same_axis();
    }
    if (op == "Flatten") {
      const auto& d = dims_of(t);
      const int f = static_cast<int>(n.attr_int("axis", 1) < 0 ? n.attr_int("axis", 1) + r
                                                                 : n.attr_int("axis", 1));
      if (in.axis >= f) {
        return add_site(out, 1, collapse(in.map, d, f, r, in.axis, n.display_name()));
      }
      return add_site(out, 0, collapse(in.map, d, 0, f, in.axis, n.display_name()));
    }
    if (op == "Reshape") return reshape(c, in);
    if (op == "Transpose") {
      std::vector<int64_t> perm = n.attr_ints("perm");
      if (perm.empty()) {
        for (int k = r - 1; k >= 0; --k) perm.push_back(k);
      }
      for (size_t k = 0; k < perm.size(); ++k) {
        if (perm[k] == in.axis) return add_site(out, static_cast<int>(k), in.map);
      }
      unsupported(c, "malformed perm");
    }
    if (op == "Unsqueeze") {
      const auto raw = detail::unsqueeze_axes(model_.graph, n);
      const size_t out_rank = r + raw.size();
      std::set<int> inserted;
      for (int64_t a : raw) inserted.insert(normalize_axis(a, out_rank));
      int src = 0;
      for (int k = 0; k < static_cast<int>(out_rank); ++k) {
        if (inserted.count(k)) continue;
        if (src == in.axis) return add_site(out, k, in.map);
        ++src;
      }
      unsupported(c, "malformed axes");
    }
    if (op == "ReduceMean" || op == "ReduceMax") {
      const auto axes = detail::reduce_axes(model_.graph, n, r);
      if (std::find(axes.begin(), axes.end(), in.axis) != axes.end()) {
        unsupported(c, "reduction over the pruned axis");
      }
      if (n.attr_int("keepdims", 1) != 0) return same_axis();
      const int shift = static_cast<int>(
          std::count_if(axes.begin(), axes.end(), [&](int a) { return a < in.axis; }));
      return add_site(out, in.axis - shift, in.map);
    }
    if (op == "Pad") {
      std::vector<int64_t> pads = n.attr_ints("pads");
      if (n.inputs.size() > 1 && !n.inputs[1].empty()) {
        auto cst = detail::constant_ints(model_.graph, n.inputs[1]);
        if (!cst) unsupported(c, "non-constant pads");
        pads = *cst;
      }
      if (n.inputs.size() > 3 && !n.inputs[3].empty()) unsupported(c, "Pad with explicit axes");
      if (pads.size() == static_cast<size_t>(2 * r) &&
          (pads[in.axis] != 0 || pads[in.axis + r] != 0)) {
        unsupported(c, "padding along the pruned axis");
      }
      return same_axis();
    }
    if (op == "Resize") {
      if (n.inputs.size() > 3 && !n.inputs[3].empty()) unsupported(c, "Resize with explicit sizes");
      if (n.inputs.size() > 2 && !n.inputs[2].empty()) {
        auto scales = detail::constant_floats(model_.graph, n.inputs[2]);
        if (!scales) unsupported(c, "non-constant scales");
        if (static_cast<int>(scales->size()) == r && (*scales)[in.axis] != 1.0f) {
          unsupported(c, "resizing along the pruned axis");
        }
      }
      return same_axis();
    }
    if (op == "Slice") {
      for (const auto& s : detail::slice_spec(model_.graph, n, dims_of(t))) {
        if (s.axis == in.axis) unsupported(c, "slicing along the pruned axis");
      }
      return same_axis();
    }
    if (op == "BatchNormalization") {
      if (slots.size() != 1 || slots[0] != 0 || in.axis != 1) {
        unsupported(c, "pruned axis is not the normalized channel axis");
      }
      for (size_t k = 1; k < 5 && k < n.inputs.size(); ++k) {
        if (!graph_.is_initializer(n.inputs[k])) unsupported(c, "parameters must be initializers");
        add_side(c, n.inputs[k], 0, in.map, true, k <= 2);
      }
      return add_site(out, 1, in.map);
    }
    if (op == "Concat") {
      const int ax = normalize_axis(n.attr_int("axis", 0), r);
      if (ax != in.axis) {
        pending_same_.push_back(c);
        for (const auto& other : n.inputs) {
          if (graph_.is_initializer(other)) {
            const auto& od = graph_.initializer_dims.at(other);
            if (od[in.axis] != in.extent) unsupported(c, "initializer operand extent mismatch");
            add_side(c, other, in.axis, in.map, false, false);
          }
        }
        return same_axis();
      }
      IndexMap merged(in.map.size());
      for (int s : slots) {
        int64_t offset = 0;
        for (int k = 0; k < s; ++k) offset += dims_of(n.inputs[k])[ax];
        const IndexMap part = shifted(in.map, offset);
        for (size_t i = 0; i < part.size(); ++i) {
          merged[i].insert(merged[i].end(), part[i].begin(), part[i].end());
        }
      }
      for (auto& v : merged) std::sort(v.begin(), v.end());
      return add_site(out, ax, std::move(merged), true);
    }
    if (op == "Gather") {
      if (slots.size() != 1 || slots[0] != 0) unsupported(c, "pruned channels used as indices");
      const int g = normalize_axis(n.attr_int("axis", 0), r);
      if (g == in.axis) unsupported(c, "gathering along the pruned axis");
      const int q = static_cast<int>(dims_of(n.inputs[1]).size());
      return add_site(out, in.axis < g ? in.axis : in.axis + q - 1, in.map);
    }
    if (is_binary_elementwise(op) || registry_.extensions().count(op)) {
      return elementwise(c, in, slots);
    }
    unsupported(c, "no channel remapping rule");
  }

  void elementwise(int c, const TensorSite& in, const std::vector<int>& slots) {
    const NodeDef& n = graph_.nodes[c];
    const std::string& out = n.outputs[0];
    const int out_rank = static_cast<int>(dims_of(out).size());
    const int in_rank = static_cast<int>(dims_of(in.tensor).size());
    const int out_axis = in.axis + (out_rank - in_rank);
    if (n.op_type == "Div" && std::find(slots.begin(), slots.end(), 1) != slots.end()) {
      flow_.mixes_channels = true;
      flow_.warnings.push_back("Div '" + n.display_name() +
                               "' divides by pruned channels; masked channels become non-finite");
    }
    for (size_t s = 0; s < n.inputs.size(); ++s) {
      const std::string& other = n.inputs[s];
      if (other.empty() || other == in.tensor) continue;
      const auto& od = dims_of(other);
      const int aligned = out_axis - (out_rank - static_cast<int>(od.size()));
      if (aligned < 0 || od[aligned] == 1) continue;
      if (od[aligned] != in.extent) unsupported(c, "operand extent mismatch on the pruned axis");
      if (graph_.is_initializer(other)) {
        add_side(c, other, aligned, in.map, false, false);
      } else {
        pending_same_.push_back(c);
      }
    }
    add_site(out, out_axis, in.map);
  }

  void reshape(int c, const TensorSite& in) {
    const NodeDef& n = graph_.nodes[c];
    auto target = detail::constant_ints(model_.graph, n.inputs.size() > 1 ? n.inputs[1] : "");
    if (!target) unsupported(c, "non-constant target shape");
    std::vector<int64_t> d = dims_of(in.tensor);
    std::vector<int64_t> od = dims_of(n.outputs[0]);
    if (!d.empty() && !od.empty() && d[0] == kSymbolicDim && od[0] == kSymbolicDim) {
      d[0] = 1;
      od[0] = 1;
    }
    for (int64_t v : d) {
      if (v == kSymbolicDim) unsupported(c, "symbolic dimension moves across the reshape");
    }
    for (int64_t v : od) {
      if (v == kSymbolicDim) unsupported(c, "symbolic dimension moves across the reshape");
    }
    auto prefix = [](const std::vector<int64_t>& v) {
      std::vector<int64_t> p{1};
      for (int64_t x : v) p.push_back(p.back() * x);
      return p;
    };
    const auto pin = prefix(d);
    const auto pout = prefix(od);
    const int r = static_cast<int>(d.size());
    for (int lo = in.axis; lo >= 0; --lo) {
      for (int hi = in.axis + 1; hi <= r; ++hi) {
        for (int b = 0; b < static_cast<int>(od.size()); ++b) {
          if (pin[lo] != pout[b] || pin[hi] != pout[b + 1]) continue;
          IndexMap map = collapse(in.map, d, lo, hi, in.axis, n.display_name());
          const int64_t entry = (*target)[b];
          if (entry != -1 && entry != 0) {
            flow_.shape_edits.push_back(ShapeEdit{c, n.inputs[1], b, map});
          } else if (entry == 0 && !(lo == in.axis && hi == in.axis + 1 && b == in.axis)) {
            unsupported(c, "copied dimension does not track the pruned axis");
          }
          return add_site(n.outputs[0], b, std::move(map));
        }
      }
    }
    unsupported(c, "pruned axis is split across several output dimensions");
  }

  // Multi-input nodes whose other data operands must carry the same channels.
  void check_pending() {
    for (int c : pending_same_) {
      const NodeDef& n = graph_.nodes[c];
      const TensorSite* first = nullptr;
      for (const auto& in : n.inputs) {
        if (in.empty() || graph_.is_initializer(in)) continue;
        auto it = sites_.find(in);
        if (it == sites_.end()) {
          const auto& od = dims_of(in);
          (void)od;
          unsupported(c, "operand '" + in + "' does not carry the pruned channels");
        }
        if (first == nullptr) {
          first = &it->second;
        } else if (first->map != it->second.map) {
          unsupported(c, "operands carry the pruned channels at different positions");
        }
      }
    }
  }

  const ModelArchive& model_;
  const NodeGraph& graph_;
  const ShapeEnv& shapes_;
  const AttributeRegistry& registry_;
  GroupFlow flow_;
  std::map<std::string, TensorSite> sites_;
  std::set<std::pair<int, std::string>> visited_;
  std::vector<int> pending_same_;
  // Tensors ordered by the topological position of their producer.
  std::priority_queue<std::pair<int, std::string>> work_;
};

}  // namespace

GroupFlow analyze_flow(const ModelArchive& model, const NodeGraph& graph, const ShapeEnv& shapes,
                       const AttributeRegistry& registry, const PruningGroup& group) {
  if (group.blocked) throw UnsupportedRewrite(*group.blocked);
  return FlowBuilder(model, graph, shapes, registry).run(group);
}

}  // namespace treeprune
