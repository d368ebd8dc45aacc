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

#include "treeprune/graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <queue>

#include "op_utils.hpp"
#include "treeprune/errors.hpp"

namespace treeprune {

const std::vector<int>& NodeGraph::consumers_of(const std::string& tensor) const {
  static const std::vector<int> kNone;
  auto it = consumers.find(tensor);
  return it == consumers.end() ? kNone : it->second;
}

int NodeGraph::find_node(const std::string& name) const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

NodeGraph build_graph(const ModelArchive& model) {
  NodeGraph g;
  const GraphDef& def = model.graph;
  g.nodes = def.nodes;
  for (const auto& t : def.initializers) g.initializer_dims[t.name] = t.dims;
  for (const auto& vi : def.inputs) g.graph_inputs.insert(vi.name);
  for (const auto& vi : def.outputs) g.graph_outputs.insert(vi.name);

  const int n = static_cast<int>(g.nodes.size());
  for (int i = 0; i < n; ++i) {
    for (const auto& out : g.nodes[i].outputs) {
      if (!out.empty()) g.producer.emplace(out, i);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (const auto& in : g.nodes[i].inputs) {
      if (in.empty()) continue;
      auto& list = g.consumers[in];
      if (list.empty() || list.back() != i) {
        if (std::find(list.begin(), list.end(), i) == list.end()) list.push_back(i);
      }
    }
  }

  // Kahn's algorithm; the lowest pending index goes first so an already
  // sorted graph keeps its order.
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> succ(n);
  for (int i = 0; i < n; ++i) {
    std::set<int> preds;
    for (const auto& in : g.nodes[i].inputs) {
      auto it = g.producer.find(in);
      if (it != g.producer.end()) preds.insert(it->second);
    }
    indegree[i] = static_cast<int>(preds.size());
    for (int p : preds) succ[p].push_back(i);
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  while (!ready.empty()) {
    const int i = ready.top();
    ready.pop();
    g.topo_order.push_back(i);
    for (int s : succ[i]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  if (static_cast<int>(g.topo_order.size()) != n) {
    std::string names;
    for (int i = 0; i < n; ++i) {
      if (indegree[i] > 0) names += (names.empty() ? "" : ", ") + g.nodes[i].display_name();
    }
    throw CycleError("graph contains a cycle through: " + names);
  }
  g.topo_rank.assign(n, 0);
  for (int r = 0; r < n; ++r) g.topo_rank[g.topo_order[r]] = r;
  return g;
}

int64_t TensorShape::elements(int64_t batch) const {
  int64_t total = 1;
  for (int64_t d : dims) total *= d == kSymbolicDim ? batch : d;
  return total;
}

std::string to_string(const TensorShape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.dims.size(); ++i) {
    if (i) out += ",";
    out += s.dims[i] == kSymbolicDim ? std::string("N") : std::to_string(s.dims[i]);
  }
  return out + "]";
}

const TensorShape& ShapeEnv::at(const std::string& tensor) const {
  auto it = shapes.find(tensor);
  if (it == shapes.end()) {
    throw UnsupportedOpShape("no inferred shape for tensor '" + tensor + "'");
  }
  return it->second;
}

int normalize_axis(int64_t axis, size_t rank) {
  const auto r = static_cast<int64_t>(rank);
  if (axis < -r || axis >= r) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(rank));
  }
  return static_cast<int>(axis < 0 ? axis + r : axis);
}

namespace {

using Dims = std::vector<int64_t>;

const std::set<std::string>& supported_ops() {
  static const std::set<std::string> ops{
      "Conv", "ConvTranspose", "MaxPool", "AveragePool", "GlobalAveragePool",
      "GlobalMaxPool", "Relu", "Sigmoid", "Tanh", "Softmax", "Erf", "Sqrt",
      "Cast", "Pow", "Flatten", "Reshape", "Transpose", "Add", "Sub", "Mul",
      "Div", "Concat", "BatchNormalization", "Gemm", "MatMul", "Pad",
      "ReduceMean", "ReduceMax", "Unsqueeze", "Slice", "Gather", "Resize"};
  return ops;
}

[[noreturn]] void mismatch(const NodeDef& n, const std::string& why) {
  throw ShapeMismatch(n.display_name() + ": " + why);
}

Dims broadcast(const NodeDef& n, const Dims& a, const Dims& b) {
  const size_t r = std::max(a.size(), b.size());
  Dims out(r);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const int64_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (da == db) out[i] = da;
    else if (da == 1) out[i] = db;
    else if (db == 1) out[i] = da;
    else mismatch(n, "cannot broadcast " + to_string(TensorShape{a}) + " with " +
                         to_string(TensorShape{b}));
  }
  return out;
}

// Spatial output extent for convolution and pooling windows.
int64_t window_out(int64_t in, int64_t k, int64_t stride, int64_t dilation,
                   int64_t pad_total, bool ceil_mode) {
  const int64_t span = dilation * (k - 1) + 1;
  const int64_t num = in + pad_total - span;
  if (num < 0) return 0;
  return (ceil_mode ? (num + stride - 1) / stride : num / stride) + 1;
}

Dims infer_window(const NodeDef& n, const Dims& x, const Dims& kernel, int64_t out_channels,
                  bool ceil_mode) {
  if (x.size() < 3) mismatch(n, "expects rank >= 3 input");
  const size_t spatial = x.size() - 2;
  if (kernel.size() != spatial) mismatch(n, "kernel rank does not match input");
  const auto strides = n.attr_ints("strides", Dims(spatial, 1));
  const auto dilations = n.attr_ints("dilations", Dims(spatial, 1));
  auto pads = n.attr_ints("pads", Dims(2 * spatial, 0));
  const std::string auto_pad = n.attr_string("auto_pad", "NOTSET");
  Dims out{x[0], out_channels};
  for (size_t i = 0; i < spatial; ++i) {
    const int64_t in = x[2 + i];
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
      out.push_back((in + strides[i] - 1) / strides[i]);
    } else {
      const int64_t pad_total = auto_pad == "VALID" ? 0 : pads[i] + pads[i + spatial];
      out.push_back(window_out(in, kernel[i], strides[i], dilations[i], pad_total, ceil_mode));
    }
  }
  return out;
}

int64_t product(const Dims& d, size_t begin, size_t end) {
  int64_t p = 1;
  for (size_t i = begin; i < end; ++i) p *= d[i];
  return p;
}

}  // namespace

bool shape_inference_supported(const std::string& op_type) {
  return supported_ops().count(op_type) != 0;
}

ShapeEnv infer_shapes(const ModelArchive& model, const NodeGraph& graph,
                      const std::map<std::string, TensorShape>& input_shapes) {
  ShapeEnv env;
  const GraphDef& def = model.graph;
  for (const auto& t : def.initializers) env.shapes[t.name] = TensorShape{t.dims};
  for (const auto& vi : def.inputs) {
    if (def.is_initializer(vi.name)) continue;
    TensorShape s;
    if (auto it = input_shapes.find(vi.name); it != input_shapes.end()) {
      s = it->second;
    } else if (vi.shape) {
      bool known = true;
      for (size_t i = 0; i < vi.shape->size(); ++i) {
        const Dimension& d = (*vi.shape)[i];
        if (d.value) s.dims.push_back(*d.value);
        else if (i == 0) s.dims.push_back(kSymbolicDim);
        else known = false;
      }
      if (!known) {
        throw ShapeMismatch("graph input '" + vi.name +
                            "' has a symbolic non-batch dimension; pass a concrete shape");
      }
    } else {
      continue;
    }
    for (size_t i = 1; i < s.dims.size(); ++i) {
      if (s.dims[i] < 0) {
        throw ShapeMismatch("graph input '" + vi.name + "' has a symbolic non-batch dimension");
      }
    }
    env.shapes[vi.name] = std::move(s);
  }

  for (int idx : graph.topo_order) {
    const NodeDef& n = graph.nodes[idx];
    const std::string& op = n.op_type;
    auto in = [&](size_t i) -> const Dims& { return env.shapes.at(n.inputs[i]).dims; };
    auto has_in = [&](size_t i) {
      return i < n.inputs.size() && !n.inputs[i].empty() && env.has(n.inputs[i]);
    };
    bool ready = supported_ops().count(op) != 0 && !n.inputs.empty() && has_in(0);
    if (ready && (op == "Conv" || op == "ConvTranspose" || op == "Gemm" || op == "MatMul")) {
      ready = has_in(1);
    }
    if (!ready) {
      env.unresolved.push_back(n.display_name());
      continue;
    }

    std::vector<Dims> outs(1);
    Dims& out = outs[0];
    const Dims& x = in(0);

    if (op == "Conv") {
      const Dims& w = in(1);
      const int64_t group = n.attr_int("group", 1);
      if (w.size() != x.size()) mismatch(n, "weight rank differs from input rank");
      if (x[1] != w[1] * group) {
        mismatch(n, "input has " + std::to_string(x[1]) + " channels, weight expects " +
                        std::to_string(w[1] * group));
      }
      const Dims kernel = n.attr_ints("kernel_shape", Dims(w.begin() + 2, w.end()));
      out = infer_window(n, x, kernel, w[0], false);
    } else if (op == "ConvTranspose") {
      const Dims& w = in(1);
      const int64_t group = n.attr_int("group", 1);
      if (x[1] != w[0]) mismatch(n, "input channels do not match weight axis 0");
      const size_t spatial = x.size() - 2;
      const Dims kernel = n.attr_ints("kernel_shape", Dims(w.begin() + 2, w.end()));
      const auto strides = n.attr_ints("strides", Dims(spatial, 1));
      const auto dilations = n.attr_ints("dilations", Dims(spatial, 1));
      const auto pads = n.attr_ints("pads", Dims(2 * spatial, 0));
      const auto out_pad = n.attr_ints("output_padding", Dims(spatial, 0));
      const auto explicit_shape = n.attr_ints("output_shape");
      out = {x[0], w[1] * group};
      for (size_t i = 0; i < spatial; ++i) {
        if (!explicit_shape.empty()) {
          out.push_back(explicit_shape[explicit_shape.size() - spatial + i]);
        } else {
          out.push_back(strides[i] * (x[2 + i] - 1) + out_pad[i] +
                        (kernel[i] - 1) * dilations[i] + 1 - pads[i] - pads[i + spatial]);
        }
      }
    } else if (op == "MaxPool" || op == "AveragePool") {
      const Dims kernel = n.attr_ints("kernel_shape");
      out = infer_window(n, x, kernel, x[1], n.attr_int("ceil_mode", 0) != 0);
      if (op == "MaxPool" && n.outputs.size() > 1) outs.push_back(out);
    } else if (op == "GlobalAveragePool" || op == "GlobalMaxPool") {
      out = {x[0], x[1]};
      out.resize(x.size(), 1);
    } else if (op == "Relu" || op == "Sigmoid" || op == "Tanh" || op == "Softmax" ||
               op == "Erf" || op == "Sqrt" || op == "Cast") {
      out = x;
    } else if (op == "Add" || op == "Sub" || op == "Mul" || op == "Div" || op == "Pow") {
      if (!has_in(1)) {
        env.unresolved.push_back(n.display_name());
        continue;
      }
      out = broadcast(n, x, in(1));
    } else if (op == "BatchNormalization") {
      out = x;
    } else if (op == "Flatten") {
      const int axis = normalize_axis(n.attr_int("axis", 1), x.size() + 1);
      const bool symbolic = !x.empty() && x[0] == kSymbolicDim;
      if (symbolic && axis == 0) mismatch(n, "Flatten(axis=0) over a symbolic batch");
      Dims concrete = x;
      if (symbolic) concrete[0] = 1;
      out = {product(concrete, 0, axis), product(concrete, axis, x.size())};
      if (symbolic) out[0] = kSymbolicDim;
    } else if (op == "Reshape") {
      auto target = detail::constant_ints(def, n.inputs.size() > 1 ? n.inputs[1] : "");
      if (!target) {
        throw UnsupportedOpShape(n.display_name() +
                                 ": Reshape needs a constant (initializer) shape operand");
      }
      const bool allowzero = n.attr_int("allowzero", 0) != 0;
      out = *target;
      int infer_at = -1;
      for (size_t i = 0; i < out.size(); ++i) {
        if (out[i] == 0 && !allowzero) {
          if (i >= x.size()) mismatch(n, "shape entry 0 beyond input rank");
          out[i] = x[i];
        } else if (out[i] == -1) {
          if (infer_at >= 0) mismatch(n, "more than one -1 in target shape");
          infer_at = static_cast<int>(i);
        }
      }
      const bool symbolic = !x.empty() && x[0] == kSymbolicDim;
      const int64_t in_rest = symbolic ? product(x, 1, x.size()) : product(x, 0, x.size());
      int64_t known = 1;
      bool out_symbolic = false;
      for (size_t i = 0; i < out.size(); ++i) {
        if (static_cast<int>(i) == infer_at) continue;
        if (out[i] == kSymbolicDim) out_symbolic = true;
        else known *= out[i];
      }
      if (symbolic) {
        if (out_symbolic && infer_at >= 0) {
          if (known == 0 || in_rest % known != 0) mismatch(n, "reshape size mismatch");
          out[infer_at] = in_rest / known;
        } else if (infer_at == 0 && known == in_rest) {
          out[0] = kSymbolicDim;
        } else if (!out_symbolic) {
          mismatch(n, "cannot map a symbolic batch through this reshape");
        } else if (known != in_rest) {
          mismatch(n, "reshape size mismatch");
        }
      } else {
        if (infer_at >= 0) {
          if (known == 0 || in_rest % known != 0) mismatch(n, "reshape size mismatch");
          out[infer_at] = in_rest / known;
        } else if (known != in_rest) {
          mismatch(n, "reshape size mismatch");
        }
      }
    } else if (op == "Transpose") {
      Dims perm = n.attr_ints("perm");
      if (perm.empty()) {
        for (size_t i = x.size(); i-- > 0;) perm.push_back(static_cast<int64_t>(i));
      }
      if (perm.size() != x.size()) mismatch(n, "perm length differs from rank");
      for (int64_t p : perm) out.push_back(x[normalize_axis(p, x.size())]);
    } else if (op == "Concat") {
      const int axis = normalize_axis(n.attr_int("axis", 0), x.size());
      out = x;
      for (size_t i = 1; i < n.inputs.size(); ++i) {
        if (!has_in(i)) mismatch(n, "unknown shape for input '" + n.inputs[i] + "'");
        const Dims& y = in(i);
        if (y.size() != x.size()) mismatch(n, "Concat inputs differ in rank");
        for (size_t d = 0; d < x.size(); ++d) {
          if (static_cast<int>(d) == axis) continue;
          if (y[d] != x[d]) mismatch(n, "Concat inputs differ outside the concat axis");
        }
        out[axis] += y[axis];
      }
    } else if (op == "Gemm") {
      const Dims& b = in(1);
      if (x.size() != 2 || b.size() != 2) mismatch(n, "Gemm expects rank-2 operands");
      const bool ta = n.attr_int("transA", 0) != 0;
      const bool tb = n.attr_int("transB", 0) != 0;
      const int64_t m = ta ? x[1] : x[0];
      const int64_t k = ta ? x[0] : x[1];
      const int64_t kb = tb ? b[1] : b[0];
      const int64_t nn = tb ? b[0] : b[1];
      if (k != kb) mismatch(n, "inner dimensions differ (" + std::to_string(k) + " vs " +
                                   std::to_string(kb) + ")");
      out = {m, nn};
    } else if (op == "MatMul") {
      Dims a = x;
      Dims b = in(1);
      const bool a1 = a.size() == 1;
      const bool b1 = b.size() == 1;
      if (a1) a.insert(a.begin(), 1);
      if (b1) b.push_back(1);
      if (a[a.size() - 1] != b[b.size() - 2]) mismatch(n, "MatMul inner dimensions differ");
      Dims batch = broadcast(n, Dims(a.begin(), a.end() - 2), Dims(b.begin(), b.end() - 2));
      out = batch;
      if (!a1) out.push_back(a[a.size() - 2]);
      if (!b1) out.push_back(b.back());
    } else if (op == "Pad") {
      Dims pads = n.attr_ints("pads");
      if (n.inputs.size() > 1 && !n.inputs[1].empty()) {
        auto p = detail::constant_ints(def, n.inputs[1]);
        if (!p) throw UnsupportedOpShape(n.display_name() + ": Pad needs constant pads");
        pads = *p;
      }
      if (pads.size() != 2 * x.size()) mismatch(n, "pads length must be 2 * rank");
      out = x;
      for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] == kSymbolicDim) {
          if (pads[i] != 0 || pads[i + x.size()] != 0) mismatch(n, "padding a symbolic batch");
          continue;
        }
        out[i] = x[i] + pads[i] + pads[i + x.size()];
      }
    } else if (op == "ReduceMean" || op == "ReduceMax") {
      const auto axes = detail::reduce_axes(def, n, x.size());
      const bool keep = n.attr_int("keepdims", 1) != 0;
      for (size_t i = 0; i < x.size(); ++i) {
        const bool reduced = std::find(axes.begin(), axes.end(), static_cast<int>(i)) != axes.end();
        if (!reduced) out.push_back(x[i]);
        else if (keep) out.push_back(1);
      }
    } else if (op == "Unsqueeze") {
      const auto axes_raw = detail::unsqueeze_axes(def, n);
      const size_t r = x.size() + axes_raw.size();
      std::vector<bool> inserted(r, false);
      for (int64_t a : axes_raw) inserted[normalize_axis(a, r)] = true;
      size_t src = 0;
      for (size_t i = 0; i < r; ++i) out.push_back(inserted[i] ? 1 : x[src++]);
    } else if (op == "Slice") {
      const auto spec = detail::slice_spec(def, n, x);
      out = x;
      for (const auto& s : spec) out[s.axis] = s.count;
    } else if (op == "Gather") {
      if (!has_in(1)) {
        env.unresolved.push_back(n.display_name());
        continue;
      }
      const int axis = normalize_axis(n.attr_int("axis", 0), x.size());
      const Dims& ind = in(1);
      out.assign(x.begin(), x.begin() + axis);
      out.insert(out.end(), ind.begin(), ind.end());
      out.insert(out.end(), x.begin() + axis + 1, x.end());
    } else if (op == "Resize") {
      std::optional<Dims> sizes;
      if (n.inputs.size() > 3 && !n.inputs[3].empty()) sizes = detail::constant_ints(def, n.inputs[3]);
      if (sizes) {
        out = *sizes;
        if (!x.empty() && x[0] == kSymbolicDim) out[0] = kSymbolicDim;
      } else {
        auto scales = n.inputs.size() > 2 ? detail::constant_floats(def, n.inputs[2])
                                          : std::optional<std::vector<float>>{};
        if (!scales || scales->size() != x.size()) {
          throw UnsupportedOpShape(n.display_name() + ": Resize needs constant scales or sizes");
        }
        for (size_t i = 0; i < x.size(); ++i) {
          out.push_back(x[i] == kSymbolicDim
                            ? kSymbolicDim
                            : static_cast<int64_t>(std::floor(x[i] * (*scales)[i])));
        }
      }
    }

    for (size_t i = 0; i < n.outputs.size() && i < outs.size(); ++i) {
      if (!n.outputs[i].empty()) env.shapes[n.outputs[i]] = TensorShape{outs[i]};
    }
  }
  return env;
}

}  // namespace treeprune
