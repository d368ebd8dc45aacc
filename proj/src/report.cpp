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

#include "treeprune/report.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>

#include "treeprune/errors.hpp"

namespace treeprune {

int64_t count_params(const ModelArchive& model) {
  std::set<std::string> used;
  for (const auto& n : model.graph.nodes) {
    for (const auto& in : n.inputs) {
      if (!in.empty()) used.insert(in);
    }
  }
  int64_t total = 0;
  for (const auto& t : model.graph.initializers) {
    if (used.count(t.name)) total += t.num_elements();
  }
  return total;
}

namespace {

int64_t product(const std::vector<int64_t>& d, size_t begin, size_t end) {
  int64_t p = 1;
  for (size_t i = begin; i < end && i < d.size(); ++i) p *= d[i];
  return p;
}

bool is_elementwise(const std::string& op) {
  static const std::set<std::string> s{"Add",  "Sub",  "Mul", "Div",  "Pow",     "Relu",
                                       "Sigmoid", "Tanh", "Erf", "Sqrt", "Softmax",
                                       "BatchNormalization"};
  return s.count(op) != 0;
}

}  // namespace

int64_t node_flops(const NodeGraph& graph, const ShapeEnv& shapes, int node) {
  const NodeDef& n = graph.nodes[node];
  const std::string& op = n.op_type;
  auto dims = [&](const std::string& t) -> std::vector<int64_t> {
    if (auto it = graph.initializer_dims.find(t); it != graph.initializer_dims.end()) return it->second;
    return shapes.at(t).dims;
  };
  auto elements = [&](const std::string& t) { return shapes.at(t).elements(1); };
  if (op == "Conv") {
    const auto w = dims(n.inputs[1]);
    const auto y = shapes.at(n.outputs[0]).dims;
    return 2 * w[0] * product(w, 1, w.size()) * product(y, 2, y.size());
  }
  if (op == "ConvTranspose") {
    const auto w = dims(n.inputs[1]);
    const auto x = shapes.at(n.inputs[0]).dims;
    return 2 * w[0] * product(w, 1, w.size()) * product(x, 2, x.size());
  }
  if (op == "Gemm") {
    const auto a = dims(n.inputs[0]);
    const int64_t k = n.attr_int("transA", 0) != 0 ? a[0] : a[1];
    return 2 * elements(n.outputs[0]) * k;
  }
  if (op == "MatMul") {
    const auto a = dims(n.inputs[0]);
    return 2 * elements(n.outputs[0]) * a.back();
  }
  if (is_elementwise(op)) return 2 * elements(n.outputs[0]);
  if (op == "MaxPool" || op == "AveragePool") {
    return product(n.attr_ints("kernel_shape"), 0, SIZE_MAX) * elements(n.outputs[0]);
  }
  if (op == "GlobalAveragePool" || op == "ReduceMean" || op == "ReduceMax") {
    return elements(n.inputs[0]);
  }
  return 0;
}

int64_t count_flops(const ModelArchive& model, const NodeGraph& graph, const ShapeEnv& shapes) {
  (void)model;
  int64_t total = 0;
  for (int idx : graph.topo_order) total += node_flops(graph, shapes, idx);
  return total;
}

int64_t count_flops(const ModelArchive& model) {
  const NodeGraph g = build_graph(model);
  return count_flops(model, g, infer_shapes(model, g));
}

std::vector<std::pair<std::string, double>> plan_overlap(const PruningPlan& plan,
                                                         const PruningPlan& reference) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& g : plan.groups) {
    const GroupPlan* r = reference.find(g.members);
    if (r == nullptr) continue;
    const auto ref = r->pruned();
    if (ref.empty()) continue;
    out.emplace_back(g.members.front(), overlap_index(g.pruned(), ref));
  }
  return out;
}

PruneReport summarize(const ModelArchive& before, const ModelArchive& after,
                      const PruningPlan* plan, const PruningPlan* reference) {
  PruneReport r;
  const NodeGraph gb = build_graph(before);
  const NodeGraph ga = build_graph(after);
  const ShapeEnv sb = infer_shapes(before, gb);
  const ShapeEnv sa = infer_shapes(after, ga);
  r.params_before = count_params(before);
  r.params_after = count_params(after);
  r.sparsity = r.params_before > 0
                   ? 1.0 - static_cast<double>(r.params_after) / static_cast<double>(r.params_before)
                   : 0.0;
  r.flops_before = count_flops(before, gb, sb);
  r.flops_after = count_flops(after, ga, sa);
  r.speedup = r.flops_after > 0
                  ? static_cast<double>(r.flops_before) / static_cast<double>(r.flops_after)
                  : 1.0;

  std::map<std::string, double> overlap;
  if (plan != nullptr && reference != nullptr) {
    r.has_reference = true;
    for (const auto& g : plan->groups) {
      const GroupPlan* ref = reference->find(g.members);
      if (ref == nullptr || ref->pruned().empty()) continue;
      const double v = overlap_index(g.pruned(), ref->pruned());
      for (const auto& m : g.members) overlap[m] = v;
    }
  }

  auto weight_dims = [](const NodeGraph& g, const NodeDef& n) -> std::vector<int64_t> {
    if (n.inputs.size() < 2) return {};
    auto it = g.initializer_dims.find(n.inputs[1]);
    return it == g.initializer_dims.end() ? std::vector<int64_t>{} : it->second;
  };
  auto params_of = [](const NodeGraph& g, const NodeDef& n) {
    int64_t p = 0;
    for (const auto& in : n.inputs) {
      if (auto it = g.initializer_dims.find(in); it != g.initializer_dims.end()) {
        p += product(it->second, 0, it->second.size());
      }
    }
    return p;
  };
  static const std::set<std::string> weighted{"Conv", "ConvTranspose", "Gemm", "MatMul"};
  for (int idx : gb.topo_order) {
    const NodeDef& n = gb.nodes[idx];
    if (!weighted.count(n.op_type) || weight_dims(gb, n).empty()) continue;
    LayerRow row;
    row.name = n.display_name();
    row.op_type = n.op_type;
    row.weight_before = weight_dims(gb, n);
    row.params_before = params_of(gb, n);
    row.flops_before = node_flops(gb, sb, idx);
    const int a = ga.find_node(row.name);
    if (a >= 0) {
      row.weight_after = weight_dims(ga, ga.nodes[a]);
      row.params_after = params_of(ga, ga.nodes[a]);
      row.flops_after = node_flops(ga, sa, a);
    }
    if (auto it = overlap.find(row.name); it != overlap.end()) row.overlap = it->second;
    r.layers.push_back(std::move(row));
  }
  return r;
}

nlohmann::ordered_json PruneReport::to_json() const {
  nlohmann::ordered_json j;
  j["flop_convention"] = kFlopConvention;
  j["params_before"] = params_before;
  j["params_after"] = params_after;
  j["sparsity"] = sparsity;
  j["flops_before"] = flops_before;
  j["flops_after"] = flops_after;
  j["speedup"] = speedup;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : layers) {
    nlohmann::ordered_json e;
    e["name"] = l.name;
    e["op_type"] = l.op_type;
    e["weight_before"] = l.weight_before;
    e["weight_after"] = l.weight_after;
    e["params_before"] = l.params_before;
    e["params_after"] = l.params_after;
    e["flops_before"] = l.flops_before;
    e["flops_after"] = l.flops_after;
    if (has_reference) {
      e["overlap"] = l.overlap ? nlohmann::ordered_json(*l.overlap) : nlohmann::ordered_json(nullptr);
    }
    j["layers"].push_back(std::move(e));
  }
  return j;
}

namespace {

std::string dims_text(const std::vector<int64_t>& d) {
  std::string s;
  for (size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
  return s.empty() ? "-" : s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pad_right(std::string s, size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace

std::string PruneReport::to_text() const {
  std::string out;
  out += "# " + std::string(kFlopConvention) + "\n";
  out += "params  " + std::to_string(params_before) + " -> " + std::to_string(params_after) + " (" +
         fmt("%.2f", params_before / 1048576.0) + "M -> " + fmt("%.2f", params_after / 1048576.0) +
         "M binary)  sparsity " + fmt("%.2f%%", 100.0 * sparsity) + "\n";
  out += "flops   " + std::to_string(flops_before) + " -> " + std::to_string(flops_after) + " (" +
         fmt("%.3f", flops_before / 1073741824.0) + "G -> " +
         fmt("%.3f", flops_after / 1073741824.0) + "G binary)  speedup " + fmt("%.2fx", speedup) +
         "\n\n";
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"layer", "op", "weight", "pruned weight", "params", "flops"};
  if (has_reference) header.push_back("overlap");
  rows.push_back(header);
  for (const auto& l : layers) {
    std::vector<std::string> r{l.name,
                               l.op_type,
                               dims_text(l.weight_before),
                               dims_text(l.weight_after),
                               std::to_string(l.params_before) + " -> " + std::to_string(l.params_after),
                               std::to_string(l.flops_before) + " -> " + std::to_string(l.flops_after)};
    if (has_reference) r.push_back(l.overlap ? fmt("%.3f", *l.overlap) : "-");
    rows.push_back(std::move(r));
  }
  std::vector<size_t> width(header.size(), 0);
  for (const auto& r : rows) {
    for (size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (size_t c = 0; c < r.size(); ++c) {
      const bool numeric = c >= 4;
      line += (c ? "  " : "") + (numeric ? pad_left(r[c], width[c]) : pad_right(r[c], width[c]));
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace treeprune
