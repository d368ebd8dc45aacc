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

// Operand decoding shared by shape inference, the interpreter and the
// channel-flow analysis.

#ifndef TREEPRUNE_SRC_OP_UTILS_HPP_
#define TREEPRUNE_SRC_OP_UTILS_HPP_

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treeprune/errors.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model.hpp"

namespace treeprune::detail {

inline std::optional<std::vector<int64_t>> constant_ints(const GraphDef& g,
                                                         const std::string& name) {
  if (name.empty()) return std::nullopt;
  const Tensor* t = g.find_initializer(name);
  if (t == nullptr || !is_integer_type(t->dtype)) return std::nullopt;
  return t->int_data;
}

inline std::optional<std::vector<float>> constant_floats(const GraphDef& g,
                                                         const std::string& name) {
  if (name.empty()) return std::nullopt;
  const Tensor* t = g.find_initializer(name);
  if (t == nullptr || t->dtype != DataType::kFloat) return std::nullopt;
  return t->float_data;
}

// Normalized, sorted reduction axes. Empty attribute/input means all axes.
inline std::vector<int> reduce_axes(const GraphDef& g, const NodeDef& n, size_t rank) {
  std::vector<int64_t> raw = n.attr_ints("axes");
  if (raw.empty() && n.inputs.size() > 1 && !n.inputs[1].empty()) {
    auto c = constant_ints(g, n.inputs[1]);
    if (!c) throw UnsupportedOpShape(n.display_name() + ": reduction axes must be constant");
    raw = *c;
  }
  std::vector<int> axes;
  if (raw.empty()) {
    if (n.attr_int("noop_with_empty_axes", 0) != 0) return axes;
    for (size_t i = 0; i < rank; ++i) axes.push_back(static_cast<int>(i));
    return axes;
  }
  for (int64_t a : raw) axes.push_back(normalize_axis(a, rank));
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  return axes;
}

inline std::vector<int64_t> unsqueeze_axes(const GraphDef& g, const NodeDef& n) {
  std::vector<int64_t> raw = n.attr_ints("axes");
  if (raw.empty() && n.inputs.size() > 1 && !n.inputs[1].empty()) {
    auto c = constant_ints(g, n.inputs[1]);
    if (!c) throw UnsupportedOpShape(n.display_name() + ": Unsqueeze axes must be constant");
    raw = *c;
  }
  return raw;
}

struct SliceAxis {
  int axis = 0;
  int64_t start = 0;
  int64_t step = 1;
  int64_t count = 0;
};

// Resolved Slice parameters (clamped per ONNX semantics) for a given input shape.
inline std::vector<SliceAxis> slice_spec(const GraphDef& g, const NodeDef& n,
                                         const std::vector<int64_t>& dims) {
  std::vector<int64_t> starts, ends, axes, steps;
  if (n.inputs.size() > 1) {
    auto get = [&](size_t i) -> std::vector<int64_t> {
      if (i >= n.inputs.size() || n.inputs[i].empty()) return {};
      auto c = constant_ints(g, n.inputs[i]);
      if (!c) throw UnsupportedOpShape(n.display_name() + ": Slice parameters must be constant");
      return *c;
    };
    starts = get(1);
    ends = get(2);
    axes = get(3);
    steps = get(4);
  } else {
    starts = n.attr_ints("starts");
    ends = n.attr_ints("ends");
    axes = n.attr_ints("axes");
  }
  if (starts.size() != ends.size()) {
    throw ShapeMismatch(n.display_name() + ": Slice starts/ends length differ");
  }
  if (axes.empty()) {
    for (size_t i = 0; i < starts.size(); ++i) axes.push_back(static_cast<int64_t>(i));
  }
  if (steps.empty()) steps.assign(starts.size(), 1);
  std::vector<SliceAxis> out;
  for (size_t i = 0; i < starts.size(); ++i) {
    SliceAxis s;
    s.axis = normalize_axis(axes[i], dims.size());
    const int64_t d = dims[s.axis];
    if (d == kSymbolicDim) {
      throw UnsupportedOpShape(n.display_name() + ": Slice over a symbolic batch");
    }
    s.step = steps[i];
    if (s.step == 0) throw ShapeMismatch(n.display_name() + ": Slice step 0");
    int64_t start = starts[i] < 0 ? starts[i] + d : starts[i];
    int64_t end = ends[i] < 0 ? ends[i] + d : ends[i];
    if (s.step > 0) {
      start = std::clamp<int64_t>(start, 0, d);
      end = std::clamp<int64_t>(end, 0, d);
      s.count = end > start ? (end - start + s.step - 1) / s.step : 0;
    } else {
      start = std::clamp<int64_t>(start, 0, d - 1);
      end = std::clamp<int64_t>(end, -1, d - 1);
      s.count = start > end ? (start - end + (-s.step) - 1) / (-s.step) : 0;
    }
    s.start = start;
    out.push_back(s);
  }
  return out;
}

}  // namespace treeprune::detail

#endif  // TREEPRUNE_SRC_OP_UTILS_HPP_
