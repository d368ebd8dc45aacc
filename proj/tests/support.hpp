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

// Independent oracles and hand-written goldens shared by the unit tests and
// the acceptance binary. Nothing here calls into the library's scoring,
// norm or interpreter code; the oracles work on raw initializer buffers.

#ifndef TREEPRUNE_TESTS_SUPPORT_HPP_
#define TREEPRUNE_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeprune/assoc_tree.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model.hpp"

namespace treeprune::testing {

// ---------------------------------------------------------------------------
// Trees as sorted "root/child/grandchild=Tag" paths. One entry per tree
// node, so node duplication, tags and parent/child edges are all compared.

inline std::vector<std::string> tree_paths(const NodeGraph& g, const AssocTree& t) {
  std::vector<std::string> path(t.nodes.size());
  std::vector<std::string> out;
  for (size_t i = 0; i < t.nodes.size(); ++i) {
    const TreeNode& n = t.nodes[i];
    const std::string& name = g.nodes[n.node].name;
    path[i] = n.parent < 0 ? name : path[n.parent] + "/" + name;
    out.push_back(path[i] + "=" + std::string(to_string(n.tag)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct GoldenTree {
  std::string root;
  std::vector<std::string> paths;  // sorted
};

struct GoldenGraph {
  std::string fixture;
  std::vector<GoldenTree> trees;
};

// Derived by hand from the fixture topologies in fixtures.hpp.
inline std::vector<GoldenGraph> golden_trees() {
  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  return {
      {"one_to_one",
       {{"conv_n", sorted({"conv_n=Pruned", "conv_n/relu=NextNoProcess",
                           "conv_n/relu/conv_n1=StopProcess"})},
        {"conv_n1", {"conv_n1=Pruned"}}}},
      {"one_to_many",
       {{"conv_n", sorted({"conv_n=Pruned", "conv_n/relu=NextNoProcess",
                           "conv_n/relu/conv_n1=StopProcess", "conv_n/relu/conv_n2=StopProcess"})},
        {"conv_n1", {"conv_n1=Pruned"}},
        {"conv_n2", {"conv_n2=Pruned"}}}},
      {"many_to_one",
       {{"conv_nm1", sorted({"conv_nm1=Pruned", "conv_nm1/add=NextProcess",
                             "conv_nm1/add/relu=NextNoProcess",
                             "conv_nm1/add/relu/conv_n1=StopProcess"})},
        {"conv_n", sorted({"conv_n=Pruned", "conv_n/add=NextProcess", "conv_n/add/relu=NextNoProcess",
                           "conv_n/add/relu/conv_n1=StopProcess"})},
        {"conv_n1", {"conv_n1=Pruned"}}}},
      {"many_to_many",
       {{"conv_nm1", sorted({"conv_nm1=Pruned", "conv_nm1/add=NextProcess",
                             "conv_nm1/add/relu=NextNoProcess",
                             "conv_nm1/add/relu/conv_n1=StopProcess",
                             "conv_nm1/add/relu/conv_n2=StopProcess"})},
        {"conv_n", sorted({"conv_n=Pruned", "conv_n/add=NextProcess", "conv_n/add/relu=NextNoProcess",
                           "conv_n/add/relu/conv_n1=StopProcess",
                           "conv_n/add/relu/conv_n2=StopProcess"})},
        {"conv_n1", {"conv_n1=Pruned"}},
        {"conv_n2", {"conv_n2=Pruned"}}}},
      {"fire_module",
       {{"squeeze", sorted({"squeeze=Pruned", "squeeze/squeeze_relu=NextNoProcess",
                            "squeeze/squeeze_relu/expand1x1=StopProcess",
                            "squeeze/squeeze_relu/expand3x3=StopProcess"})},
        {"expand1x1", sorted({"expand1x1=Pruned", "expand1x1/expand1x1_relu=NextNoProcess",
                              "expand1x1/expand1x1_relu/concat=NextProcess",
                              "expand1x1/expand1x1_relu/concat/classifier=StopProcess"})},
        {"expand3x3", sorted({"expand3x3=Pruned", "expand3x3/expand3x3_relu=NextNoProcess",
                              "expand3x3/expand3x3_relu/concat=NextProcess",
                              "expand3x3/expand3x3_relu/concat/classifier=StopProcess"})},
        {"classifier", sorted({"classifier=Pruned", "classifier/gap=NextNoProcess",
                               "classifier/gap/flatten=NextNoProcess"})}}},
  };
}

// ---------------------------------------------------------------------------
// Literal score formula for the four producer/consumer configurations and the
// fire module, written directly against OIHW buffers:
//
//   score(i) = (sum_p |W_p[i, :, :, :]|) * (sum_l sum_k |W_l[k, c_l(i), :, :]|)
//
// with c_l(i) the input channel of leaf l fed by group channel i.

struct LiteralLeaf {
  std::string weight;
  int64_t offset = 0;  // c_l(i) = offset + i
};

struct LiteralGroup {
  std::vector<std::string> producers;  // weight initializer names
  std::vector<LiteralLeaf> leaves;
};

inline const Tensor& weight_of(const ModelArchive& m, const std::string& name) {
  const Tensor* t = m.graph.find_initializer(name);
  if (t == nullptr) throw std::runtime_error("missing initializer " + name);
  return *t;
}

// |W[o, c, :, :]| for an OIHW (or OI) buffer; c < 0 means every input channel.
inline double literal_norm(const Tensor& w, int64_t o, int64_t c, bool l2) {
  const int64_t cin = w.dims[1];
  int64_t hw = 1;
  for (size_t d = 2; d < w.dims.size(); ++d) hw *= w.dims[d];
  double acc = 0.0;
  for (int64_t ci = 0; ci < cin; ++ci) {
    if (c >= 0 && ci != c) continue;
    for (int64_t s = 0; s < hw; ++s) {
      const double v = w.float_data[static_cast<size_t>((o * cin + ci) * hw + s)];
      acc += l2 ? v * v : std::fabs(v);
    }
  }
  return l2 ? std::sqrt(acc) : acc;
}

inline std::vector<double> literal_scores(const ModelArchive& m, const LiteralGroup& g,
                                          int64_t channels, bool l2) {
  std::vector<double> out(static_cast<size_t>(channels));
  for (int64_t i = 0; i < channels; ++i) {
    double p = 0.0;
    for (const auto& name : g.producers) p += literal_norm(weight_of(m, name), i, -1, l2);
    double l = 0.0;
    for (const auto& leaf : g.leaves) {
      const Tensor& w = weight_of(m, leaf.weight);
      for (int64_t k = 0; k < w.dims[0]; ++k) l += literal_norm(w, k, leaf.offset + i, l2);
    }
    out[static_cast<size_t>(i)] = p * l;
  }
  return out;
}

struct LiteralCase {
  std::string fixture;
  std::string first_member;  // identifies the group in the analysis
  int64_t channels = 0;
  LiteralGroup group;
};

inline std::vector<LiteralCase> literal_cases() {
  return {
      {"one_to_one", "conv_n", 16, {{"conv_n.weight"}, {{"conv_n1.weight", 0}}}},
      {"one_to_many", "conv_n", 16,
       {{"conv_n.weight"}, {{"conv_n1.weight", 0}, {"conv_n2.weight", 0}}}},
      {"many_to_one", "conv_nm1", 16, {{"conv_nm1.weight", "conv_n.weight"}, {{"conv_n1.weight", 0}}}},
      {"many_to_many", "conv_nm1", 16,
       {{"conv_nm1.weight", "conv_n.weight"}, {{"conv_n1.weight", 0}, {"conv_n2.weight", 0}}}},
      {"fire_module", "squeeze", 8,
       {{"squeeze.weight"}, {{"expand1x1.weight", 0}, {"expand3x3.weight", 0}}}},
      {"fire_module", "expand1x1", 16, {{"expand1x1.weight"}, {{"classifier.weight", 0}}}},
      {"fire_module", "expand3x3", 16, {{"expand3x3.weight"}, {{"classifier.weight", 16}}}},
  };
}

// ---------------------------------------------------------------------------
// Direct NCHW convolution, batch 1, group 1, double accumulation.

inline std::vector<double> direct_conv(const std::vector<double>& x, int64_t cin, int64_t h,
                                       int64_t w, const Tensor& weight, const Tensor* bias,
                                       int64_t stride, int64_t pad, int64_t* oh_out,
                                       int64_t* ow_out) {
  const int64_t cout = weight.dims[0];
  const int64_t kh = weight.dims[2];
  const int64_t kw = weight.dims[3];
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> y(static_cast<size_t>(cout * oh * ow));
  for (int64_t o = 0; o < cout; ++o) {
    for (int64_t r = 0; r < oh; ++r) {
      for (int64_t c = 0; c < ow; ++c) {
        double acc = bias != nullptr ? bias->float_data[static_cast<size_t>(o)] : 0.0;
        for (int64_t i = 0; i < cin; ++i) {
          for (int64_t a = 0; a < kh; ++a) {
            for (int64_t b = 0; b < kw; ++b) {
              const int64_t yy = r * stride - pad + a;
              const int64_t xx = c * stride - pad + b;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += x[static_cast<size_t>((i * h + yy) * w + xx)] *
                     weight.float_data[static_cast<size_t>(((o * cin + i) * kh + a) * kw + b)];
            }
          }
        }
        y[static_cast<size_t>((o * oh + r) * ow + c)] = acc;
      }
    }
  }
  *oh_out = oh;
  *ow_out = ow;
  return y;
}

inline void relu_in_place(std::vector<double>& v) {
  for (auto& e : v) e = std::max(e, 0.0);
}

// ---------------------------------------------------------------------------
// Small hand-built graphs.

inline ValueInfo float_info(const std::string& name, const std::vector<int64_t>& dims) {
  ValueInfo vi;
  vi.name = name;
  std::vector<Dimension> shape;
  for (int64_t d : dims) {
    Dimension dim;
    dim.value = d;
    shape.push_back(dim);
  }
  vi.shape = shape;
  return vi;
}

inline NodeDef make_node(const std::string& op, const std::string& name,
                         std::vector<std::string> inputs, std::vector<std::string> outputs) {
  NodeDef n;
  n.op_type = op;
  n.name = name;
  n.inputs = std::move(inputs);
  n.outputs = std::move(outputs);
  return n;
}

inline ModelArchive empty_model(const std::string& name = "test") {
  ModelArchive m;
  m.opset_imports.push_back({"", 13});
  m.graph.name = name;
  return m;
}

// Deterministic filler: value k of tensor `salt` is a fixed pseudo-random
// number in [-1, 1).
inline std::vector<float> filler(size_t n, uint32_t salt) {
  std::vector<float> v(n);
  uint32_t x = 2463534242u ^ (salt * 2654435761u);
  for (auto& e : v) {
    x ^= x << 13;
    x ^= x >> 17;
    x ^= x << 5;
    e = static_cast<float>(x % 20000) / 10000.0f - 1.0f;
  }
  return v;
}

inline Tensor filled(const std::string& name, std::vector<int64_t> dims, uint32_t salt) {
  size_t n = 1;
  for (int64_t d : dims) n *= static_cast<size_t>(d);
  return make_float_tensor(name, std::move(dims), filler(n, salt));
}

// Conv node with a filled OIHW weight and bias; "same" padding, stride 1.
inline void add_conv(ModelArchive& m, const std::string& name, const std::string& x,
                     const std::string& y, int64_t cin, int64_t cout, int64_t k, uint32_t salt) {
  m.graph.initializers.push_back(filled(name + ".w", {cout, cin, k, k}, salt));
  m.graph.initializers.push_back(filled(name + ".b", {cout}, salt + 1000));
  NodeDef n = make_node("Conv", name, {x, name + ".w", name + ".b"}, {y});
  n.set_attribute("kernel_shape", std::vector<int64_t>{k, k});
  n.set_attribute("pads", std::vector<int64_t>{k / 2, k / 2, k / 2, k / 2});
  m.graph.nodes.push_back(std::move(n));
}

}  // namespace treeprune::testing

#endif  // TREEPRUNE_TESTS_SUPPORT_HPP_
