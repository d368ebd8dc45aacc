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

#include "treeprune/fixtures.hpp"

#include <cmath>

#include "rng.hpp"
#include "treeprune/errors.hpp"

namespace treeprune {
namespace {

constexpr double kOutScaleSigma = 0.35;
constexpr double kInScaleSigma = 0.25;

class Builder {
 public:
  Builder(std::string graph_name, uint64_t seed) : rng_(seed) {
    model_.ir_version = 8;
    model_.producer_name = "treeprune";
    model_.producer_version = "1.0";
    model_.opset_imports.push_back({"", 13});
    model_.graph.name = std::move(graph_name);
  }

  std::string input(const std::string& name, std::vector<int64_t> dims) {
    model_.graph.inputs.push_back(value_info(name, dims));
    return name;
  }

  void output(const std::string& name, std::vector<int64_t> dims) {
    model_.graph.outputs.push_back(value_info(name, dims));
  }

  std::string conv(const std::string& name, const std::string& x, int64_t cin,
                   int64_t cout, int64_t k, int64_t stride = 1, int64_t pad = -1) {
    if (pad < 0) pad = k / 2;
    const std::string w = name + ".weight";
    const std::string b = name + ".bias";
    add_weight(w, {cout, cin, k, k}, cout, cin, k * k);
    add_bias(b, cout);
    NodeDef n = node("Conv", name, {x, w, b});
    n.set_attribute("kernel_shape", std::vector<int64_t>{k, k});
    n.set_attribute("pads", std::vector<int64_t>{pad, pad, pad, pad});
    n.set_attribute("strides", std::vector<int64_t>{stride, stride});
    return push(std::move(n));
  }

  // PyTorch-style Linear export: Gemm with transB=1 and weight [out, in].
  std::string gemm(const std::string& name, const std::string& x, int64_t in,
                   int64_t out) {
    const std::string w = name + ".weight";
    const std::string b = name + ".bias";
    add_weight(w, {out, in}, out, in, 1);
    add_bias(b, out);
    NodeDef n = node("Gemm", name, {x, w, b});
    n.set_attribute("alpha", 1.0f);
    n.set_attribute("beta", 1.0f);
    n.set_attribute("transB", int64_t{1});
    return push(std::move(n));
  }

  std::string batchnorm(const std::string& name, const std::string& x, int64_t c) {
    std::vector<float> scale(c), bias(c), mean(c), var(c);
    for (int64_t i = 0; i < c; ++i) {
      scale[i] = static_cast<float>(rng_.uniform(0.5, 1.5));
      bias[i] = static_cast<float>(rng_.uniform(-0.1, 0.1));
      mean[i] = static_cast<float>(rng_.uniform(-0.1, 0.1));
      var[i] = static_cast<float>(rng_.uniform(0.5, 1.5));
    }
    auto add = [&](const std::string& suffix, std::vector<float> v) {
      model_.graph.initializers.push_back(
          make_float_tensor(name + "." + suffix, {c}, std::move(v)));
      return name + "." + suffix;
    };
    std::vector<std::string> ins{x, add("scale", std::move(scale)),
                                 add("bias", std::move(bias)),
                                 add("mean", std::move(mean)),
                                 add("var", std::move(var))};
    NodeDef n = node("BatchNormalization", name, std::move(ins));
    n.set_attribute("epsilon", 1e-5f);
    return push(std::move(n));
  }

  std::string unary(const std::string& op, const std::string& name, const std::string& x) {
    return push(node(op, name, {x}));
  }

  std::string add(const std::string& name, const std::string& a, const std::string& b) {
    return push(node("Add", name, {a, b}));
  }

  std::string maxpool(const std::string& name, const std::string& x, int64_t k = 2) {
    NodeDef n = node("MaxPool", name, {x});
    n.set_attribute("kernel_shape", std::vector<int64_t>{k, k});
    n.set_attribute("strides", std::vector<int64_t>{k, k});
    return push(std::move(n));
  }

  std::string flatten(const std::string& name, const std::string& x) {
    NodeDef n = node("Flatten", name, {x});
    n.set_attribute("axis", int64_t{1});
    return push(std::move(n));
  }

  std::string concat(const std::string& name, std::vector<std::string> xs) {
    NodeDef n = node("Concat", name, std::move(xs));
    n.set_attribute("axis", int64_t{1});
    return push(std::move(n));
  }

  // Renames the most recent node's output so it can serve as a graph output.
  std::string rename_last_output(const std::string& new_name) {
    model_.graph.nodes.back().outputs[0] = new_name;
    return new_name;
  }

  ModelArchive take() { return std::move(model_); }

 private:
  static ValueInfo value_info(const std::string& name, const std::vector<int64_t>& dims) {
    ValueInfo vi;
    vi.name = name;
    vi.elem_type = DataType::kFloat;
    std::vector<Dimension> shape;
    for (size_t i = 0; i < dims.size(); ++i) {
      Dimension d;
      if (i == 0) d.param = "N";
      else d.value = dims[i];
      shape.push_back(std::move(d));
    }
    vi.shape = std::move(shape);
    return vi;
  }

  static NodeDef node(std::string op, const std::string& name, std::vector<std::string> ins) {
    NodeDef n;
    n.op_type = std::move(op);
    n.name = name;
    n.inputs = std::move(ins);
    n.outputs = {name + "_out"};
    return n;
  }

  std::string push(NodeDef n) {
    std::string out = n.outputs[0];
    model_.graph.nodes.push_back(std::move(n));
    return out;
  }

  // Log-normal factors normalized to unit RMS so activations stay O(1).
  std::vector<double> spread(int64_t n, double sigma) {
    std::vector<double> s(n);
    double sq = 0.0;
    for (auto& v : s) {
      v = std::exp(sigma * rng_.normal());
      sq += v * v;
    }
    const double rms = std::sqrt(sq / static_cast<double>(n));
    for (auto& v : s) v /= rms;
    return s;
  }

  void add_weight(const std::string& name, std::vector<int64_t> dims, int64_t cout,
                  int64_t cin, int64_t inner) {
    const double bound = std::sqrt(6.0 / static_cast<double>(cin * inner));
    const auto out_scale = spread(cout, kOutScaleSigma);
    const auto in_scale = spread(cin, kInScaleSigma);
    std::vector<float> data(static_cast<size_t>(cout * cin * inner));
    size_t idx = 0;
    for (int64_t o = 0; o < cout; ++o) {
      for (int64_t i = 0; i < cin; ++i) {
        for (int64_t k = 0; k < inner; ++k) {
          data[idx++] = static_cast<float>(rng_.uniform(-bound, bound) * out_scale[o] *
                                           in_scale[i]);
        }
      }
    }
    model_.graph.initializers.push_back(
        make_float_tensor(name, std::move(dims), std::move(data)));
  }

  void add_bias(const std::string& name, int64_t n) {
    std::vector<float> data(n);
    for (auto& v : data) v = static_cast<float>(rng_.uniform(-0.1, 0.1));
    model_.graph.initializers.push_back(make_float_tensor(name, {n}, std::move(data)));
  }

  detail::Rng rng_;
  ModelArchive model_;
};

ModelArchive conv_chain(const FixtureSpec& spec) {
  if (spec.depth < 1) throw UnknownTemplate("conv_chain needs depth >= 1");
  Builder b("conv_chain", spec.seed);
  std::string x = b.input("input", {1, 3, 32, 32});
  int64_t cin = 3;
  for (int i = 1; i <= spec.depth; ++i) {
    const int64_t cout = i == 1 ? 64 : 32;
    if (i > 1) x = b.unary("Relu", "relu" + std::to_string(i - 1), x);
    x = b.conv("conv" + std::to_string(i), x, cin, cout, 3);
    cin = cout;
  }
  b.output(b.rename_last_output("output"), {1, cin, 32, 32});
  return b.take();
}

ModelArchive fire_module(const FixtureSpec& spec) {
  Builder b("fire_module", spec.seed);
  std::string x = b.input("input", {1, 16, 16, 16});
  x = b.conv("squeeze", x, 16, 8, 1);
  x = b.unary("Relu", "squeeze_relu", x);
  std::string e1 = b.conv("expand1x1", x, 8, 16, 1);
  e1 = b.unary("Relu", "expand1x1_relu", e1);
  std::string e3 = b.conv("expand3x3", x, 8, 16, 3);
  e3 = b.unary("Relu", "expand3x3_relu", e3);
  std::string y = b.concat("concat", {e1, e3});
  y = b.conv("classifier", y, 32, 10, 1);
  y = b.unary("GlobalAveragePool", "gap", y);
  y = b.flatten("flatten", y);
  b.output(b.rename_last_output("output"), {1, 10});
  return b.take();
}

ModelArchive residual_block(const FixtureSpec& spec) {
  Builder b("residual_block", spec.seed);
  std::string x = b.input("input", {1, 8, 16, 16});
  std::string main = b.conv("conv1", x, 8, 16, 3);
  main = b.batchnorm("bn1", main, 16);
  std::string skip = b.conv("conv_skip", x, 8, 16, 1);
  std::string y = b.add("add", main, skip);
  y = b.unary("Relu", "relu", y);
  y = b.conv("conv_out", y, 16, 8, 3);
  b.output(b.rename_last_output("output"), {1, 8, 16, 16});
  return b.take();
}

ModelArchive resnet_stage(const FixtureSpec& spec) {
  Builder b("resnet_stage", spec.seed);
  std::string x = b.input("input", {1, 3, 16, 16});
  x = b.conv("conv0", x, 3, 16, 3);
  x = b.batchnorm("bn0", x, 16);
  x = b.unary("Relu", "relu0", x);
  int idx = 1;
  for (int block = 1; block <= 2; ++block) {
    const std::string s = std::to_string(block);
    std::string y = b.conv("conv" + std::to_string(idx), x, 16, 16, 3);
    y = b.batchnorm("bn" + std::to_string(idx), y, 16);
    y = b.unary("Relu", "block" + s + "_relu_mid", y);
    ++idx;
    y = b.conv("conv" + std::to_string(idx), y, 16, 16, 3);
    y = b.batchnorm("bn" + std::to_string(idx), y, 16);
    ++idx;
    y = b.add("block" + s + "_add", y, x);
    x = b.unary("Relu", "block" + s + "_relu_out", y);
  }
  x = b.unary("GlobalAveragePool", "gap", x);
  x = b.flatten("flatten", x);
  x = b.gemm("fc", x, 16, 10);
  b.output(b.rename_last_output("output"), {1, 10});
  return b.take();
}

// The four producer/consumer configurations. Producers are conv_nm1 and
// conv_n, consumers conv_n1 and conv_n2.
ModelArchive basic_structure(const std::string& name, bool two_producers,
                             bool two_consumers, uint64_t seed) {
  Builder b(name, seed);
  std::string x = b.input("input", {1, 8, 8, 8});
  std::string y;
  if (two_producers) {
    std::string p1 = b.conv("conv_nm1", x, 8, 16, 3);
    std::string p2 = b.conv("conv_n", x, 8, 16, 3);
    y = b.add("add", p1, p2);
  } else {
    y = b.conv("conv_n", x, 8, 16, 3);
  }
  y = b.unary("Relu", "relu", y);
  b.conv("conv_n1", y, 16, 12, 3);
  b.output(b.rename_last_output("output1"), {1, 12, 8, 8});
  if (two_consumers) {
    b.conv("conv_n2", y, 16, 10, 1);
    b.output(b.rename_last_output("output2"), {1, 10, 8, 8});
  }
  return b.take();
}

ModelArchive vgg16_cifar(const FixtureSpec& spec) {
  Builder b("vgg16_cifar", spec.seed);
  std::string x = b.input("input", {1, 3, 32, 32});
  const int64_t M = 0;
  const std::vector<int64_t> cfg{64, 64, M, 128, 128, M, 256, 256, 256, M,
                                 512, 512, 512, M, 512, 512, 512, M};
  int64_t cin = 3;
  int conv_idx = 0;
  int pool_idx = 0;
  for (int64_t c : cfg) {
    if (c == M) {
      x = b.maxpool("pool" + std::to_string(++pool_idx), x);
      continue;
    }
    ++conv_idx;
    x = b.conv("conv" + std::to_string(conv_idx), x, cin, c, 3);
    x = b.unary("Relu", "relu" + std::to_string(conv_idx), x);
    cin = c;
  }
  x = b.flatten("flatten", x);
  x = b.gemm("fc1", x, 512, 256);
  x = b.unary("Relu", "fc1_relu", x);
  b.gemm("fc2", x, 256, 10);
  b.output(b.rename_last_output("output"), {1, 10});
  return b.take();
}

ModelArchive alexnet_cifar(const FixtureSpec& spec) {
  Builder b("alexnet_cifar", spec.seed);
  std::string x = b.input("input", {1, 3, 32, 32});
  x = b.conv("conv1", x, 3, 64, 3, 2, 1);
  x = b.unary("Relu", "relu1", x);
  x = b.maxpool("pool1", x);
  x = b.conv("conv2", x, 64, 192, 3);
  x = b.unary("Relu", "relu2", x);
  x = b.maxpool("pool2", x);
  x = b.conv("conv3", x, 192, 384, 3);
  x = b.unary("Relu", "relu3", x);
  x = b.conv("conv4", x, 384, 256, 3);
  x = b.unary("Relu", "relu4", x);
  x = b.conv("conv5", x, 256, 256, 3);
  x = b.unary("Relu", "relu5", x);
  x = b.maxpool("pool3", x);
  x = b.flatten("flatten", x);
  x = b.gemm("fc1", x, 256 * 2 * 2, 4096);
  x = b.unary("Relu", "fc1_relu", x);
  x = b.gemm("fc2", x, 4096, 4096);
  x = b.unary("Relu", "fc2_relu", x);
  b.gemm("fc3", x, 4096, 10);
  b.output(b.rename_last_output("output"), {1, 10});
  return b.take();
}

}  // namespace

const std::vector<std::string>& fixture_templates() {
  static const std::vector<std::string> names{
      "conv_chain",  "fire_module", "residual_block", "resnet_stage",
      "one_to_one",  "one_to_many", "many_to_one",    "many_to_many",
      "vgg16_cifar", "alexnet_cifar"};
  return names;
}

ModelArchive synthesize_model(const FixtureSpec& spec) {
  const std::string& n = spec.name;
  if (n == "conv_chain") return conv_chain(spec);
  if (n == "fire_module") return fire_module(spec);
  if (n == "residual_block") return residual_block(spec);
  if (n == "resnet_stage") return resnet_stage(spec);
  if (n == "one_to_one") return basic_structure(n, false, false, spec.seed);
  if (n == "one_to_many") return basic_structure(n, false, true, spec.seed);
  if (n == "many_to_one") return basic_structure(n, true, false, spec.seed);
  if (n == "many_to_many") return basic_structure(n, true, true, spec.seed);
  if (n == "vgg16_cifar") return vgg16_cifar(spec);
  if (n == "alexnet_cifar") return alexnet_cifar(spec);
  throw UnknownTemplate("no fixture template named '" + n + "'");
}

}  // namespace treeprune
