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

#include "treeprune/interp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "op_utils.hpp"
#include "rng.hpp"
#include "treeprune/errors.hpp"
#include "treeprune/graph.hpp"

namespace treeprune {

int64_t TensorValue::elements() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

namespace {

using Dims = std::vector<int64_t>;

const std::set<std::string>& ops() {
  static const std::set<std::string> s{
      "Conv", "ConvTranspose", "Relu", "Sigmoid", "Tanh", "Softmax", "MaxPool",
      "AveragePool", "GlobalAveragePool", "Flatten", "Reshape", "Transpose", "Add", "Sub",
      "Mul", "Div", "Concat", "BatchNormalization", "Gemm", "MatMul", "Pad", "Erf",
      "Sqrt", "Pow", "ReduceMean", "ReduceMax", "Unsqueeze", "Slice", "Cast", "Gather"};
  return s;
}

int64_t product(const Dims& d, size_t begin, size_t end) {
  int64_t p = 1;
  for (size_t i = begin; i < end; ++i) p *= d[i];
  return p;
}

[[noreturn]] void mismatch(const NodeDef& n, const std::string& why) {
  throw ShapeMismatch(n.display_name() + ": " + why);
}

TensorValue make(Dims dims) {
  TensorValue t;
  t.dims = std::move(dims);
  t.data.assign(static_cast<size_t>(t.elements()), 0.0f);
  return t;
}

Dims strides_of(const Dims& d) {
  Dims s(d.size(), 1);
  for (int i = static_cast<int>(d.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * d[i + 1];
  return s;
}

// Window geometry over the last two axes. A rank-3 tensor is treated as
// having height 1.
struct Window {
  int64_t kh = 1, kw = 1, sh = 1, sw = 1, dh = 1, dw = 1;
  int64_t pt = 0, pl = 0, pb = 0, pr = 0;
  int64_t ih = 1, iw = 1, oh = 1, ow = 1;
};

int64_t window_extent(int64_t in, int64_t k, int64_t s, int64_t d, int64_t pads, bool ceil_mode) {
  const int64_t span = d * (k - 1) + 1;
  const int64_t num = in + pads - span;
  if (num < 0) return 0;
  return (ceil_mode ? (num + s - 1) / s : num / s) + 1;
}

Window window(const NodeDef& n, const Dims& x, const Dims& kernel, bool ceil_mode) {
  const size_t spatial = x.size() - 2;
  if (spatial < 1 || spatial > 2 || kernel.size() != spatial) {
    mismatch(n, "only 1-D and 2-D windows are supported");
  }
  const auto strides = n.attr_ints("strides", Dims(spatial, 1));
  const auto dil = n.attr_ints("dilations", Dims(spatial, 1));
  auto pads = n.attr_ints("pads", Dims(2 * spatial, 0));
  const std::string auto_pad = n.attr_string("auto_pad", "NOTSET");
  Window w;
  auto at = [&](const Dims& v, size_t i, int64_t fallback) {
    return spatial == 2 ? v[i] : (i == 0 ? fallback : v[0]);
  };
  w.kh = at(kernel, 0, 1);
  w.kw = at(kernel, 1, 1);
  w.sh = at(strides, 0, 1);
  w.sw = at(strides, 1, 1);
  w.dh = at(dil, 0, 1);
  w.dw = at(dil, 1, 1);
  w.ih = spatial == 2 ? x[2] : 1;
  w.iw = x.back();
  if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
    auto same = [&](int64_t in, int64_t k, int64_t s, int64_t d, int64_t& lo, int64_t& hi,
                    int64_t& out) {
      out = (in + s - 1) / s;
      const int64_t total = std::max<int64_t>(0, (out - 1) * s + d * (k - 1) + 1 - in);
      lo = auto_pad == "SAME_UPPER" ? total / 2 : total - total / 2;
      hi = total - lo;
    };
    same(w.ih, w.kh, w.sh, w.dh, w.pt, w.pb, w.oh);
    same(w.iw, w.kw, w.sw, w.dw, w.pl, w.pr, w.ow);
    return w;
  }
  if (auto_pad == "VALID") pads.assign(2 * spatial, 0);
  if (spatial == 2) {
    w.pt = pads[0];
    w.pl = pads[1];
    w.pb = pads[2];
    w.pr = pads[3];
  } else {
    w.pl = pads[0];
    w.pr = pads[1];
  }
  w.oh = window_extent(w.ih, w.kh, w.sh, w.dh, w.pt + w.pb, ceil_mode);
  w.ow = window_extent(w.iw, w.kw, w.sw, w.dw, w.pl + w.pr, ceil_mode);
  return w;
}

Dims window_dims(const Dims& x, int64_t channels, const Window& w) {
  Dims out{x[0], channels};
  if (x.size() == 4) out.push_back(w.oh);
  out.push_back(w.ow);
  return out;
}

// Output columns [lo, hi) whose input column ow*s - p + k*d lies in [0, in).
void column_range(int64_t in, int64_t out, int64_t s, int64_t p, int64_t offset, int64_t& lo,
                  int64_t& hi) {
  const int64_t shift = offset - p;  // input = ow * s + shift
  lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  hi = in - 1 - shift < 0 ? 0 : (in - 1 - shift) / s + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
}

class Interpreter {
 public:
  Interpreter(const ModelArchive& model) : model_(model), def_(model.graph) {}

  TensorMap execute(const TensorMap& inputs) {
    const NodeGraph graph = build_graph(model_);
    for (const auto& t : def_.initializers) {
      TensorValue v;
      v.dims = t.dims;
      if (t.dtype == DataType::kFloat) {
        v.data = t.float_data;
      } else if (is_integer_type(t.dtype)) {
        v.data.assign(t.int_data.begin(), t.int_data.end());
      } else {
        continue;
      }
      env_[t.name] = std::move(v);
    }
    for (const auto& vi : def_.inputs) {
      if (def_.is_initializer(vi.name)) continue;
      auto it = inputs.find(vi.name);
      if (it == inputs.end()) throw ShapeMismatch("missing value for graph input '" + vi.name + "'");
      if (static_cast<int64_t>(it->second.data.size()) != it->second.elements()) {
        throw ShapeMismatch("input '" + vi.name + "' data does not match its dims");
      }
      env_[vi.name] = it->second;
    }
    for (int idx : graph.topo_order) eval(graph.nodes[idx]);
    for (const auto& t : def_.initializers) env_.erase(t.name);
    return std::move(env_);
  }

 private:
  const TensorValue& in(const NodeDef& n, size_t i) const {
    if (i >= n.inputs.size() || n.inputs[i].empty()) mismatch(n, "missing input " + std::to_string(i));
    auto it = env_.find(n.inputs[i]);
    if (it == env_.end()) mismatch(n, "input '" + n.inputs[i] + "' is undefined");
    return it->second;
  }

  bool has(const NodeDef& n, size_t i) const {
    return i < n.inputs.size() && !n.inputs[i].empty();
  }

  std::vector<int64_t> ints(const NodeDef& n, size_t i) const {
    if (auto c = detail::constant_ints(def_, n.inputs[i])) return *c;
    const TensorValue& v = in(n, i);
    std::vector<int64_t> out;
    for (float f : v.data) out.push_back(static_cast<int64_t>(std::llround(f)));
    return out;
  }

  void set(const NodeDef& n, TensorValue v, size_t slot = 0) {
    if (slot < n.outputs.size() && !n.outputs[slot].empty()) env_[n.outputs[slot]] = std::move(v);
  }

  void eval(const NodeDef& n) {
    const std::string& op = n.op_type;
    if (!ops().count(op)) {
      throw UnsupportedOp("'" + n.display_name() + "': operator " + op + " is not interpreted");
    }
    if (op == "Conv") return set(n, conv(n));
    if (op == "ConvTranspose") return set(n, conv_transpose(n));
    if (op == "Gemm") return set(n, gemm(n));
    if (op == "MatMul") return set(n, matmul(n));
    if (op == "MaxPool" || op == "AveragePool") return set(n, pool(n));
    if (op == "GlobalAveragePool") return set(n, global_average(n));
    if (op == "BatchNormalization") return set(n, batchnorm(n));
    if (op == "Relu") return set(n, unary(n, [](double v) { return v > 0.0 ? v : 0.0; }));
    if (op == "Sigmoid") return set(n, unary(n, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }));
    if (op == "Tanh") return set(n, unary(n, [](double v) { return std::tanh(v); }));
    if (op == "Erf") return set(n, unary(n, [](double v) { return std::erf(v); }));
    if (op == "Sqrt") return set(n, unary(n, [](double v) { return std::sqrt(v); }));
    if (op == "Cast") return set(n, cast(n));
    if (op == "Softmax") return set(n, softmax(n));
    if (op == "Add") return set(n, binary(n, [](double a, double b) { return a + b; }));
    if (op == "Sub") return set(n, binary(n, [](double a, double b) { return a - b; }));
    if (op == "Mul") return set(n, binary(n, [](double a, double b) { return a * b; }));
    if (op == "Div") return set(n, binary(n, [](double a, double b) { return a / b; }));
    if (op == "Pow") return set(n, binary(n, [](double a, double b) { return std::pow(a, b); }));
    if (op == "Flatten") return set(n, flatten(n));
    if (op == "Reshape") return set(n, reshape(n));
    if (op == "Transpose") return set(n, transpose(n));
    if (op == "Unsqueeze") return set(n, unsqueeze(n));
    if (op == "Concat") return set(n, concat(n));
    if (op == "Gather") return set(n, gather(n));
    if (op == "Slice") return set(n, slice(n));
    if (op == "Pad") return set(n, pad(n));
    if (op == "ReduceMean" || op == "ReduceMax") return set(n, reduce(n));
  }

  TensorValue conv(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const TensorValue& w = in(n, 1);
    if (x.dims.size() != w.dims.size() || x.dims.size() < 3) mismatch(n, "rank mismatch");
    const int64_t group = n.attr_int("group", 1);
    const int64_t co = w.dims[0];
    const int64_t cig = w.dims[1];
    if (x.dims[1] != cig * group || co % group != 0) mismatch(n, "channel mismatch");
    const Dims kernel = n.attr_ints("kernel_shape", Dims(w.dims.begin() + 2, w.dims.end()));
    const Window g = window(n, x.dims, kernel, false);
    const TensorValue* b = has(n, 2) ? &in(n, 2) : nullptr;
    if (b != nullptr && b->elements() != co) mismatch(n, "bias length mismatch");
    TensorValue y = make(window_dims(x.dims, co, g));
    const int64_t batch = x.dims[0];
    const int64_t cog = co / group;
    const int64_t in_plane = g.ih * g.iw;
    const int64_t out_plane = g.oh * g.ow;
    std::vector<double> acc(out_plane);
    for (int64_t nb = 0; nb < batch; ++nb) {
      for (int64_t oc = 0; oc < co; ++oc) {
        const int64_t grp = oc / cog;
        std::fill(acc.begin(), acc.end(), b != nullptr ? static_cast<double>(b->data[oc]) : 0.0);
        for (int64_t icg = 0; icg < cig; ++icg) {
          const int64_t ic = grp * cig + icg;
          const float* xp = x.data.data() + (nb * x.dims[1] + ic) * in_plane;
          const float* wp = w.data.data() + (oc * cig + icg) * g.kh * g.kw;
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            int64_t oh_lo, oh_hi;
            column_range(g.ih, g.oh, g.sh, g.pt, kh * g.dh, oh_lo, oh_hi);
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const double wv = wp[kh * g.kw + kw];
              int64_t ow_lo, ow_hi;
              column_range(g.iw, g.ow, g.sw, g.pl, kw * g.dw, ow_lo, ow_hi);
              for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                const float* row = xp + (oh * g.sh - g.pt + kh * g.dh) * g.iw - g.pl + kw * g.dw;
                double* out = acc.data() + oh * g.ow;
                if (g.sw == 1) {
                  for (int64_t ow = ow_lo; ow < ow_hi; ++ow) out[ow] += wv * row[ow];
                } else {
                  for (int64_t ow = ow_lo; ow < ow_hi; ++ow) out[ow] += wv * row[ow * g.sw];
                }
              }
            }
          }
        }
        float* yp = y.data.data() + (nb * co + oc) * out_plane;
        for (int64_t e = 0; e < out_plane; ++e) yp[e] = static_cast<float>(acc[e]);
      }
    }
    return y;
  }

  TensorValue conv_transpose(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const TensorValue& w = in(n, 1);
    if (x.dims.size() != 4 || w.dims.size() != 4) mismatch(n, "only 2-D ConvTranspose is supported");
    const int64_t group = n.attr_int("group", 1);
    const int64_t ci = x.dims[1];
    if (w.dims[0] != ci || ci % group != 0) mismatch(n, "channel mismatch");
    const int64_t cog = w.dims[1];
    const int64_t co = cog * group;
    const int64_t kh = w.dims[2], kw = w.dims[3];
    const auto s = n.attr_ints("strides", {1, 1});
    const auto d = n.attr_ints("dilations", {1, 1});
    const auto p = n.attr_ints("pads", {0, 0, 0, 0});
    const auto op = n.attr_ints("output_padding", {0, 0});
    if (!n.attr_ints("output_shape").empty() || n.attr_string("auto_pad", "NOTSET") != "NOTSET") {
      mismatch(n, "output_shape/auto_pad are not supported");
    }
    const int64_t ih = x.dims[2], iw = x.dims[3];
    const int64_t oh = s[0] * (ih - 1) + op[0] + (kh - 1) * d[0] + 1 - p[0] - p[2];
    const int64_t ow = s[1] * (iw - 1) + op[1] + (kw - 1) * d[1] + 1 - p[1] - p[3];
    const TensorValue* b = has(n, 2) ? &in(n, 2) : nullptr;
    TensorValue y = make({x.dims[0], co, oh, ow});
    const int64_t cig = ci / group;
    std::vector<double> acc(oh * ow);
    for (int64_t nb = 0; nb < x.dims[0]; ++nb) {
      for (int64_t oc = 0; oc < co; ++oc) {
        const int64_t grp = oc / cog;
        const int64_t ocg = oc % cog;
        std::fill(acc.begin(), acc.end(), b != nullptr ? static_cast<double>(b->data[oc]) : 0.0);
        for (int64_t icg = 0; icg < cig; ++icg) {
          const int64_t ic = grp * cig + icg;
          const float* xp = x.data.data() + (nb * ci + ic) * ih * iw;
          const float* wp = w.data.data() + (ic * cog + ocg) * kh * kw;
          for (int64_t y0 = 0; y0 < ih; ++y0) {
            for (int64_t x0 = 0; x0 < iw; ++x0) {
              const double xv = xp[y0 * iw + x0];
              for (int64_t a = 0; a < kh; ++a) {
                const int64_t yy = y0 * s[0] - p[0] + a * d[0];
                if (yy < 0 || yy >= oh) continue;
                for (int64_t c = 0; c < kw; ++c) {
                  const int64_t xx = x0 * s[1] - p[1] + c * d[1];
                  if (xx < 0 || xx >= ow) continue;
                  acc[yy * ow + xx] += xv * wp[a * kw + c];
                }
              }
            }
          }
        }
        float* yp = y.data.data() + (nb * co + oc) * oh * ow;
        for (int64_t e = 0; e < oh * ow; ++e) yp[e] = static_cast<float>(acc[e]);
      }
    }
    return y;
  }

  TensorValue gemm(const NodeDef& n) {
    const TensorValue& a = in(n, 0);
    const TensorValue& b = in(n, 1);
    if (a.dims.size() != 2 || b.dims.size() != 2) mismatch(n, "Gemm operands must be 2-D");
    const bool ta = n.attr_int("transA", 0) != 0;
    const bool tb = n.attr_int("transB", 0) != 0;
    const double alpha = n.attr_float("alpha", 1.0f);
    const double beta = n.attr_float("beta", 1.0f);
    const int64_t m = ta ? a.dims[1] : a.dims[0];
    const int64_t k = ta ? a.dims[0] : a.dims[1];
    const int64_t kb = tb ? b.dims[1] : b.dims[0];
    const int64_t nn = tb ? b.dims[0] : b.dims[1];
    if (k != kb) mismatch(n, "inner dimensions differ");
    TensorValue y = make({m, nn});
    const TensorValue* c = has(n, 2) ? &in(n, 2) : nullptr;
    std::vector<double> acc(nn);
    for (int64_t i = 0; i < m; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = ta ? a.data[kk * a.dims[1] + i] : a.data[i * k + kk];
        if (tb) {
          for (int64_t j = 0; j < nn; ++j) acc[j] += av * b.data[j * k + kk];
        } else {
          const float* row = b.data.data() + kk * nn;
          for (int64_t j = 0; j < nn; ++j) acc[j] += av * row[j];
        }
      }
      for (int64_t j = 0; j < nn; ++j) {
        double v = alpha * acc[j];
        if (c != nullptr) v += beta * broadcast_at(*c, {m, nn}, {i, j});
        y.data[i * nn + j] = static_cast<float>(v);
      }
    }
    return y;
  }

  // Value of `t` broadcast (numpy rules) to `shape` at multi-index `idx`.
  static double broadcast_at(const TensorValue& t, const Dims& shape, const Dims& idx) {
    const size_t r = shape.size();
    int64_t off = 0;
    const Dims st = strides_of(t.dims);
    for (size_t k = 0; k < t.dims.size(); ++k) {
      const size_t axis = r - t.dims.size() + k;
      if (t.dims[k] != 1) off += idx[axis] * st[k];
    }
    return t.data[off];
  }

  TensorValue matmul(const NodeDef& n) {
    TensorValue a = in(n, 0);
    TensorValue b = in(n, 1);
    const bool a1 = a.dims.size() == 1;
    const bool b1 = b.dims.size() == 1;
    if (a1) a.dims.insert(a.dims.begin(), 1);
    if (b1) b.dims.push_back(1);
    const int64_t m = a.dims[a.dims.size() - 2];
    const int64_t k = a.dims.back();
    const int64_t nn = b.dims.back();
    if (b.dims[b.dims.size() - 2] != k) mismatch(n, "inner dimensions differ");
    const Dims abatch(a.dims.begin(), a.dims.end() - 2);
    const Dims bbatch(b.dims.begin(), b.dims.end() - 2);
    const size_t br = std::max(abatch.size(), bbatch.size());
    Dims batch(br);
    for (size_t i = 0; i < br; ++i) {
      const int64_t da = i + abatch.size() >= br ? abatch[i + abatch.size() - br] : 1;
      const int64_t db = i + bbatch.size() >= br ? bbatch[i + bbatch.size() - br] : 1;
      if (da != db && da != 1 && db != 1) mismatch(n, "batch dimensions do not broadcast");
      batch[i] = std::max(da, db);
    }
    Dims out_dims = batch;
    out_dims.push_back(m);
    out_dims.push_back(nn);
    TensorValue y = make(out_dims);
    const int64_t count = product(batch, 0, batch.size());
    const Dims bst = strides_of(batch);
    auto offset = [&](const Dims& sub, int64_t flat) {
      int64_t off = 0;
      const Dims st = strides_of(sub);
      for (size_t i = 0; i < sub.size(); ++i) {
        const size_t axis = br - sub.size() + i;
        const int64_t idx = (flat / bst[axis]) % batch[axis];
        if (sub[i] != 1) off += idx * st[i];
      }
      return off;
    };
    std::vector<double> acc(nn);
    for (int64_t bi = 0; bi < count; ++bi) {
      const float* ap = a.data.data() + offset(abatch, bi) * m * k;
      const float* bp = b.data.data() + offset(bbatch, bi) * k * nn;
      float* yp = y.data.data() + bi * m * nn;
      for (int64_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t kk = 0; kk < k; ++kk) {
          const double av = ap[i * k + kk];
          const float* row = bp + kk * nn;
          for (int64_t j = 0; j < nn; ++j) acc[j] += av * row[j];
        }
        for (int64_t j = 0; j < nn; ++j) yp[i * nn + j] = static_cast<float>(acc[j]);
      }
    }
    if (a1) y.dims.erase(y.dims.end() - 2);
    if (b1) y.dims.pop_back();
    return y;
  }

  TensorValue pool(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const bool is_max = n.op_type == "MaxPool";
    if (is_max && n.outputs.size() > 1 && !n.outputs[1].empty()) {
      mismatch(n, "MaxPool indices output is not supported");
    }
    const Dims kernel = n.attr_ints("kernel_shape");
    const Window g = window(n, x.dims, kernel, n.attr_int("ceil_mode", 0) != 0);
    const bool include_pad = n.attr_int("count_include_pad", 0) != 0;
    TensorValue y = make(window_dims(x.dims, x.dims[1], g));
    const int64_t planes = x.dims[0] * x.dims[1];
    for (int64_t pl = 0; pl < planes; ++pl) {
      const float* xp = x.data.data() + pl * g.ih * g.iw;
      float* yp = y.data.data() + pl * g.oh * g.ow;
      for (int64_t oh = 0; oh < g.oh; ++oh) {
        for (int64_t ow = 0; ow < g.ow; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          double sum = 0.0;
          int64_t count = 0;
          int64_t padded = 0;
          for (int64_t a = 0; a < g.kh; ++a) {
            const int64_t yy = oh * g.sh - g.pt + a * g.dh;
            for (int64_t c = 0; c < g.kw; ++c) {
              const int64_t xx = ow * g.sw - g.pl + c * g.dw;
              const bool in_pad = yy >= -g.pt && yy < g.ih + g.pb && xx >= -g.pl && xx < g.iw + g.pr;
              padded += in_pad ? 1 : 0;
              if (yy < 0 || yy >= g.ih || xx < 0 || xx >= g.iw) continue;
              const double v = xp[yy * g.iw + xx];
              best = std::max(best, v);
              sum += v;
              ++count;
            }
          }
          if (is_max) {
            yp[oh * g.ow + ow] = static_cast<float>(best);
          } else {
            const int64_t div = include_pad ? padded : count;
            yp[oh * g.ow + ow] = static_cast<float>(div > 0 ? sum / static_cast<double>(div) : 0.0);
          }
        }
      }
    }
    return y;
  }

  TensorValue global_average(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    if (x.dims.size() < 3) mismatch(n, "expects rank >= 3");
    Dims out{x.dims[0], x.dims[1]};
    out.resize(x.dims.size(), 1);
    TensorValue y = make(out);
    const int64_t plane = product(x.dims, 2, x.dims.size());
    for (int64_t p = 0; p < x.dims[0] * x.dims[1]; ++p) {
      double s = 0.0;
      for (int64_t e = 0; e < plane; ++e) s += x.data[p * plane + e];
      y.data[p] = static_cast<float>(s / static_cast<double>(plane));
    }
    return y;
  }

  TensorValue batchnorm(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const TensorValue& scale = in(n, 1);
    const TensorValue& bias = in(n, 2);
    const TensorValue& mean = in(n, 3);
    const TensorValue& var = in(n, 4);
    if (x.dims.size() < 2) mismatch(n, "expects rank >= 2");
    const int64_t c = x.dims[1];
    for (const auto* p : {&scale, &bias, &mean, &var}) {
      if (p->elements() != c) mismatch(n, "parameter length differs from channel count");
    }
    const double eps = n.attr_float("epsilon", 1e-5f);
    TensorValue y = make(x.dims);
    const int64_t plane = product(x.dims, 2, x.dims.size());
    for (int64_t nb = 0; nb < x.dims[0]; ++nb) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(var.data[ch]) + eps);
        const double s = scale.data[ch];
        const double b = bias.data[ch];
        const double m = mean.data[ch];
        const int64_t base = (nb * c + ch) * plane;
        for (int64_t e = 0; e < plane; ++e) {
          y.data[base + e] = static_cast<float>(s * ((x.data[base + e] - m) * inv) + b);
        }
      }
    }
    return y;
  }

  template <typename F>
  TensorValue unary(const NodeDef& n, F f) {
    TensorValue y = in(n, 0);
    for (auto& v : y.data) v = static_cast<float>(f(static_cast<double>(v)));
    return y;
  }

  TensorValue cast(const NodeDef& n) {
    const auto to = static_cast<DataType>(n.attr_int("to", 1));
    if (to == DataType::kFloat || to == DataType::kDouble || to == DataType::kFloat16) {
      return in(n, 0);
    }
    if (to == DataType::kBool) return unary(n, [](double v) { return v != 0.0 ? 1.0 : 0.0; });
    if (is_integer_type(to)) return unary(n, [](double v) { return std::trunc(v); });
    throw UnsupportedOp("'" + n.display_name() + "': Cast to element type " +
                        std::to_string(static_cast<int>(to)));
  }

  TensorValue softmax(const NodeDef& n) {
    TensorValue y = in(n, 0);
    const size_t r = y.dims.size();
    const bool modern = model_.opset_version() >= 13;
    const int axis = normalize_axis(n.attr_int("axis", modern ? -1 : 1), r);
    // [outer, extent, inner] for the modern form; [outer, extent] with
    // inner 1 for the coerced 2-D form.
    const int64_t outer = product(y.dims, 0, axis);
    const int64_t extent = modern ? y.dims[axis] : product(y.dims, axis, r);
    const int64_t inner = modern ? product(y.dims, axis + 1, r) : 1;
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t s = 0; s < inner; ++s) {
        auto at = [&](int64_t j) -> float& { return y.data[(o * extent + j) * inner + s]; };
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < extent; ++j) mx = std::max(mx, static_cast<double>(at(j)));
        double sum = 0.0;
        std::vector<double> e(extent);
        for (int64_t j = 0; j < extent; ++j) sum += e[j] = std::exp(at(j) - mx);
        for (int64_t j = 0; j < extent; ++j) at(j) = static_cast<float>(e[j] / sum);
      }
    }
    return y;
  }

  template <typename F>
  TensorValue binary(const NodeDef& n, F f) {
    const TensorValue& a = in(n, 0);
    const TensorValue& b = in(n, 1);
    if (a.dims == b.dims) {
      TensorValue y = make(a.dims);
      for (size_t e = 0; e < y.data.size(); ++e) {
        y.data[e] = static_cast<float>(f(static_cast<double>(a.data[e]), static_cast<double>(b.data[e])));
      }
      return y;
    }
    const size_t r = std::max(a.dims.size(), b.dims.size());
    Dims out(r);
    auto padded = [&](const Dims& d) {
      Dims p(r, 1);
      std::copy(d.begin(), d.end(), p.begin() + (r - d.size()));
      return p;
    };
    const Dims pa = padded(a.dims), pb = padded(b.dims);
    for (size_t i = 0; i < r; ++i) {
      if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) mismatch(n, "operands do not broadcast");
      out[i] = pa[i] == 1 ? pb[i] : pa[i];
    }
    TensorValue y = make(out);
    const Dims so = strides_of(out), sa = strides_of(pa), sb = strides_of(pb);
    for (int64_t e = 0; e < static_cast<int64_t>(y.data.size()); ++e) {
      int64_t oa = 0, ob = 0;
      for (size_t i = 0; i < r; ++i) {
        const int64_t idx = (e / so[i]) % out[i];
        if (pa[i] != 1) oa += idx * sa[i];
        if (pb[i] != 1) ob += idx * sb[i];
      }
      y.data[e] = static_cast<float>(f(static_cast<double>(a.data[oa]), static_cast<double>(b.data[ob])));
    }
    return y;
  }

  TensorValue flatten(const NodeDef& n) {
    TensorValue y = in(n, 0);
    const int axis = normalize_axis(n.attr_int("axis", 1), y.dims.size() + 1);
    y.dims = {product(y.dims, 0, axis), product(y.dims, axis, y.dims.size())};
    return y;
  }

  TensorValue reshape(const NodeDef& n) {
    TensorValue y = in(n, 0);
    Dims target = ints(n, 1);
    const bool allowzero = n.attr_int("allowzero", 0) != 0;
    int infer = -1;
    int64_t known = 1;
    for (size_t i = 0; i < target.size(); ++i) {
      if (target[i] == 0 && !allowzero) {
        if (i >= y.dims.size()) mismatch(n, "0 entry past input rank");
        target[i] = y.dims[i];
      }
      if (target[i] == -1) {
        if (infer >= 0) mismatch(n, "more than one -1 entry");
        infer = static_cast<int>(i);
      } else {
        known *= target[i];
      }
    }
    if (infer >= 0) {
      if (known == 0 || y.elements() % known != 0) mismatch(n, "cannot infer -1 entry");
      target[infer] = y.elements() / known;
    }
    if (product(target, 0, target.size()) != y.elements()) mismatch(n, "element count changes");
    y.dims = target;
    return y;
  }

  TensorValue transpose(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const size_t r = x.dims.size();
    Dims perm = n.attr_ints("perm");
    if (perm.empty()) {
      for (size_t i = 0; i < r; ++i) perm.push_back(static_cast<int64_t>(r - 1 - i));
    }
    if (perm.size() != r) mismatch(n, "perm length differs from rank");
    Dims out(r);
    for (size_t i = 0; i < r; ++i) out[i] = x.dims[perm[i]];
    TensorValue y = make(out);
    const Dims sx = strides_of(x.dims), so = strides_of(out);
    for (int64_t e = 0; e < static_cast<int64_t>(y.data.size()); ++e) {
      int64_t off = 0;
      for (size_t i = 0; i < r; ++i) off += ((e / so[i]) % out[i]) * sx[perm[i]];
      y.data[e] = x.data[off];
    }
    return y;
  }

  TensorValue unsqueeze(const NodeDef& n) {
    TensorValue y = in(n, 0);
    const auto raw = detail::unsqueeze_axes(def_, n);
    const size_t r = y.dims.size() + raw.size();
    std::set<int> axes;
    for (int64_t a : raw) axes.insert(normalize_axis(a, r));
    Dims out;
    size_t src = 0;
    for (size_t i = 0; i < r; ++i) out.push_back(axes.count(static_cast<int>(i)) ? 1 : y.dims[src++]);
    y.dims = out;
    return y;
  }

  TensorValue concat(const NodeDef& n) {
    const TensorValue& first = in(n, 0);
    const size_t r = first.dims.size();
    const int axis = normalize_axis(n.attr_int("axis", 0), r);
    Dims out = first.dims;
    out[axis] = 0;
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      const TensorValue& t = in(n, i);
      if (t.dims.size() != r) mismatch(n, "rank mismatch");
      for (size_t k = 0; k < r; ++k) {
        if (static_cast<int>(k) != axis && t.dims[k] != first.dims[k]) mismatch(n, "shape mismatch");
      }
      out[axis] += t.dims[axis];
    }
    TensorValue y = make(out);
    const int64_t outer = product(out, 0, axis);
    const int64_t inner = product(out, axis + 1, r);
    int64_t offset = 0;
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      const TensorValue& t = in(n, i);
      const int64_t block = t.dims[axis] * inner;
      for (int64_t o = 0; o < outer; ++o) {
        std::copy_n(t.data.begin() + o * block, block,
                    y.data.begin() + o * out[axis] * inner + offset * inner);
      }
      offset += t.dims[axis];
    }
    return y;
  }

  TensorValue gather(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const Dims idx = ints(n, 1);
    Dims idx_dims = def_.is_initializer(n.inputs[1]) ? def_.find_initializer(n.inputs[1])->dims
                                                      : in(n, 1).dims;
    const int axis = normalize_axis(n.attr_int("axis", 0), x.dims.size());
    Dims out(x.dims.begin(), x.dims.begin() + axis);
    out.insert(out.end(), idx_dims.begin(), idx_dims.end());
    out.insert(out.end(), x.dims.begin() + axis + 1, x.dims.end());
    TensorValue y = make(out);
    const int64_t outer = product(x.dims, 0, axis);
    const int64_t inner = product(x.dims, axis + 1, x.dims.size());
    const int64_t extent = x.dims[axis];
    const int64_t count = static_cast<int64_t>(idx.size());
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t j = 0; j < count; ++j) {
        int64_t k = idx[j] < 0 ? idx[j] + extent : idx[j];
        if (k < 0 || k >= extent) mismatch(n, "index out of range");
        std::copy_n(x.data.begin() + (o * extent + k) * inner, inner,
                    y.data.begin() + (o * count + j) * inner);
      }
    }
    return y;
  }

  TensorValue slice(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const auto spec = detail::slice_spec(def_, n, x.dims);
    const size_t r = x.dims.size();
    Dims start(r, 0), step(r, 1), out = x.dims;
    for (const auto& s : spec) {
      start[s.axis] = s.start;
      step[s.axis] = s.step;
      out[s.axis] = s.count;
    }
    TensorValue y = make(out);
    const Dims sx = strides_of(x.dims), so = strides_of(out);
    for (int64_t e = 0; e < static_cast<int64_t>(y.data.size()); ++e) {
      int64_t off = 0;
      for (size_t i = 0; i < r; ++i) off += (start[i] + ((e / so[i]) % out[i]) * step[i]) * sx[i];
      y.data[e] = x.data[off];
    }
    return y;
  }

  TensorValue pad(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const size_t r = x.dims.size();
    if (n.attr_string("mode", "constant") != "constant") {
      throw UnsupportedOp("'" + n.display_name() + "': only constant padding is interpreted");
    }
    Dims pads = n.attr_ints("pads");
    double value = n.attr_float("value", 0.0f);
    if (has(n, 1)) pads = ints(n, 1);
    if (has(n, 2)) value = in(n, 2).data.at(0);
    if (has(n, 3)) mismatch(n, "explicit axes are not supported");
    if (pads.size() != 2 * r) mismatch(n, "pads length must be twice the rank");
    Dims out(r);
    for (size_t i = 0; i < r; ++i) out[i] = x.dims[i] + pads[i] + pads[i + r];
    TensorValue y = make(out);
    std::fill(y.data.begin(), y.data.end(), static_cast<float>(value));
    const Dims sx = strides_of(x.dims), so = strides_of(out);
    for (int64_t e = 0; e < static_cast<int64_t>(y.data.size()); ++e) {
      int64_t off = 0;
      bool inside = true;
      for (size_t i = 0; i < r && inside; ++i) {
        const int64_t k = (e / so[i]) % out[i] - pads[i];
        inside = k >= 0 && k < x.dims[i];
        off += k * sx[i];
      }
      if (inside) y.data[e] = x.data[off];
    }
    return y;
  }

  TensorValue reduce(const NodeDef& n) {
    const TensorValue& x = in(n, 0);
    const size_t r = x.dims.size();
    const auto axes = detail::reduce_axes(def_, n, r);
    if (axes.empty()) return x;
    const bool keep = n.attr_int("keepdims", 1) != 0;
    const bool is_max = n.op_type == "ReduceMax";
    Dims full = x.dims;
    for (int a : axes) full[a] = 1;
    TensorValue y = make(full);
    std::vector<double> acc(y.data.size(), is_max ? -std::numeric_limits<double>::infinity() : 0.0);
    const Dims sx = strides_of(x.dims), sf = strides_of(full);
    for (int64_t e = 0; e < static_cast<int64_t>(x.data.size()); ++e) {
      int64_t off = 0;
      for (size_t i = 0; i < r; ++i) {
        if (full[i] != 1) off += ((e / sx[i]) % x.dims[i]) * sf[i];
      }
      if (is_max) acc[off] = std::max(acc[off], static_cast<double>(x.data[e]));
      else acc[off] += x.data[e];
    }
    int64_t count = 1;
    for (int a : axes) count *= x.dims[a];
    for (size_t e = 0; e < acc.size(); ++e) {
      y.data[e] = static_cast<float>(is_max ? acc[e] : acc[e] / static_cast<double>(count));
    }
    if (!keep) {
      Dims out;
      for (size_t i = 0; i < r; ++i) {
        if (std::find(axes.begin(), axes.end(), static_cast<int>(i)) == axes.end()) out.push_back(x.dims[i]);
      }
      y.dims = out;
    }
    return y;
  }

  const ModelArchive& model_;
  const GraphDef& def_;
  TensorMap env_;
};

}  // namespace

bool interpreter_supports(const std::string& op_type) { return ops().count(op_type) != 0; }

TensorMap run_all(const ModelArchive& model, const TensorMap& inputs) {
  return Interpreter(model).execute(inputs);
}

TensorMap run(const ModelArchive& model, const TensorMap& inputs) {
  TensorMap all = run_all(model, inputs);
  TensorMap out;
  for (const auto& vi : model.graph.outputs) {
    auto it = all.find(vi.name);
    if (it == all.end()) throw ShapeMismatch("graph output '" + vi.name + "' was not produced");
    out.emplace(vi.name, std::move(it->second));
  }
  return out;
}

TensorMap random_inputs(const ModelArchive& model, uint64_t seed, int64_t batch) {
  detail::Rng rng(seed);
  TensorMap out;
  for (const auto& vi : model.graph.inputs) {
    if (model.graph.is_initializer(vi.name)) continue;
    if (!vi.shape) throw ShapeMismatch("graph input '" + vi.name + "' has no declared shape");
    TensorValue t;
    for (const auto& d : *vi.shape) t.dims.push_back(d.value ? *d.value : batch);
    t.data.resize(static_cast<size_t>(t.elements()));
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    out.emplace(vi.name, std::move(t));
  }
  return out;
}

}  // namespace treeprune
