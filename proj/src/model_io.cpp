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

#include "treeprune/model_io.hpp"

#include <cstring>
#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "onnx.pb.h"
#include "treeprune/errors.hpp"

namespace treeprune {
namespace {

namespace pb = google::protobuf;

class ParseContext {
 public:
  // Records every populated field of `msg` whose number is not in `modeled`,
  // plus any field number the schema does not know.
  void unmodeled(const pb::Message& msg, std::initializer_list<int> modeled) {
    std::vector<const pb::FieldDescriptor*> fields;
    msg.GetReflection()->ListFields(msg, &fields);
    for (const auto* f : fields) {
      if (std::find(modeled.begin(), modeled.end(), f->number()) == modeled.end()) {
        dropped(msg.GetDescriptor()->name(), f->number());
      }
    }
    const pb::UnknownFieldSet& unknown = msg.GetReflection()->GetUnknownFields(msg);
    for (int i = 0; i < unknown.field_count(); ++i) {
      dropped(msg.GetDescriptor()->name(), unknown.field(i).number());
    }
  }
  void note(std::string text) {
    if (seen_.insert(text).second) warnings_.push_back(std::move(text));
  }
  std::vector<std::string> take() { return std::move(warnings_); }

 private:
  void dropped(const std::string& message_name, int field) {
    note("dropped unsupported field " + std::to_string(field) + " of " + message_name);
  }

  std::set<std::string> seen_;
  std::vector<std::string> warnings_;
};

int integer_width(DataType t) {
  switch (t) {
    case DataType::kInt64: return 8;
    case DataType::kInt32: return 4;
    case DataType::kInt16:
    case DataType::kUint16: return 2;
    default: return 1;
  }
}

int64_t decode_integer(const char* p, DataType t) {
  switch (t) {
    case DataType::kInt64: { int64_t v; std::memcpy(&v, p, 8); return v; }
    case DataType::kInt32: { int32_t v; std::memcpy(&v, p, 4); return v; }
    case DataType::kInt16: { int16_t v; std::memcpy(&v, p, 2); return v; }
    case DataType::kUint16: { uint16_t v; std::memcpy(&v, p, 2); return v; }
    case DataType::kInt8: return static_cast<int8_t>(*p);
    default: return static_cast<uint8_t>(*p);
  }
}

Tensor from_proto(const onnx::TensorProto& p, ParseContext& ctx) {
  using TP = onnx::TensorProto;
  ctx.unmodeled(p, {TP::kDimsFieldNumber, TP::kDataTypeFieldNumber, TP::kFloatDataFieldNumber,
                    TP::kInt32DataFieldNumber, TP::kInt64DataFieldNumber,
                    TP::kNameFieldNumber, TP::kRawDataFieldNumber,
                    TP::kDoubleDataFieldNumber, TP::kUint64DataFieldNumber});
  Tensor t;
  t.name = p.name();
  t.dtype = static_cast<DataType>(p.data_type());
  t.dims.assign(p.dims().begin(), p.dims().end());
  const std::string& raw = p.raw_data();
  if (t.dtype == DataType::kFloat) {
    if (p.has_raw_data()) {
      if (raw.size() % 4 != 0) throw ParseError("raw_data size mismatch in '" + t.name + "'");
      t.float_data.resize(raw.size() / 4);
      std::memcpy(t.float_data.data(), raw.data(), raw.size());
    } else {
      t.float_data.assign(p.float_data().begin(), p.float_data().end());
    }
  } else if (is_integer_type(t.dtype)) {
    if (p.has_raw_data()) {
      const int w = integer_width(t.dtype);
      if (raw.size() % w != 0) throw ParseError("raw_data size mismatch in '" + t.name + "'");
      for (size_t off = 0; off < raw.size(); off += w) {
        t.int_data.push_back(decode_integer(raw.data() + off, t.dtype));
      }
    } else if (t.dtype == DataType::kInt64) {
      t.int_data.assign(p.int64_data().begin(), p.int64_data().end());
    } else {
      t.int_data.assign(p.int32_data().begin(), p.int32_data().end());
    }
  } else if (p.has_raw_data()) {
    // Opaque pass-through.
    t.raw_data = raw;
  } else if (p.double_data_size() > 0) {
    t.raw_data.assign(reinterpret_cast<const char*>(p.double_data().data()),
                      p.double_data_size() * sizeof(double));
  } else if (p.uint64_data_size() > 0) {
    t.raw_data.assign(reinterpret_cast<const char*>(p.uint64_data().data()),
                      p.uint64_data_size() * sizeof(uint64_t));
  } else {
    // float16 bit patterns travel in int32_data.
    for (int32_t v : p.int32_data()) {
      const auto bits = static_cast<uint16_t>(v);
      t.raw_data.append(reinterpret_cast<const char*>(&bits), 2);
    }
  }
  return t;
}

ValueInfo from_proto(const onnx::ValueInfoProto& p, ParseContext& ctx) {
  ctx.unmodeled(p, {onnx::ValueInfoProto::kNameFieldNumber, onnx::ValueInfoProto::kTypeFieldNumber});
  ValueInfo vi;
  vi.name = p.name();
  vi.has_type = p.has_type() && p.type().has_tensor_type();
  if (p.has_type()) ctx.unmodeled(p.type(), {onnx::TypeProto::kTensorTypeFieldNumber});
  if (!vi.has_type) return vi;
  const auto& tt = p.type().tensor_type();
  ctx.unmodeled(tt, {onnx::TypeProto_Tensor::kElemTypeFieldNumber,
                     onnx::TypeProto_Tensor::kShapeFieldNumber});
  vi.elem_type = static_cast<DataType>(tt.elem_type());
  if (tt.has_shape()) {
    ctx.unmodeled(tt.shape(), {onnx::TensorShapeProto::kDimFieldNumber});
    std::vector<Dimension> dims;
    for (const auto& d : tt.shape().dim()) {
      ctx.unmodeled(d, {onnx::TensorShapeProto_Dimension::kDimValueFieldNumber,
                        onnx::TensorShapeProto_Dimension::kDimParamFieldNumber});
      Dimension out;
      if (d.has_dim_value()) out.value = d.dim_value();
      if (d.has_dim_param()) out.param = d.dim_param();
      dims.push_back(std::move(out));
    }
    vi.shape = std::move(dims);
  }
  return vi;
}

std::optional<Attribute> from_proto(const onnx::AttributeProto& p, ParseContext& ctx) {
  using AP = onnx::AttributeProto;
  ctx.unmodeled(p, {AP::kNameFieldNumber, AP::kFFieldNumber, AP::kIFieldNumber, AP::kSFieldNumber,
                    AP::kTFieldNumber, AP::kFloatsFieldNumber, AP::kIntsFieldNumber,
                    AP::kStringsFieldNumber, AP::kTypeFieldNumber, AP::kGFieldNumber,
                    AP::kGraphsFieldNumber, AP::kTensorsFieldNumber,
                    AP::kSparseTensorFieldNumber, AP::kSparseTensorsFieldNumber,
                    AP::kTpFieldNumber, AP::kTypeProtosFieldNumber});
  AP::AttributeType type = p.has_type() ? p.type() : AP::UNDEFINED;
  if (type == AP::UNDEFINED) {
    // Pre-IR3 files omit the type; infer it from the populated field.
    if (p.has_f()) type = AP::FLOAT;
    else if (p.has_i()) type = AP::INT;
    else if (p.has_s()) type = AP::STRING;
    else if (p.has_t()) type = AP::TENSOR;
    else if (p.floats_size() > 0) type = AP::FLOATS;
    else if (p.ints_size() > 0) type = AP::INTS;
    else if (p.strings_size() > 0) type = AP::STRINGS;
  }
  Attribute a;
  a.name = p.name();
  switch (type) {
    case AP::FLOAT: a.value = p.f(); break;
    case AP::INT: a.value = static_cast<int64_t>(p.i()); break;
    case AP::STRING: a.value = p.s(); break;
    case AP::TENSOR: a.value = from_proto(p.t(), ctx); break;
    case AP::FLOATS: a.value = std::vector<float>(p.floats().begin(), p.floats().end()); break;
    case AP::INTS: a.value = std::vector<int64_t>(p.ints().begin(), p.ints().end()); break;
    case AP::STRINGS:
      a.value = std::vector<std::string>(p.strings().begin(), p.strings().end());
      break;
    default:
      ctx.note("dropped attribute '" + a.name + "' of unsupported type " + std::to_string(type));
      return std::nullopt;
  }
  return a;
}

NodeDef from_proto(const onnx::NodeProto& p, ParseContext& ctx) {
  using NP = onnx::NodeProto;
  ctx.unmodeled(p, {NP::kInputFieldNumber, NP::kOutputFieldNumber, NP::kNameFieldNumber,
                    NP::kOpTypeFieldNumber, NP::kAttributeFieldNumber, NP::kDomainFieldNumber});
  NodeDef n;
  n.op_type = p.op_type();
  n.name = p.name();
  n.domain = p.domain();
  n.inputs.assign(p.input().begin(), p.input().end());
  n.outputs.assign(p.output().begin(), p.output().end());
  for (const auto& a : p.attribute()) {
    if (auto parsed = from_proto(a, ctx)) n.attributes.push_back(std::move(*parsed));
  }
  return n;
}

GraphDef from_proto(const onnx::GraphProto& p, ParseContext& ctx) {
  using GP = onnx::GraphProto;
  ctx.unmodeled(p, {GP::kNodeFieldNumber, GP::kNameFieldNumber, GP::kInitializerFieldNumber,
                    GP::kInputFieldNumber, GP::kOutputFieldNumber, GP::kValueInfoFieldNumber});
  GraphDef g;
  g.name = p.name();
  for (const auto& n : p.node()) g.nodes.push_back(from_proto(n, ctx));
  for (const auto& t : p.initializer()) g.initializers.push_back(from_proto(t, ctx));
  for (const auto& vi : p.input()) g.inputs.push_back(from_proto(vi, ctx));
  for (const auto& vi : p.output()) g.outputs.push_back(from_proto(vi, ctx));
  for (const auto& vi : p.value_info()) g.value_infos.push_back(from_proto(vi, ctx));
  return g;
}

// ---------------------------------------------------------------- writing

void to_proto(const Tensor& t, onnx::TensorProto* p) {
  p->set_name(t.name);
  p->set_data_type(static_cast<int32_t>(t.dtype));
  for (int64_t d : t.dims) p->add_dims(d);
  if (t.dtype == DataType::kFloat) {
    p->mutable_float_data()->Add(t.float_data.begin(), t.float_data.end());
  } else if (t.dtype == DataType::kInt64) {
    p->mutable_int64_data()->Add(t.int_data.begin(), t.int_data.end());
  } else if (is_integer_type(t.dtype)) {
    for (int64_t v : t.int_data) p->add_int32_data(static_cast<int32_t>(v));
  } else if (!t.raw_data.empty()) {
    p->set_raw_data(t.raw_data);
  }
}

void to_proto(const ValueInfo& vi, onnx::ValueInfoProto* p) {
  p->set_name(vi.name);
  if (!vi.has_type) return;
  auto* tt = p->mutable_type()->mutable_tensor_type();
  tt->set_elem_type(static_cast<int32_t>(vi.elem_type));
  if (!vi.shape) return;
  auto* shape = tt->mutable_shape();
  for (const auto& d : *vi.shape) {
    auto* dim = shape->add_dim();
    if (d.value) dim->set_dim_value(*d.value);
    else if (!d.param.empty()) dim->set_dim_param(d.param);
  }
}

void to_proto(const Attribute& a, onnx::AttributeProto* p) {
  using AP = onnx::AttributeProto;
  p->set_name(a.name);
  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, float>) {
          p->set_f(v);
          p->set_type(AP::FLOAT);
        } else if constexpr (std::is_same_v<V, int64_t>) {
          p->set_i(v);
          p->set_type(AP::INT);
        } else if constexpr (std::is_same_v<V, std::string>) {
          p->set_s(v);
          p->set_type(AP::STRING);
        } else if constexpr (std::is_same_v<V, Tensor>) {
          to_proto(v, p->mutable_t());
          p->set_type(AP::TENSOR);
        } else if constexpr (std::is_same_v<V, std::vector<float>>) {
          p->mutable_floats()->Add(v.begin(), v.end());
          p->set_type(AP::FLOATS);
        } else if constexpr (std::is_same_v<V, std::vector<int64_t>>) {
          p->mutable_ints()->Add(v.begin(), v.end());
          p->set_type(AP::INTS);
        } else {
          for (const auto& x : v) p->add_strings(x);
          p->set_type(AP::STRINGS);
        }
      },
      a.value);
}

void to_proto(const NodeDef& n, onnx::NodeProto* p) {
  for (const auto& in : n.inputs) p->add_input(in);
  for (const auto& out : n.outputs) p->add_output(out);
  if (!n.name.empty()) p->set_name(n.name);
  p->set_op_type(n.op_type);
  for (const auto& a : n.attributes) to_proto(a, p->add_attribute());
  if (!n.domain.empty()) p->set_domain(n.domain);
}

void to_proto(const GraphDef& g, onnx::GraphProto* p) {
  p->set_name(g.name);
  for (const auto& n : g.nodes) to_proto(n, p->add_node());
  for (const auto& t : g.initializers) to_proto(t, p->add_initializer());
  for (const auto& vi : g.inputs) to_proto(vi, p->add_input());
  for (const auto& vi : g.outputs) to_proto(vi, p->add_output());
  for (const auto& vi : g.value_infos) to_proto(vi, p->add_value_info());
}

}  // namespace

std::string serialize_model(const ModelArchive& model) {
  onnx::ModelProto p;
  p.set_ir_version(model.ir_version);
  if (!model.producer_name.empty()) p.set_producer_name(model.producer_name);
  if (!model.producer_version.empty()) p.set_producer_version(model.producer_version);
  to_proto(model.graph, p.mutable_graph());
  for (const auto& o : model.opset_imports) {
    auto* op = p.add_opset_import();
    if (!o.domain.empty()) op->set_domain(o.domain);
    op->set_version(o.version);
  }
  std::string out;
  if (!p.SerializeToString(&out)) throw IoError("model serialization failed");
  return out;
}

ModelArchive parse_model(std::string_view bytes) {
  onnx::ModelProto p;
  if (bytes.size() > static_cast<size_t>(std::numeric_limits<int>::max()) ||
      !p.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    throw ParseError("malformed ModelProto");
  }
  if (!p.has_graph()) throw ParseError("model has no graph");
  ParseContext ctx;
  using MP = onnx::ModelProto;
  ctx.unmodeled(p, {MP::kIrVersionFieldNumber, MP::kProducerNameFieldNumber,
                    MP::kProducerVersionFieldNumber, MP::kGraphFieldNumber,
                    MP::kOpsetImportFieldNumber});
  ModelArchive m;
  m.ir_version = p.ir_version();
  m.producer_name = p.producer_name();
  m.producer_version = p.producer_version();
  m.graph = from_proto(p.graph(), ctx);
  for (const auto& o : p.opset_import()) {
    ctx.unmodeled(o, {onnx::OperatorSetIdProto::kDomainFieldNumber,
                      onnx::OperatorSetIdProto::kVersionFieldNumber});
    m.opset_imports.push_back({o.domain(), o.version()});
  }
  m.load_warnings = ctx.take();
  return m;
}

ModelArchive load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return parse_model(buf.str());
}

void save_model(const ModelArchive& model, const std::filesystem::path& path) {
  auto diags = validate_syntax(model);
  if (has_errors(diags)) {
    std::string msg = "refusing to save invalid model:";
    for (const auto& d : diags) {
      if (d.severity == Severity::kError) msg += "\n  " + to_string(d);
    }
    throw ValidationError(msg);
  }
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Diagnostic> validate_syntax(const ModelArchive& model) {
  std::vector<Diagnostic> diags;
  auto error = [&](std::string node, std::string msg) {
    diags.push_back({Severity::kError, std::move(node), std::move(msg)});
  };
  auto warning = [&](std::string node, std::string msg) {
    diags.push_back({Severity::kWarning, std::move(node), std::move(msg)});
  };

  std::set<std::string> domains;
  for (const auto& o : model.opset_imports) {
    if (!domains.insert(o.domain).second) {
      error("", "opset domain '" + o.domain + "' imported more than once");
    }
    if (o.domain.empty() && (o.version < kMinOpset || o.version > kMaxOpset)) {
      warning("", "default-domain opset " + std::to_string(o.version) + " is outside the tested range " +
                      std::to_string(kMinOpset) + "-" + std::to_string(kMaxOpset));
    }
  }
  if (!domains.count("")) warning("", "model imports no default-domain opset");

  const GraphDef& g = model.graph;
  // name -> origin: 0 graph input, 1 initializer, 2 node output
  std::map<std::string, int> defined;
  for (const auto& vi : g.inputs) {
    if (!defined.emplace(vi.name, 0).second) {
      error("", "graph input '" + vi.name + "' declared more than once");
    }
  }
  std::set<std::string> init_names;
  for (const auto& t : g.initializers) {
    if (!init_names.insert(t.name).second) {
      error("", "initializer '" + t.name + "' defined more than once");
    }
    defined.emplace(t.name, 1);
    bool dims_ok = true;
    for (int64_t d : t.dims) dims_ok = dims_ok && d >= 0;
    if (!dims_ok) {
      error("", "initializer '" + t.name + "' has a negative dimension");
    } else if (t.num_elements() != t.stored_elements()) {
      error("", "initializer '" + t.name + "' holds " +
                    std::to_string(t.stored_elements()) + " elements but dims imply " +
                    std::to_string(t.num_elements()));
    }
  }

  std::set<std::string> all_outputs;
  for (const auto& n : g.nodes) {
    for (const auto& out : n.outputs) {
      if (!out.empty()) all_outputs.insert(out);
    }
  }

  std::set<std::string> consumed;
  std::set<std::string> node_names;
  std::set<std::string> produced;
  for (const auto& n : g.nodes) {
    const std::string who = n.display_name();
    if (n.op_type.empty()) error(who, "node has an empty op_type");
    if (!n.name.empty() && !node_names.insert(n.name).second) {
      warning(who, "node name '" + n.name + "' is not unique");
    }
    for (const auto& in : n.inputs) {
      if (in.empty()) continue;  // omitted optional input
      consumed.insert(in);
      if (defined.count(in) != 0) continue;
      if (all_outputs.count(in) != 0) {
        error(who, "input '" + in + "' is consumed before the node producing it");
      } else {
        error(who, "input '" + in + "' is not defined by any graph input, "
                   "initializer, or node output");
      }
    }
    for (const auto& out : n.outputs) {
      if (out.empty()) continue;
      if (!produced.insert(out).second) {
        error(who, "output name '" + out + "' is produced more than once");
      } else if (defined.count(out) != 0) {
        error(who, "output name '" + out + "' shadows a graph input or initializer");
      } else {
        defined.emplace(out, 2);
      }
    }
  }

  std::set<std::string> graph_outputs;
  for (const auto& vi : g.outputs) {
    if (!graph_outputs.insert(vi.name).second) {
      error("", "graph output '" + vi.name + "' listed more than once");
    }
    if (defined.count(vi.name) == 0) {
      error("", "graph output '" + vi.name + "' is never produced");
    }
  }

  for (const auto& t : g.initializers) {
    if (consumed.count(t.name) == 0 && graph_outputs.count(t.name) == 0) {
      warning("", "initializer '" + t.name + "' is not consumed by any node");
    }
  }
  return diags;
}

}  // namespace treeprune
