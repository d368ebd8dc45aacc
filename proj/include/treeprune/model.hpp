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

// In-memory ONNX model. Only the subset of ModelProto that pruning needs is
// modeled; everything else is dropped on load with a recorded warning.

#ifndef TREEPRUNE_MODEL_HPP_
#define TREEPRUNE_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace treeprune {

// TensorProto.DataType values.
enum class DataType : int32_t {
  kUndefined = 0,
  kFloat = 1,
  kUint8 = 2,
  kInt8 = 3,
  kUint16 = 4,
  kInt16 = 5,
  kInt32 = 6,
  kInt64 = 7,
  kString = 8,
  kBool = 9,
  kFloat16 = 10,
  kDouble = 11,
  kUint32 = 12,
  kUint64 = 13,
};

// True for element types decoded into Tensor::int_data.
bool is_integer_type(DataType t);

// A named constant tensor (ONNX initializer). float32 tensors live in
// float_data, small integer types in int_data; anything else is kept as the
// raw little-endian bytes and passed through untouched.
struct Tensor {
  std::string name;
  DataType dtype = DataType::kFloat;
  std::vector<int64_t> dims;
  std::vector<float> float_data;
  std::vector<int64_t> int_data;
  std::string raw_data;

  int64_t num_elements() const;
  // Element count implied by the stored buffer for this dtype.
  int64_t stored_elements() const;

  // Throws UnsupportedDtype unless dtype is float32.
  const std::vector<float>& floats() const;
  std::vector<float>& floats();

  bool operator==(const Tensor&) const = default;
};

Tensor make_float_tensor(std::string name, std::vector<int64_t> dims,
                         std::vector<float> data);
Tensor make_int64_tensor(std::string name, std::vector<int64_t> dims,
                         std::vector<int64_t> data);

struct Attribute {
  using Value = std::variant<float, int64_t, std::string, std::vector<float>,
                             std::vector<int64_t>, std::vector<std::string>,
                             Tensor>;
  std::string name;
  Value value;

  bool operator==(const Attribute&) const = default;
};

struct NodeDef {
  std::string op_type;
  std::string name;
  std::string domain;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<Attribute> attributes;

  const Attribute* find_attribute(std::string_view key) const;
  int64_t attr_int(std::string_view key, int64_t fallback) const;
  float attr_float(std::string_view key, float fallback) const;
  std::string attr_string(std::string_view key, std::string fallback) const;
  std::vector<int64_t> attr_ints(std::string_view key,
                                 std::vector<int64_t> fallback = {}) const;
  void set_attribute(std::string key, Attribute::Value value);

  // Name used in diagnostics: the node name, or op_type plus first output.
  std::string display_name() const;

  bool operator==(const NodeDef&) const = default;
};

// One dimension of a ValueInfo shape: either a concrete value or a symbol.
struct Dimension {
  std::optional<int64_t> value;
  std::string param;

  bool operator==(const Dimension&) const = default;
};

struct ValueInfo {
  std::string name;
  DataType elem_type = DataType::kFloat;
  bool has_type = true;
  std::optional<std::vector<Dimension>> shape;

  bool operator==(const ValueInfo&) const = default;
};

struct GraphDef {
  std::string name;
  std::vector<NodeDef> nodes;
  std::vector<ValueInfo> inputs;
  std::vector<ValueInfo> outputs;
  std::vector<Tensor> initializers;
  std::vector<ValueInfo> value_infos;

  const Tensor* find_initializer(std::string_view key) const;
  Tensor* find_initializer(std::string_view key);
  bool is_initializer(std::string_view key) const;

  bool operator==(const GraphDef&) const = default;
};

struct OpsetId {
  std::string domain;
  int64_t version = 0;

  bool operator==(const OpsetId&) const = default;
};

struct ModelArchive {
  int64_t ir_version = 8;
  std::vector<OpsetId> opset_imports;
  std::string producer_name;
  std::string producer_version;
  GraphDef graph;

  // Notes recorded while loading (dropped fields). Not part of equality.
  std::vector<std::string> load_warnings;

  int64_t opset_version(std::string_view domain = "") const;

  bool operator==(const ModelArchive& other) const {
    return ir_version == other.ir_version &&
           opset_imports == other.opset_imports &&
           producer_name == other.producer_name &&
           producer_version == other.producer_version && graph == other.graph;
  }
};

enum class Severity { kWarning, kError };

struct Diagnostic {
  Severity severity = Severity::kError;
  std::string node;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

std::string to_string(const Diagnostic& d);
bool has_errors(const std::vector<Diagnostic>& diags);

}  // namespace treeprune

#endif  // TREEPRUNE_MODEL_HPP_
