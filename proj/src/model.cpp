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

#include "treeprune/model.hpp"

#include <algorithm>

#include "treeprune/errors.hpp"

namespace treeprune {

bool is_integer_type(DataType t) {
  switch (t) {
    case DataType::kUint8:
    case DataType::kInt8:
    case DataType::kUint16:
    case DataType::kInt16:
    case DataType::kInt32:
    case DataType::kInt64:
    case DataType::kBool:
      return true;
    default:
      return false;
  }
}

int64_t Tensor::num_elements() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

int64_t Tensor::stored_elements() const {
  if (dtype == DataType::kFloat) return static_cast<int64_t>(float_data.size());
  if (is_integer_type(dtype)) return static_cast<int64_t>(int_data.size());
  // Raw pass-through: size check only for fixed-width types we know.
  int64_t width = 0;
  switch (dtype) {
    case DataType::kFloat16: width = 2; break;
    case DataType::kDouble:
    case DataType::kUint64: width = 8; break;
    case DataType::kUint32: width = 4; break;
    default: return num_elements();
  }
  return static_cast<int64_t>(raw_data.size()) / width;
}

const std::vector<float>& Tensor::floats() const {
  if (dtype != DataType::kFloat) {
    throw UnsupportedDtype("initializer '" + name + "' has element type " +
                           std::to_string(static_cast<int>(dtype)) +
                           ", only float32 can be modified");
  }
  return float_data;
}

std::vector<float>& Tensor::floats() {
  return const_cast<std::vector<float>&>(std::as_const(*this).floats());
}

Tensor make_float_tensor(std::string name, std::vector<int64_t> dims,
                         std::vector<float> data) {
  Tensor t;
  t.name = std::move(name);
  t.dtype = DataType::kFloat;
  t.dims = std::move(dims);
  t.float_data = std::move(data);
  return t;
}

Tensor make_int64_tensor(std::string name, std::vector<int64_t> dims,
                         std::vector<int64_t> data) {
  Tensor t;
  t.name = std::move(name);
  t.dtype = DataType::kInt64;
  t.dims = std::move(dims);
  t.int_data = std::move(data);
  return t;
}

const Attribute* NodeDef::find_attribute(std::string_view key) const {
  for (const auto& a : attributes) {
    if (a.name == key) return &a;
  }
  return nullptr;
}

int64_t NodeDef::attr_int(std::string_view key, int64_t fallback) const {
  const Attribute* a = find_attribute(key);
  if (a == nullptr) return fallback;
  if (const auto* v = std::get_if<int64_t>(&a->value)) return *v;
  return fallback;
}

float NodeDef::attr_float(std::string_view key, float fallback) const {
  const Attribute* a = find_attribute(key);
  if (a == nullptr) return fallback;
  if (const auto* v = std::get_if<float>(&a->value)) return *v;
  return fallback;
}

std::string NodeDef::attr_string(std::string_view key,
                                 std::string fallback) const {
  const Attribute* a = find_attribute(key);
  if (a == nullptr) return fallback;
  if (const auto* v = std::get_if<std::string>(&a->value)) return *v;
  return fallback;
}

std::vector<int64_t> NodeDef::attr_ints(std::string_view key,
                                        std::vector<int64_t> fallback) const {
  const Attribute* a = find_attribute(key);
  if (a == nullptr) return fallback;
  if (const auto* v = std::get_if<std::vector<int64_t>>(&a->value)) return *v;
  return fallback;
}

void NodeDef::set_attribute(std::string key, Attribute::Value value) {
  for (auto& a : attributes) {
    if (a.name == key) {
      a.value = std::move(value);
      return;
    }
  }
  attributes.push_back(Attribute{std::move(key), std::move(value)});
}

std::string NodeDef::display_name() const {
  if (!name.empty()) return name;
  return op_type + (outputs.empty() ? std::string() : "(" + outputs[0] + ")");
}

const Tensor* GraphDef::find_initializer(std::string_view key) const {
  for (const auto& t : initializers) {
    if (t.name == key) return &t;
  }
  return nullptr;
}

Tensor* GraphDef::find_initializer(std::string_view key) {
  return const_cast<Tensor*>(std::as_const(*this).find_initializer(key));
}

bool GraphDef::is_initializer(std::string_view key) const {
  return find_initializer(key) != nullptr;
}

int64_t ModelArchive::opset_version(std::string_view domain) const {
  for (const auto& o : opset_imports) {
    if (o.domain == domain || (domain.empty() && o.domain == "ai.onnx")) {
      return o.version;
    }
  }
  return 0;
}

std::string to_string(const Diagnostic& d) {
  std::string out = d.severity == Severity::kError ? "error" : "warning";
  if (!d.node.empty()) out += " [" + d.node + "]";
  out += ": " + d.message;
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.severity == Severity::kError;
  });
}

}  // namespace treeprune
