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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "support.hpp"
#include "treeprune/errors.hpp"
#include "treeprune/fixtures.hpp"
#include "treeprune/model_io.hpp"

namespace tp = treeprune;
namespace tt = treeprune::testing;

namespace {

// Minimal protobuf writer, independent of the library's codec.
std::string varint(uint64_t v) {
  std::string out;
  while (v >= 0x80) {
    out.push_back(static_cast<char>((v & 0x7f) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
  return out;
}
std::string key(int field, int wire) { return varint(static_cast<uint64_t>(field) << 3 | wire); }
std::string len_field(int field, const std::string& payload) {
  return key(field, 2) + varint(payload.size()) + payload;
}
std::string int_field(int field, uint64_t v) { return key(field, 0) + varint(v); }

// ModelProto with one raw_data float initializer feeding a Relu.
std::string raw_data_model(bool with_doc_string) {
  const float values[3] = {1.5f, -2.0f, 0.25f};
  std::string raw(reinterpret_cast<const char*>(values), sizeof(values));
  const std::string tensor = int_field(1, 3) + int_field(2, 1) + len_field(8, "w") + len_field(9, raw);
  const std::string node = len_field(1, "w") + len_field(2, "y") + len_field(3, "relu") +
                           len_field(4, "Relu");
  auto value_info = [](const std::string& name) {
    const std::string dim = int_field(1, 3);
    const std::string shape = len_field(1, dim);
    const std::string tensor_type = int_field(1, 1) + len_field(2, shape);
    const std::string type = len_field(1, tensor_type);
    return len_field(1, name) + len_field(2, type);
  };
  const std::string graph = len_field(1, node) + len_field(2, "g") + len_field(5, tensor) +
                            len_field(12, value_info("y"));
  std::string model = int_field(1, 8);
  if (with_doc_string) model += len_field(6, "a doc string");
  model += len_field(7, graph) + len_field(8, int_field(2, 13));
  return model;
}

}  // namespace

TEST_CASE("every fixture survives serialize/parse unchanged") {
  for (const auto& name : tp::fixture_templates()) {
    CAPTURE(name);
    const tp::ModelArchive m = tp::synthesize_model({name, 2, 3});
    const std::string bytes = tp::serialize_model(m);
    const tp::ModelArchive back = tp::parse_model(bytes);
    CHECK(back == m);
    CHECK(tp::serialize_model(back) == bytes);
    CHECK(back.load_warnings.empty());
  }
}

TEST_CASE("raw_data initializers decode to floats") {
  const tp::ModelArchive m = tp::parse_model(raw_data_model(false));
  REQUIRE(m.graph.initializers.size() == 1);
  const tp::Tensor& t = m.graph.initializers[0];
  CHECK(t.name == "w");
  CHECK(t.dims == std::vector<int64_t>{3});
  CHECK(t.float_data == std::vector<float>{1.5f, -2.0f, 0.25f});
  CHECK(m.graph.nodes.at(0).op_type == "Relu");
  CHECK(m.opset_version() == 13);
  CHECK_FALSE(tp::has_errors(tp::validate_syntax(m)));
}

TEST_CASE("unmodeled fields are dropped with a warning") {
  const tp::ModelArchive m = tp::parse_model(raw_data_model(true));
  CHECK_FALSE(m.load_warnings.empty());
}

TEST_CASE("malformed bytes raise ParseError") {
  const std::string good = raw_data_model(false);
  CHECK_THROWS_AS(tp::parse_model(good.substr(0, good.size() - 3)), tp::ParseError);
  CHECK_THROWS_AS(tp::parse_model("garbage\n"), tp::ParseError);
  CHECK_THROWS_AS(tp::parse_model(std::string("\x3a\xff\xff\xff\xff\x0f", 6)), tp::ParseError);
}

TEST_CASE("raw_data whose size disagrees with dims is rejected") {
  const float values[2] = {1.0f, 2.0f};
  std::string raw(reinterpret_cast<const char*>(values), sizeof(values));
  const std::string tensor = int_field(1, 3) + int_field(2, 1) + len_field(8, "w") + len_field(9, raw);
  const std::string graph = len_field(2, "g") + len_field(5, tensor);
  const std::string bytes = int_field(1, 8) + len_field(7, graph);
  bool rejected = false;
  try {
    const tp::ModelArchive m = tp::parse_model(bytes);
    rejected = tp::has_errors(tp::validate_syntax(m));
  } catch (const tp::Error&) {
    rejected = true;
  }
  CHECK(rejected);
}

TEST_CASE("validate_syntax reports structural errors") {
  tp::ModelArchive m = tp::synthesize_model({"conv_chain", 2, 1});
  CHECK_FALSE(tp::has_errors(tp::validate_syntax(m)));

  SUBCASE("dangling input") {
    m.graph.nodes[1].inputs[0] = "nowhere";
    CHECK(tp::has_errors(tp::validate_syntax(m)));
  }
  SUBCASE("tensor produced twice") {
    m.graph.nodes[2].outputs[0] = m.graph.nodes[0].outputs[0];
    CHECK(tp::has_errors(tp::validate_syntax(m)));
  }
  SUBCASE("initializer element count mismatch") {
    m.graph.initializers[0].float_data.pop_back();
    CHECK(tp::has_errors(tp::validate_syntax(m)));
  }
  SUBCASE("missing graph output") {
    m.graph.outputs[0].name = "not_produced";
    CHECK(tp::has_errors(tp::validate_syntax(m)));
  }
  SUBCASE("opset outside the tested range warns only") {
    CHECK(tp::validate_syntax(m).empty());
    m.opset_imports[0].version = 9;
    const auto d = tp::validate_syntax(m);
    REQUIRE(d.size() == 1);
    CHECK(d[0].severity == tp::Severity::kWarning);
    CHECK_FALSE(tp::has_errors(d));
  }
}

TEST_CASE("save_model refuses invalid models and load_model reports missing files") {
  const auto dir = std::filesystem::temp_directory_path();
  tp::ModelArchive m = tp::synthesize_model({"conv_chain", 2, 1});
  const auto path = dir / "treeprune_io_test.onnx";
  tp::save_model(m, path);
  CHECK(tp::load_model(path) == m);
  m.graph.nodes[1].inputs[0] = "nowhere";
  CHECK_THROWS_AS(tp::save_model(m, dir / "treeprune_io_bad.onnx"), tp::ValidationError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(tp::load_model(dir / "treeprune_does_not_exist.onnx"), tp::IoError);
}

TEST_CASE("synthesis is deterministic and seed-sensitive") {
  const auto a = tp::serialize_model(tp::synthesize_model({"fire_module", 2, 11}));
  const auto b = tp::serialize_model(tp::synthesize_model({"fire_module", 2, 11}));
  const auto c = tp::serialize_model(tp::synthesize_model({"fire_module", 2, 12}));
  CHECK(a == b);
  CHECK(a != c);
  CHECK_THROWS_AS(tp::synthesize_model({"no_such_net", 2, 0}), tp::UnknownTemplate);
}
