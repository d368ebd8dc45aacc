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

#ifndef TREEPRUNE_MODEL_IO_HPP_
#define TREEPRUNE_MODEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "treeprune/model.hpp"

namespace treeprune {

// Protocol Buffers wire encoding of ModelProto. Tensors are always emitted
// with typed fields (float_data / int64_data / int32_data); raw_data is only
// used for element types kept as opaque bytes.
std::string serialize_model(const ModelArchive& model);

// Accepts both raw_data and typed-field tensor encodings. Throws ParseError on
// malformed wire data. Unmodeled fields are dropped and listed in
// ModelArchive::load_warnings.
ModelArchive parse_model(std::string_view bytes);

ModelArchive load_model(const std::filesystem::path& path);

// Runs validate_syntax first and throws ValidationError if it reports errors.
void save_model(const ModelArchive& model, const std::filesystem::path& path);

// Default-domain opsets outside this range load but draw a warning.
inline constexpr int64_t kMinOpset = 11;
inline constexpr int64_t kMaxOpset = 17;

// Structural checks over the graph. Never throws.
std::vector<Diagnostic> validate_syntax(const ModelArchive& model);

}  // namespace treeprune

#endif  // TREEPRUNE_MODEL_IO_HPP_
