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

// Reference interpreter: direct arithmetic, float64 accumulation, float32
// storage. Slow on purpose; its job is to be easy to check.

#ifndef TREEPRUNE_INTERP_HPP_
#define TREEPRUNE_INTERP_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "treeprune/model.hpp"

namespace treeprune {

struct TensorValue {
  std::vector<int64_t> dims;
  std::vector<float> data;  // row-major

  int64_t elements() const;
  bool operator==(const TensorValue&) const = default;
};

using TensorMap = std::map<std::string, TensorValue>;

bool interpreter_supports(const std::string& op_type);

// Evaluates the graph in topological order and returns the graph outputs.
// Throws UnsupportedOp for an op outside the supported set and ShapeMismatch
// for inconsistent operands or missing inputs.
TensorMap run(const ModelArchive& model, const TensorMap& inputs);
// Same, returning every tensor produced (graph inputs included).
TensorMap run_all(const ModelArchive& model, const TensorMap& inputs);

// Standard-normal values for every non-initializer graph input; a symbolic
// dimension takes the value `batch`.
TensorMap random_inputs(const ModelArchive& model, uint64_t seed, int64_t batch = 1);

}  // namespace treeprune

#endif  // TREEPRUNE_INTERP_HPP_
