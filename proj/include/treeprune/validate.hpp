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

// Masked equivalence: a pruned model must compute exactly what the original
// computes once the pruned channels are zeroed in place.

#ifndef TREEPRUNE_VALIDATE_HPP_
#define TREEPRUNE_VALIDATE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "treeprune/model.hpp"
#include "treeprune/scoring.hpp"

namespace treeprune {

// Same-shape copy of `model` in which every pruned channel is silenced:
// producer filters and biases, BatchNorm scale and bias, and the leaf input
// slices reading the channel are set to zero.
ModelArchive mask_model(const ModelArchive& model, const PruningPlan& plan);

struct ValidationReport {
  int trials = 0;
  double tolerance = 0.0;
  uint64_t seed = 0;
  double max_deviation = 0.0;
  std::vector<double> per_trial;
  bool passed = false;
  // The deviation exceeded the tolerance, but an op on a pruned path mixes
  // channels, so the failure is reported as a warning.
  bool downgraded = false;
  std::vector<std::string> warnings;

  nlohmann::ordered_json to_json() const;
};

// Runs mask_model(original, plan) and `pruned` on `trials` seeded
// standard-normal inputs (batch 1) and compares every graph output. Outputs
// whose channels were pruned are compared at the kept positions only.
ValidationReport validate_equivalence(const ModelArchive& original, const PruningPlan& plan,
                                      const ModelArchive& pruned, int trials, double tolerance,
                                      uint64_t seed = 0);

}  // namespace treeprune

#endif  // TREEPRUNE_VALIDATE_HPP_
