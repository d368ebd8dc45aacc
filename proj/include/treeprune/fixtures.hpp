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

#ifndef TREEPRUNE_FIXTURES_HPP_
#define TREEPRUNE_FIXTURES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "treeprune/model.hpp"

namespace treeprune {

// Architecture description for synthesize_model.
//
// Templates:
//   conv_chain     Conv -> (Relu -> Conv) x (depth-1)
//   fire_module    squeeze Conv -> Relu -> {expand 1x1, expand 3x3} -> Concat
//                  -> classifier Conv -> GlobalAveragePool -> Flatten
//   residual_block Conv -> BatchNorm -> Add(1x1 projection Conv) -> Relu -> Conv
//   resnet_stage   stem Conv/BN/Relu + two identity-skip residual blocks + Gemm
//   one_to_one, one_to_many, many_to_one, many_to_many
//                  the four basic producer/consumer configurations
//   vgg16_cifar    13 Conv (3x3) + Gemm 512->256 + Gemm 256->10, 32x32 input
//   alexnet_cifar  5 Conv + Gemm 1024->4096->4096->10, 32x32 input
//
// Weights are uniform He-style draws scaled by a per-filter and a per-input
// channel log-normal factor, which gives the spread of filter norms seen in
// trained networks. Equal (name, depth, seed) give byte-identical models.
struct FixtureSpec {
  std::string name;
  int depth = 2;
  uint64_t seed = 0;
};

ModelArchive synthesize_model(const FixtureSpec& spec);

const std::vector<std::string>& fixture_templates();

}  // namespace treeprune

#endif  // TREEPRUNE_FIXTURES_HPP_
