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

#include "treeprune/validate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "treeprune/errors.hpp"
#include "treeprune/interp.hpp"

namespace treeprune {

namespace {

void zero_positions(Tensor& t, int axis, const std::vector<int64_t>& positions) {
  if (positions.empty()) return;
  auto& data = t.floats();
  if (axis < 0 || axis >= static_cast<int>(t.dims.size())) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for '" + t.name + "'");
  }
  int64_t outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= t.dims[k];
  for (size_t k = axis + 1; k < t.dims.size(); ++k) inner *= t.dims[k];
  const int64_t extent = t.dims[axis];
  for (int64_t p : positions) {
    if (p < 0 || p >= extent) throw IndexError("position outside '" + t.name + "'");
    for (int64_t o = 0; o < outer; ++o) {
      std::fill_n(data.begin() + (o * extent + p) * inner, inner, 0.0f);
    }
  }
}

Tensor& mutable_initializer(ModelArchive& m, const std::string& name) {
  Tensor* t = m.graph.find_initializer(name);
  if (t == nullptr) throw IndexError("no initializer named '" + name + "'");
  return *t;
}

TensorValue gather_axis(const TensorValue& v, int axis, const std::vector<int64_t>& removed) {
  if (removed.empty()) return v;
  const std::set<int64_t> drop(removed.begin(), removed.end());
  int64_t outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= v.dims[k];
  for (size_t k = axis + 1; k < v.dims.size(); ++k) inner *= v.dims[k];
  const int64_t extent = v.dims[axis];
  TensorValue out;
  out.dims = v.dims;
  out.dims[axis] = extent - static_cast<int64_t>(drop.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t j = 0; j < extent; ++j) {
      if (drop.count(j)) continue;
      const auto first = v.data.begin() + (o * extent + j) * inner;
      out.data.insert(out.data.end(), first, first + inner);
    }
  }
  return out;
}

}  // namespace

ModelArchive mask_model(const ModelArchive& model, const PruningPlan& plan) {
  ModelArchive out = model;
  for (const auto& g : plan.groups) {
    std::vector<int64_t> pruned;
    for (size_t i = 0; i < g.keep.size(); ++i) {
      if (!g.keep[i]) pruned.push_back(static_cast<int64_t>(i));
    }
    if (pruned.empty()) continue;
    const GroupFlow& f = g.flow;
    for (const auto& p : f.producers) {
      zero_positions(mutable_initializer(out, p.weight), p.out_axis, pruned);
      if (!p.bias.empty()) zero_positions(mutable_initializer(out, p.bias), p.bias_axis, pruned);
    }
    for (const auto& s : f.sides) {
      if (s.batchnorm_scale_or_bias) {
        zero_positions(mutable_initializer(out, s.initializer), s.axis,
                       removed_positions(s.map, g.keep));
      }
    }
    for (const auto& l : f.leaves) {
      zero_positions(mutable_initializer(out, l.weight), l.in_axis, removed_positions(l.map, g.keep));
    }
  }
  return out;
}

nlohmann::ordered_json ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["trials"] = trials;
  j["tolerance"] = tolerance;
  j["seed"] = seed;
  // JSON has no infinity; a non-finite deviation is reported as null.
  auto finite_or_null = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  j["max_deviation"] = finite_or_null(max_deviation);
  j["per_trial"] = nlohmann::ordered_json::array();
  for (double d : per_trial) j["per_trial"].push_back(finite_or_null(d));
  j["passed"] = passed;
  j["downgraded"] = downgraded;
  j["warnings"] = warnings;
  return j;
}

ValidationReport validate_equivalence(const ModelArchive& original, const PruningPlan& plan,
                                      const ModelArchive& pruned, int trials, double tolerance,
                                      uint64_t seed) {
  ValidationReport report;
  report.trials = trials;
  report.tolerance = tolerance;
  report.seed = seed;
  bool mixes = false;
  // Removed positions per graph output, merged across groups.
  std::map<std::string, std::pair<int, std::vector<int64_t>>> output_cuts;
  for (const auto& g : plan.groups) {
    mixes = mixes || g.flow.mixes_channels;
    for (const auto& w : g.flow.warnings) report.warnings.push_back(w);
    for (const auto& site : g.flow.outputs) {
      auto& [axis, removed] = output_cuts[site.tensor];
      axis = site.axis;
      const auto r = removed_positions(site.map, g.keep);
      removed.insert(removed.end(), r.begin(), r.end());
    }
  }
  for (auto& [name, cut] : output_cuts) std::sort(cut.second.begin(), cut.second.end());

  const ModelArchive masked = mask_model(original, plan);
  const double inf = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < trials; ++trial) {
    const TensorMap inputs = random_inputs(original, seed + static_cast<uint64_t>(trial));
    const TensorMap expected = run(masked, inputs);
    const TensorMap actual = run(pruned, inputs);
    double worst = 0.0;
    for (const auto& [name, got] : actual) {
      auto it = expected.find(name);
      if (it == expected.end()) {
        worst = inf;
        report.warnings.push_back("output '" + name + "' is missing from the original model");
        continue;
      }
      TensorValue want = it->second;
      if (auto cut = output_cuts.find(name); cut != output_cuts.end()) {
        want = gather_axis(want, cut->second.first, cut->second.second);
      }
      if (want.dims != got.dims) {
        worst = inf;
        report.warnings.push_back("output '" + name + "' changed shape");
        continue;
      }
      for (size_t e = 0; e < got.data.size(); ++e) {
        const double d = std::fabs(static_cast<double>(got.data[e]) - want.data[e]);
        worst = std::isnan(d) ? inf : std::max(worst, d);
      }
    }
    report.per_trial.push_back(worst);
    report.max_deviation = std::max(report.max_deviation, worst);
  }
  report.passed = report.max_deviation <= tolerance;
  if (!report.passed && mixes) {
    report.passed = true;
    report.downgraded = true;
    report.warnings.push_back("deviation above tolerance attributed to channel-mixing ops on a "
                              "pruned path");
  }
  return report;
}

}  // namespace treeprune
