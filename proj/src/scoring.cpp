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

#include "treeprune/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "treeprune/errors.hpp"

namespace treeprune {

std::string_view to_string(NormKind k) { return k == NormKind::kL1 ? "l1" : "l2"; }
std::string_view to_string(ScoreMode m) {
  return m == ScoreMode::kTreeLevel ? "tree" : "single";
}

std::optional<NormKind> parse_norm_kind(std::string_view text) {
  if (text == "l1" || text == "L1") return NormKind::kL1;
  if (text == "l2" || text == "L2") return NormKind::kL2;
  return std::nullopt;
}

std::optional<ScoreMode> parse_score_mode(std::string_view text) {
  if (text == "tree") return ScoreMode::kTreeLevel;
  if (text == "single") return ScoreMode::kSingleNode;
  return std::nullopt;
}

namespace {

struct AxisSplit {
  int64_t outer = 1;
  int64_t extent = 1;
  int64_t inner = 1;
};

AxisSplit split_at(const Tensor& w, int axis) {
  if (axis < 0 || axis >= static_cast<int>(w.dims.size())) {
    throw AxisError("axis " + std::to_string(axis) + " out of range for '" + w.name + "' of rank " +
                    std::to_string(w.dims.size()));
  }
  AxisSplit s;
  for (int k = 0; k < axis; ++k) s.outer *= w.dims[k];
  s.extent = w.dims[axis];
  for (size_t k = axis + 1; k < w.dims.size(); ++k) s.inner *= w.dims[k];
  return s;
}

double finish(double acc, NormKind kind) { return kind == NormKind::kL1 ? acc : std::sqrt(acc); }

double term(float v, NormKind kind) {
  const double d = v;
  return kind == NormKind::kL1 ? std::fabs(d) : d * d;
}

}  // namespace

double slice_norm(const Tensor& w, int axis, const std::vector<int64_t>& indices, NormKind kind) {
  const auto& data = w.floats();
  const AxisSplit s = split_at(w, axis);
  double acc = 0.0;
  for (int64_t j : indices) {
    if (j < 0 || j >= s.extent) {
      throw IndexError("index " + std::to_string(j) + " outside axis " + std::to_string(axis) +
                       " of '" + w.name + "'");
    }
    for (int64_t o = 0; o < s.outer; ++o) {
      const float* p = data.data() + (o * s.extent + j) * s.inner;
      for (int64_t e = 0; e < s.inner; ++e) acc += term(p[e], kind);
    }
  }
  return finish(acc, kind);
}

std::vector<double> filter_norms(const Tensor& w, int axis, NormKind kind) {
  const auto& data = w.floats();
  const AxisSplit s = split_at(w, axis);
  std::vector<double> acc(s.extent, 0.0);
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t j = 0; j < s.extent; ++j) {
      const float* p = data.data() + (o * s.extent + j) * s.inner;
      double a = 0.0;
      for (int64_t e = 0; e < s.inner; ++e) a += term(p[e], kind);
      acc[j] += a;
    }
  }
  for (auto& v : acc) v = finish(v, kind);
  return acc;
}

std::vector<double> leaf_norm_sums(const Tensor& w, int in_axis, int out_axis,
                                   const IndexMap& map, NormKind kind) {
  const auto& data = w.floats();
  const AxisSplit in = split_at(w, in_axis);
  const AxisSplit out = split_at(w, out_axis);
  if (in_axis == out_axis) throw AxisError("input and output axes coincide for '" + w.name + "'");
  const size_t channels = map.size();
  std::vector<int64_t> owner(in.extent, -1);
  for (size_t i = 0; i < channels; ++i) {
    for (int64_t p : map[i]) {
      if (p < 0 || p >= in.extent) {
        throw IndexError("position " + std::to_string(p) + " outside axis " +
                         std::to_string(in_axis) + " of '" + w.name + "'");
      }
      owner[p] = static_cast<int64_t>(i);
    }
  }
  // acc[k * channels + i] accumulates the slice of leaf filter k read by channel i.
  std::vector<double> acc(static_cast<size_t>(out.extent) * channels, 0.0);
  const int64_t total = static_cast<int64_t>(data.size());
  for (int64_t e = 0; e < total; ++e) {
    const int64_t i = owner[(e / in.inner) % in.extent];
    if (i < 0) continue;
    const int64_t k = (e / out.inner) % out.extent;
    acc[k * channels + i] += term(data[e], kind);
  }
  std::vector<double> sums(channels, 0.0);
  for (int64_t k = 0; k < out.extent; ++k) {
    for (size_t i = 0; i < channels; ++i) sums[i] += finish(acc[k * channels + i], kind);
  }
  return sums;
}

namespace {

const Tensor& initializer(const ModelArchive& model, const std::string& name) {
  const Tensor* t = model.graph.find_initializer(name);
  if (t == nullptr) throw IndexError("no initializer named '" + name + "'");
  return *t;
}

std::vector<double> producer_term(const ModelArchive& model, const GroupFlow& flow,
                                  NormKind kind) {
  std::vector<double> acc(flow.channels, 0.0);
  for (const auto& p : flow.producers) {
    const auto norms = filter_norms(initializer(model, p.weight), p.out_axis, kind);
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += norms[i];
  }
  return acc;
}

}  // namespace

ScoreVector tree_score(const ModelArchive& model, const GroupFlow& flow, NormKind kind) {
  ScoreVector s;
  s.values = producer_term(model, flow, kind);
  if (flow.leaves.empty()) {
    s.diagnostic = "no consumer leaves; scored by producer norms only";
    return s;
  }
  std::vector<double> leaf(flow.channels, 0.0);
  for (const auto& l : flow.leaves) {
    const auto sums = leaf_norm_sums(initializer(model, l.weight), l.in_axis, l.out_axis, l.map, kind);
    for (size_t i = 0; i < leaf.size(); ++i) leaf[i] += sums[i];
  }
  for (size_t i = 0; i < s.values.size(); ++i) s.values[i] *= leaf[i];
  return s;
}

ScoreVector single_node_score(const ModelArchive& model, const GroupFlow& flow, NormKind kind) {
  ScoreVector s;
  s.values = producer_term(model, flow, kind);
  return s;
}

int64_t prune_count(double ratio, int64_t channels) {
  if (channels <= 0) return 0;
  const auto n = static_cast<int64_t>(std::round(ratio * static_cast<double>(channels)));
  return std::clamp<int64_t>(n, 0, channels - 1);
}

std::vector<bool> select_channels(const std::vector<double>& scores, double ratio) {
  const auto c = static_cast<int64_t>(scores.size());
  std::vector<int64_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a > b;
  });
  std::vector<bool> keep(c, true);
  const int64_t n = prune_count(ratio, c);
  for (int64_t k = 0; k < n; ++k) keep[order[k]] = false;
  return keep;
}

double overlap_index(const std::set<int64_t>& a, const std::set<int64_t>& b) {
  if (b.empty()) throw EmptyReference("reference index set is empty");
  size_t common = 0;
  for (int64_t v : b) common += a.count(v);
  return static_cast<double>(common) / static_cast<double>(b.size());
}

ModelAnalysis analyze_model(const ModelArchive& model, const AttributeRegistry& registry,
                            const std::map<std::string, TensorShape>& input_shapes) {
  ModelAnalysis a;
  a.graph = build_graph(model);
  a.shapes = infer_shapes(model, a.graph, input_shapes);
  a.trees = build_all_trees(a.graph, registry);
  a.groups = merge_groups(a.graph, registry, a.trees);
  return a;
}

std::set<int64_t> GroupPlan::pruned() const {
  std::set<int64_t> out;
  for (size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) out.insert(static_cast<int64_t>(i));
  }
  return out;
}

const GroupPlan* PruningPlan::find(const std::vector<std::string>& members) const {
  for (const auto& g : groups) {
    if (g.members == members) return &g;
  }
  return nullptr;
}

namespace {

std::vector<std::string> member_names(const NodeGraph& graph, const PruningGroup& g) {
  std::vector<std::string> out;
  for (int m : g.members) out.push_back(graph.nodes[m].display_name());
  return out;
}

void add_note(std::vector<std::string>& notes, const std::string& n) {
  if (std::find(notes.begin(), notes.end(), n) == notes.end()) notes.push_back(n);
}

}  // namespace

PruningPlan make_plan(const ModelArchive& model, const ModelAnalysis& analysis,
                      const AttributeRegistry& registry, const PlanOptions& options) {
  if (!(options.ratio >= 0.0 && options.ratio < 1.0)) {
    throw std::invalid_argument("pruning ratio must lie in [0, 1)");
  }
  PruningPlan plan;
  plan.ratio = options.ratio;
  plan.norm = options.norm;
  plan.mode = options.mode;
  std::vector<GroupPlan> pending;
  for (const auto& g : analysis.groups) {
    const auto names = member_names(analysis.graph, g);
    for (const auto& t : g.trees) {
      for (const auto& n : t.notes) add_note(plan.notes, n);
    }
    if (g.blocked) {
      plan.excluded.push_back({g.id, names, *g.blocked});
      continue;
    }
    if (g.reaches_output && !options.include_classifier) {
      plan.excluded.push_back({g.id, names, "channels reach a graph output"});
      continue;
    }
    GroupPlan gp;
    try {
      gp.flow = analyze_flow(model, analysis.graph, analysis.shapes, registry, g);
    } catch (const UnsupportedRewrite& e) {
      plan.excluded.push_back({g.id, names, e.what()});
      continue;
    } catch (const UnsupportedOpShape& e) {
      plan.excluded.push_back({g.id, names, e.what()});
      continue;
    }
    gp.id = g.id;
    gp.members = names;
    pending.push_back(std::move(gp));
  }

  // Groups are scored independently; results land in fixed slots so the plan
  // does not depend on the thread count.
  std::vector<ScoreVector> scores(pending.size());
  auto score_range = [&](size_t begin, size_t step) {
    for (size_t i = begin; i < pending.size(); i += step) {
      scores[i] = options.mode == ScoreMode::kTreeLevel
                      ? tree_score(model, pending[i].flow, options.norm)
                      : single_node_score(model, pending[i].flow, options.norm);
    }
  };
  const size_t workers =
      std::min(pending.size(), static_cast<size_t>(std::max(1, options.threads)));
  if (workers <= 1) {
    score_range(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          score_range(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (size_t i = 0; i < pending.size(); ++i) {
    GroupPlan& gp = pending[i];
    ScoreVector& s = scores[i];
    if (s.diagnostic) add_note(plan.notes, gp.members.front() + ": " + *s.diagnostic);
    for (const auto& w : gp.flow.warnings) add_note(plan.notes, w);
    gp.keep = select_channels(s.values, options.ratio);
    gp.scores = std::move(s.values);
    plan.groups.push_back(std::move(gp));
  }
  return plan;
}

nlohmann::ordered_json plan_to_json(const PruningPlan& plan) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["ratio"] = plan.ratio;
  j["criterion"] = {{"norm", std::string(to_string(plan.norm))},
                    {"mode", std::string(to_string(plan.mode))}};
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : plan.groups) {
    nlohmann::ordered_json e;
    e["id"] = g.id;
    e["members"] = g.members;
    e["keep"] = g.keep;
    e["scores"] = g.scores;
    j["groups"].push_back(std::move(e));
  }
  j["excluded"] = nlohmann::ordered_json::array();
  for (const auto& x : plan.excluded) {
    j["excluded"].push_back({{"id", x.id}, {"members", x.members}, {"reason", x.reason}});
  }
  j["notes"] = plan.notes;
  return j;
}

PruningPlan plan_from_json(const nlohmann::json& j, const ModelArchive& model,
                           const ModelAnalysis& analysis, const AttributeRegistry& registry) {
  PruningPlan plan;
  try {
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported plan version");
    plan.ratio = j.at("ratio").get<double>();
    const auto& crit = j.at("criterion");
    auto norm = parse_norm_kind(crit.at("norm").get<std::string>());
    auto mode = parse_score_mode(crit.at("mode").get<std::string>());
    if (!norm || !mode) throw ParseError("unknown criterion in plan");
    plan.norm = *norm;
    plan.mode = *mode;
    if (j.contains("notes")) plan.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& e : j.at("groups")) {
      GroupPlan gp;
      gp.id = e.at("id").get<int>();
      gp.members = e.at("members").get<std::vector<std::string>>();
      gp.keep = e.at("keep").get<std::vector<bool>>();
      if (e.contains("scores")) gp.scores = e.at("scores").get<std::vector<double>>();
      const PruningGroup* match = nullptr;
      for (const auto& g : analysis.groups) {
        if (member_names(analysis.graph, g) == gp.members) match = &g;
      }
      if (match == nullptr) {
        throw ParseError("plan group " + std::to_string(gp.id) + " does not match any group");
      }
      if (static_cast<int64_t>(gp.keep.size()) != match->channels) {
        throw ParseError("plan group " + std::to_string(gp.id) + " keeps " +
                         std::to_string(gp.keep.size()) + " flags for " +
                         std::to_string(match->channels) + " channels");
      }
      if (std::find(gp.keep.begin(), gp.keep.end(), true) == gp.keep.end()) {
        throw ParseError("plan group " + std::to_string(gp.id) + " keeps no channel");
      }
      gp.flow = analyze_flow(model, analysis.graph, analysis.shapes, registry, *match);
      plan.groups.push_back(std::move(gp));
    }
    if (j.contains("excluded")) {
      for (const auto& e : j.at("excluded")) {
        plan.excluded.push_back({e.at("id").get<int>(),
                                 e.at("members").get<std::vector<std::string>>(),
                                 e.at("reason").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed plan: ") + e.what());
  }
  return plan;
}

}  // namespace treeprune
