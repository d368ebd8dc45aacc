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

// treeprune: command-line front end.
//
// Exit codes: 0 success, 1 validation or numeric failure, 2 usage or input
// error.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "treeprune/assoc_tree.hpp"
#include "treeprune/attributes.hpp"
#include "treeprune/errors.hpp"
#include "treeprune/fixtures.hpp"
#include "treeprune/graph.hpp"
#include "treeprune/model_io.hpp"
#include "treeprune/report.hpp"
#include "treeprune/rewriter.hpp"
#include "treeprune/scoring.hpp"
#include "treeprune/validate.hpp"

namespace tp = treeprune;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RunConfig {
  std::string model;
  std::string second_model;
  std::string output;
  double ratio = 0.5;
  std::string criterion = "l1";
  std::string mode = "tree";
  bool include_classifier = false;
  std::string registry;
  uint64_t seed = 0;
  int trials = 8;
  double tolerance = 1e-5;
  std::string format = "text";
  std::string plan_in;
  std::string plan_out;
  std::string reference;
  std::string masked_out;
  std::vector<std::string> input_shapes;
  int threads = 1;
  // synth
  std::string template_name;
  int depth = 2;
};

int default_threads() {
  if (const char* env = std::getenv("TREEPRUNE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring TREEPRUNE_THREADS='" << env << "'\n";
  }
  return 1;
}

// "name=1,3,32,32"
std::map<std::string, tp::TensorShape> parse_input_shapes(const std::vector<std::string>& specs) {
  std::map<std::string, tp::TensorShape> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("--input-shape expects name=d0,d1,..., got '" + s + "'");
    }
    tp::TensorShape shape;
    std::stringstream dims(s.substr(eq + 1));
    std::string d;
    while (std::getline(dims, d, ',')) {
      try {
        size_t used = 0;
        const long long v = std::stoll(d, &used);
        if (used != d.size() || v <= 0) throw std::invalid_argument(d);
        shape.dims.push_back(v);
      } catch (const std::exception&) {
        throw std::invalid_argument("bad dimension '" + d + "' in --input-shape " + s);
      }
    }
    if (shape.dims.empty()) throw std::invalid_argument("empty --input-shape " + s);
    out[s.substr(0, eq)] = shape;
  }
  return out;
}

tp::AttributeRegistry load_registry(const RunConfig& c) {
  tp::AttributeRegistry reg;
  if (!c.registry.empty()) reg = tp::load_registry_extensions(reg, c.registry);
  return reg;
}

tp::PlanOptions plan_options(const RunConfig& c) {
  tp::PlanOptions o;
  o.ratio = c.ratio;
  o.norm = *tp::parse_norm_kind(c.criterion);
  o.mode = *tp::parse_score_mode(c.mode);
  o.include_classifier = c.include_classifier;
  o.threads = c.threads;
  return o;
}

void print_load_warnings(const tp::ModelArchive& m) {
  for (const auto& w : m.load_warnings) std::cerr << "warning: " << w << "\n";
}

tp::PruningPlan read_plan(const std::string& path, const tp::ModelArchive& model,
                          const tp::ModelAnalysis& analysis, const tp::AttributeRegistry& reg) {
  std::ifstream in(path);
  if (!in) throw tp::IoError("cannot open plan '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw tp::ParseError("plan '" + path + "': " + e.what());
  }
  return tp::plan_from_json(j, model, analysis, reg);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tp::IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw tp::IoError("write failed for '" + path + "'");
}

std::string shape_text(const tp::ShapeEnv& shapes, const std::string& t) {
  return shapes.has(t) ? tp::to_string(shapes.at(t)) : "?";
}

// Per-root trees, skipping roots whose traversal meets an unknown operator.
std::map<int, tp::AssocTree> tolerant_trees(const tp::NodeGraph& g,
                                            const tp::AttributeRegistry& reg,
                                            std::vector<std::string>& warnings) {
  std::map<int, tp::AssocTree> trees;
  for (int idx : g.topo_order) {
    const auto& n = g.nodes[idx];
    if (!reg.knows(n.op_type)) continue;
    if (tp::classify_node(reg, g, idx, tp::TraversalRole::kRoot) != tp::NodeAttribute::kPruned) {
      continue;
    }
    try {
      trees.emplace(idx, tp::build_tree(g, reg, idx));
    } catch (const tp::UnknownOperator& e) {
      warnings.push_back(n.display_name() + " is not prunable: " + e.what());
    }
  }
  return trees;
}

int cmd_inspect(const RunConfig& c) {
  const tp::ModelArchive model = tp::load_model(c.model);
  print_load_warnings(model);
  const auto diags = tp::validate_syntax(model);
  for (const auto& d : diags) std::cerr << tp::to_string(d) << "\n";
  if (tp::has_errors(diags)) return kExitUsage;

  const tp::AttributeRegistry reg = load_registry(c);
  const tp::NodeGraph g = tp::build_graph(model);
  const tp::ShapeEnv shapes = tp::infer_shapes(model, g, parse_input_shapes(c.input_shapes));

  std::set<std::string> unknown;
  std::vector<std::string> warnings;
  for (const auto& n : g.nodes) {
    if (!reg.knows(n.op_type)) unknown.insert(n.op_type);
  }
  const auto trees = tolerant_trees(g, reg, warnings);
  std::vector<tp::PruningGroup> groups = tp::merge_groups(g, reg, trees);
  std::set<int> prunable;
  for (const auto& grp : groups) {
    if (grp.blocked || grp.reaches_output) continue;
    prunable.insert(grp.members.begin(), grp.members.end());
  }
  std::map<std::string, int> op_counts;
  for (const auto& n : g.nodes) ++op_counts[n.op_type];

  nlohmann::ordered_json j;
  j["graph"] = model.graph.name;
  j["nodes"] = nlohmann::ordered_json::array();
  for (int idx : g.topo_order) {
    const auto& n = g.nodes[idx];
    std::string attr = "unknown";
    std::string note;
    if (reg.knows(n.op_type)) {
      attr = std::string(tp::to_string(tp::classify_node(reg, g, idx, tp::TraversalRole::kRoot, &note)));
    }
    nlohmann::ordered_json e;
    e["name"] = n.display_name();
    e["op_type"] = n.op_type;
    e["attribute"] = attr;
    e["prunable"] = prunable.count(idx) != 0;
    e["output_shape"] = n.outputs.empty() ? "-" : shape_text(shapes, n.outputs[0]);
    if (!note.empty()) e["note"] = note;
    j["nodes"].push_back(std::move(e));
  }
  j["op_counts"] = op_counts;
  j["prunable_nodes"] = prunable.size();
  j["unknown_ops"] = unknown;
  j["warnings"] = warnings;

  for (const auto& op : unknown) {
    std::cerr << "warning: unknown operator '" << op
              << "'; its paths are not traversed (register it with --registry)\n";
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  if (c.format == "json") {
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  size_t wn = 4, wo = 2, wa = 9;
  for (const auto& e : j["nodes"]) {
    wn = std::max(wn, e["name"].get<std::string>().size());
    wo = std::max(wo, e["op_type"].get<std::string>().size());
    wa = std::max(wa, e["attribute"].get<std::string>().size());
  }
  auto pad = [](std::string s, size_t w) { return s.append(w > s.size() ? w - s.size() : 0, ' '); };
  std::cout << pad("name", wn) << "  " << pad("op", wo) << "  " << pad("attribute", wa)
            << "  prunable  output\n";
  for (const auto& e : j["nodes"]) {
    std::cout << pad(e["name"].get<std::string>(), wn) << "  "
              << pad(e["op_type"].get<std::string>(), wo) << "  "
              << pad(e["attribute"].get<std::string>(), wa) << "  " << pad(e["prunable"].get<bool>() ? "yes" : "no", 8)
              << "  " << e["output_shape"].get<std::string>() << "\n";
  }
  std::cout << "\n";
  for (const auto& [op, count] : op_counts) std::cout << op << ": " << count << "\n";
  std::cout << "prunable nodes: " << prunable.size() << "\n";
  return kExitOk;
}

int cmd_tree(const RunConfig& c) {
  const tp::ModelArchive model = tp::load_model(c.model);
  print_load_warnings(model);
  const tp::AttributeRegistry reg = load_registry(c);
  const tp::NodeGraph g = tp::build_graph(model);
  const auto trees = tp::build_all_trees(g, reg);
  const auto groups = tp::merge_groups(g, reg, trees);
  if (c.format == "dot") {
    for (const auto& [root, tree] : trees) std::cout << tp::tree_to_dot(g, tree);
    return kExitOk;
  }
  nlohmann::ordered_json j;
  j["trees"] = nlohmann::ordered_json::array();
  for (const auto& [root, tree] : trees) j["trees"].push_back(tp::tree_to_json(g, tree));
  j["groups"] = tp::groups_to_json(g, groups);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_prune(const RunConfig& c) {
  const tp::ModelArchive model = tp::load_model(c.model);
  print_load_warnings(model);
  const tp::AttributeRegistry reg = load_registry(c);
  const tp::ModelAnalysis analysis =
      tp::analyze_model(model, reg, parse_input_shapes(c.input_shapes));
  const tp::PruningPlan plan = c.plan_in.empty()
                                   ? tp::make_plan(model, analysis, reg, plan_options(c))
                                   : read_plan(c.plan_in, model, analysis, reg);
  for (const auto& x : plan.excluded) {
    std::cerr << "note: group " << x.id << " (" << x.members.front() << ") left intact: " << x.reason
              << "\n";
  }
  for (const auto& n : plan.notes) std::cerr << "note: " << n << "\n";
  const tp::RewriteResult result = tp::apply_plan_detailed(model, plan);
  tp::save_model(result.model, c.output);
  if (!c.plan_out.empty()) write_text(c.plan_out, tp::plan_to_json(plan).dump(2) + "\n");
  if (!c.masked_out.empty()) tp::save_model(tp::mask_model(model, plan), c.masked_out);

  const tp::PruneReport rep = tp::summarize(model, result.model, &plan);
  if (c.format == "json") {
    nlohmann::ordered_json j;
    j["output"] = c.output;
    j["groups_pruned"] = plan.groups.size();
    j["groups_excluded"] = plan.excluded.size();
    j["actions"] = nlohmann::ordered_json::array();
    for (const auto& a : result.actions) {
      j["actions"].push_back({{"target", a.target},
                              {"axis", a.axis},
                              {"kept", a.keep_indices.size()},
                              {"reason", std::string(tp::to_string(a.reason))},
                              {"removed_elements", a.removed_elements}});
    }
    j["report"] = rep.to_json();
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "wrote " << c.output << " (" << plan.groups.size() << " groups pruned, "
              << plan.excluded.size() << " left intact, " << result.actions.size()
              << " initializers sliced)\n\n"
              << rep.to_text();
  }
  return kExitOk;
}

int cmd_validate(const RunConfig& c) {
  const tp::ModelArchive original = tp::load_model(c.model);
  const tp::ModelArchive pruned = tp::load_model(c.second_model);
  print_load_warnings(original);
  const tp::AttributeRegistry reg = load_registry(c);
  const tp::ModelAnalysis analysis =
      tp::analyze_model(original, reg, parse_input_shapes(c.input_shapes));
  const tp::PruningPlan plan = c.plan_in.empty()
                                   ? tp::make_plan(original, analysis, reg, plan_options(c))
                                   : read_plan(c.plan_in, original, analysis, reg);
  const tp::ValidationReport v =
      tp::validate_equivalence(original, plan, pruned, c.trials, c.tolerance, c.seed);
  if (c.format == "json") {
    std::cout << v.to_json().dump(2) << "\n";
  } else {
    std::cout << (v.passed ? "PASS" : "FAIL") << (v.downgraded ? " (downgraded)" : "")
              << "  max deviation " << v.max_deviation << " over " << v.trials
              << " trials, tolerance " << v.tolerance << "\n";
    for (const auto& w : v.warnings) std::cout << "warning: " << w << "\n";
  }
  return v.passed ? kExitOk : kExitFailure;
}

int cmd_report(const RunConfig& c) {
  const tp::ModelArchive before = tp::load_model(c.model);
  const tp::ModelArchive after = tp::load_model(c.second_model);
  std::optional<tp::PruningPlan> plan, reference;
  if (!c.plan_in.empty() || !c.reference.empty()) {
    const tp::AttributeRegistry reg = load_registry(c);
    const tp::ModelAnalysis analysis =
        tp::analyze_model(before, reg, parse_input_shapes(c.input_shapes));
    plan = c.plan_in.empty() ? tp::make_plan(before, analysis, reg, plan_options(c))
                             : read_plan(c.plan_in, before, analysis, reg);
    if (!c.reference.empty()) reference = read_plan(c.reference, before, analysis, reg);
  }
  const tp::PruneReport rep = tp::summarize(before, after, plan ? &*plan : nullptr,
                                            reference ? &*reference : nullptr);
  std::cout << (c.format == "json" ? rep.to_json().dump(2) + "\n" : rep.to_text());
  return kExitOk;
}

int cmd_synth(const RunConfig& c) {
  tp::save_model(tp::synthesize_model({c.template_name, c.depth, c.seed}), c.output);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig c;
  c.threads = default_threads();

  CLI::App app{"treeprune: structured channel pruning for ONNX models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "treeprune 0.1.0");

  auto ratio_check = CLI::Validator(
      [](std::string& s) -> std::string {
        double r = -1.0;
        try {
          r = std::stod(s);
        } catch (const std::exception&) {
          return "ratio must be a number";
        }
        return r >= 0.0 && r < 1.0 ? "" : "ratio must lie in [0, 1)";
      },
      "in [0, 1)");
  auto add_registry = [&](CLI::App* s) {
    s->add_option("--registry", c.registry, "OpType=Attribute lines extending the op library")
        ->check(CLI::ExistingFile);
    s->add_option("--input-shape", c.input_shapes, "override a graph input shape, name=d0,d1,...");
  };
  auto add_plan_flags = [&](CLI::App* s) {
    s->add_option("--ratio", c.ratio, "layerwise pruning ratio")->check(ratio_check);
    s->add_option("--criterion", c.criterion, "filter norm")->check(CLI::IsMember({"l1", "l2"}));
    s->add_option("--mode", c.mode, "tree-level or single-node scoring")
        ->check(CLI::IsMember({"tree", "single"}));
    s->add_flag("--include-classifier", c.include_classifier,
                "also prune groups whose channels reach a graph output");
    s->add_option("--plan", c.plan_in, "use a saved plan instead of planning")
        ->check(CLI::ExistingFile);
    s->add_option("--threads", c.threads, "scoring threads (default $TREEPRUNE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    add_registry(s);
  };
  auto text_or_json = CLI::IsMember({"text", "json"});

  CLI::App* inspect = app.add_subcommand("inspect", "list nodes, attributes and prunable nodes");
  inspect->add_option("model", c.model)->required()->check(CLI::ExistingFile);
  inspect->add_option("--format", c.format)->check(text_or_json);
  add_registry(inspect);

  CLI::App* tree = app.add_subcommand("tree", "emit association trees and pruning groups");
  tree->add_option("model", c.model)->required()->check(CLI::ExistingFile);
  tree->add_option("--format", c.format, "json or dot")->check(CLI::IsMember({"json", "dot"}));
  tree->add_option("--registry", c.registry)->check(CLI::ExistingFile);

  CLI::App* prune = app.add_subcommand("prune", "plan, rewrite and save a pruned model");
  prune->add_option("model", c.model)->required()->check(CLI::ExistingFile);
  prune->add_option("-o,--output", c.output, "pruned model path")->required();
  prune->add_option("--plan-out", c.plan_out, "write the plan as JSON");
  prune->add_option("--masked-out", c.masked_out, "write the zero-masked original model");
  prune->add_option("--format", c.format)->check(text_or_json);
  add_plan_flags(prune);

  CLI::App* validate = app.add_subcommand("validate", "check masked equivalence of a pruned model");
  validate->add_option("model", c.model, "original model")->required()->check(CLI::ExistingFile);
  validate->add_option("pruned", c.second_model, "pruned model")->required()->check(CLI::ExistingFile);
  validate->add_option("--trials", c.trials)->check(CLI::PositiveNumber);
  validate->add_option("--tolerance", c.tolerance)->check(CLI::NonNegativeNumber);
  validate->add_option("--seed", c.seed);
  validate->add_option("--format", c.format)->check(text_or_json);
  add_plan_flags(validate);

  CLI::App* report = app.add_subcommand("report", "parameter, FLOP and overlap statistics");
  report->add_option("model", c.model, "model before pruning")->required()->check(CLI::ExistingFile);
  report->add_option("pruned", c.second_model, "model after pruning")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--reference", c.reference, "plan to compare against (overlap column)")
      ->check(CLI::ExistingFile);
  report->add_option("--format", c.format)->check(text_or_json);
  add_plan_flags(report);

  CLI::App* synth = app.add_subcommand("synth", "write a seeded fixture model");
  synth->add_option("template", c.template_name)
      ->required()
      ->check(CLI::IsMember(tp::fixture_templates()));
  synth->add_option("-o,--output", c.output)->required();
  synth->add_option("--seed", c.seed);
  synth->add_option("--depth", c.depth)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*inspect) return cmd_inspect(c);
    if (*tree) return cmd_tree(c);
    if (*prune) return cmd_prune(c);
    if (*validate) return cmd_validate(c);
    if (*report) return cmd_report(c);
    if (*synth) return cmd_synth(c);
  } catch (const tp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
