/*
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// cascade: command-line front end for labeling, training, calibration,
// evaluation, threshold sweeps, cost tables and synthetic corpora.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cascade/corpus.hpp"
#include "cascade/costmodel.hpp"
#include "cascade/decider.hpp"
#include "cascade/errors.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/kernels.hpp"
#include "cascade/metrics.hpp"
#include "cascade/routing.hpp"
#include "cascade/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cascade;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string manifest;
  std::string features_dir;
  std::string cost_config;
  std::string policy;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::string threshold_grid = "0:1:11";
  bool single_thread = false;
  std::string cheap;
  std::string expensive;
  std::string model;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

Corpus need_manifest(const std::string& path, const char* flag = "--manifest") {
  if (path.empty()) throw ValidationError(fmt::format("{} is required", flag));
  return load_manifest(path);
}

// Cheap/expensive ids: cost config, then flags, then the first two registry entries.
std::pair<std::string, std::string> model_pair(const Common& c, const Corpus& corpus,
                                               const std::optional<CostSetup>& costs) {
  if (costs) return {costs->cheap.model_id, costs->expensive.model_id};
  std::string cheap = c.cheap, exp = c.expensive;
  if (cheap.empty() || exp.empty()) {
    if (corpus.model_registry.size() < 2)
      throw ValidationError("corpus registry has fewer than two models; pass --cheap and --expensive");
    if (cheap.empty()) cheap = corpus.model_registry[0];
    if (exp.empty()) exp = corpus.model_registry[1];
  }
  for (const auto& id : {cheap, exp})
    if (!corpus.has_model(id)) throw ValidationError(fmt::format("model_id {} is not in the corpus registry", id));
  return {cheap, exp};
}

std::optional<CostSetup> maybe_costs(const Common& c) {
  if (c.cost_config.empty()) return std::nullopt;
  return load_cost_config(c.cost_config);
}

RoutingContext make_context(const Common& c, const std::string& cheap, const std::string& exp) {
  RoutingContext ctx;
  ctx.cheap_model = cheap;
  ctx.expensive_model = exp;
  if (!c.features_dir.empty()) ctx.features_dir = fs::path(c.features_dir);
  ctx.parallel = !c.single_thread;
  return ctx;
}

// A policy file, or one of the built-in kind names.
RoutingPolicy resolve_policy(const std::string& arg, fs::path& policy_dir) {
  if (arg.empty()) throw ValidationError("--policy is required");
  if (fs::exists(arg)) {
    policy_dir = fs::path(arg).parent_path();
    return load_policy(arg);
  }
  if (arg == "fixed_cheap") return RoutingPolicy::fixed_cheap();
  if (arg == "fixed_expensive") return RoutingPolicy::fixed_expensive();
  if (arg == "oracle") return RoutingPolicy::oracle();
  if (arg == "accent") return RoutingPolicy::accent();
  throw ValidationError(fmt::format("--policy {}: no such file or built-in policy", arg));
}

fs::path relative_to(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string fmt_real(double v) { return fmt::format("{:.17g}", v); }

int cmd_label(const Common& c) {
  const Corpus corpus = need_manifest(c.manifest);
  const auto costs = maybe_costs(c);
  const auto [cheap, exp] = model_pair(c, corpus, costs);

  const auto wc = model_wers(corpus, cheap);
  const auto we = model_wers(corpus, exp);
  std::string labels = fmt::format("utt_id,wer_{},wer_{},label\n", cheap, exp);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const int y = route_label(wc[i], we[i]);
    ones += y;
    labels += fmt::format("{},{},{},{}\n", corpus.records[i].utt_id, fmt_real(wc[i]), fmt_real(we[i]), y);
  }

  const auto& models = corpus.model_registry;
  const auto m = relative_perf_matrix(corpus, models);
  std::string matrix = "model";
  for (const auto& id : models) matrix += "," + id;
  matrix += '\n';
  for (std::size_t i = 0; i < models.size(); ++i) {
    matrix += models[i];
    for (double v : m[i]) matrix += "," + fmt_real(v);
    matrix += '\n';
  }

  const fs::path out(c.out_dir);
  write_file(out / "labels.csv", labels);
  write_file(out / "matrix.csv", matrix);
  fmt::print("{} utterances, {} routed to {} by label\n", corpus.records.size(), ones, exp);
  return 0;
}

struct TrainFlags {
  std::string val_manifest;
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 32;
  double lr = 1e-5;
  std::uint32_t channels = 256;
  std::uint32_t blocks = 3;
  std::uint32_t kernel = 3;
  bool no_layer_weights = false;
};

int cmd_train(const Common& c, const TrainFlags& t) {
  const Corpus train_corpus = need_manifest(c.manifest);
  const Corpus val_corpus = need_manifest(t.val_manifest, "--val-manifest");
  const auto costs = maybe_costs(c);
  const auto [cheap, exp] = model_pair(c, train_corpus, costs);
  const auto ctx = make_context(c, cheap, exp);
  require(validate_corpus(train_corpus, {Capability::kFeatures}));
  require(validate_corpus(val_corpus, {Capability::kFeatures}));

  const auto train_set = labeled_samples(train_corpus, ctx);
  const auto val_set = labeled_samples(val_corpus, ctx);

  DeciderConfig dcfg;
  dcfg.in_layers = static_cast<std::uint32_t>(train_set.front().features.layers());
  dcfg.in_dims = static_cast<std::uint32_t>(train_set.front().features.dims());
  dcfg.channels = t.channels;
  dcfg.res_blocks = t.blocks;
  dcfg.kernel = t.kernel;
  dcfg.layer_weights = !t.no_layer_weights;
  dcfg.seed = c.seed;
  TrainConfig tcfg;
  tcfg.lr0 = t.lr;
  tcfg.epochs = t.epochs;
  tcfg.batch_size = t.batch_size;
  tcfg.seed = c.seed;

  const TrainResult result = train(train_set, val_set, dcfg, tcfg);

  std::string history = "epoch,train_loss,train_accuracy,val_accuracy,lr\n";
  for (const auto& e : result.history)
    history += fmt::format("{},{},{},{},{}\n", e.epoch, fmt_real(e.train_loss), fmt_real(e.train_accuracy),
                           fmt_real(e.val_accuracy), fmt_real(e.lr));
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  save_model(result.model, out / "model.dcdr");
  write_file(out / "history.csv", history);
  fmt::print("best val accuracy {:.2f}% at epoch {}\n", result.best_val_accuracy, result.best_epoch);
  return 0;
}

struct CalibrateFlags {
  std::string method;
  std::string score = "decider";
  std::string orientation = "higher";
};

int cmd_calibrate(const Common& c, const CalibrateFlags& f) {
  const Corpus corpus = need_manifest(c.manifest);
  const auto costs = maybe_costs(c);
  const auto [cheap, exp] = model_pair(c, corpus, costs);
  const auto ctx = make_context(c, cheap, exp);
  const auto labels = route_labels(corpus, cheap, exp);
  const fs::path out(c.out_dir);

  RoutingPolicy policy;
  if (f.method == "nofn") {
    const auto wc = model_wers(corpus, cheap);
    policy = RoutingPolicy::wer_oracle(calibrate_no_false_negative(wc, labels));
  } else if (f.method == "eer") {
    std::vector<double> scores;
    Orientation orient = parse_orientation(f.orientation);
    if (f.score == "decider") {
      if (c.model.empty()) throw ValidationError("--model is required for decider calibration");
      scores = decider_scores(corpus, load_model(c.model), ctx);
      orient = Orientation::kHigherMeansExpensive;
    } else {
      require(validate_corpus(corpus, RoutingPolicy::threshold_on(f.score, 0.0, orient).required_capabilities()));
      for (const auto& r : corpus.records) scores.push_back(record_score(r, f.score, corpus, ctx));
    }
    std::vector<ScoredSample> samples;
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
      samples.push_back({corpus.records[i].utt_id, scores[i], labels[i]});
    const double h = calibrate_eer(samples, orient);
    if (f.score == "decider") {
      // Stored relative to the policy file so the output does not depend on the working directory.
      const auto model_path = fs::absolute(c.model).lexically_relative(fs::absolute(out));
      policy = RoutingPolicy::decider(model_path.generic_string(), h);
    } else {
      policy = RoutingPolicy::threshold_on(f.score, h, orient);
    }
  } else {
    throw ValidationError(fmt::format("--method {}: expected eer or nofn", f.method));
  }
  write_file(out / "policy.json", policy_to_json(policy) + "\n");
  fmt::print("{}\n", policy.describe());
  return 0;
}

CostSetup need_costs(const Common& c) {
  if (c.cost_config.empty()) throw ValidationError("--cost-config is required");
  return load_cost_config(c.cost_config);
}

// Loads the decider a policy refers to and makes the cost setup describe it.
std::optional<DeciderModel> bind_decider(const RoutingPolicy& policy, const fs::path& policy_dir,
                                         CostSetup& costs) {
  if (policy.kind != RoutingPolicy::Kind::kDecider) return std::nullopt;
  DeciderModel model = load_model(relative_to(policy_dir, policy.model_path));
  costs.decider = model.config();
  return model;
}

int cmd_evaluate(const Common& c) {
  const Corpus corpus = need_manifest(c.manifest);
  CostSetup costs = need_costs(c);
  fs::path policy_dir;
  const RoutingPolicy policy = resolve_policy(c.policy, policy_dir);
  const auto model = bind_decider(policy, policy_dir, costs);
  auto ctx = make_context(c, costs.cheap.model_id, costs.expensive.model_id);
  if (model) ctx.decider = &*model;

  const EvalReport report = evaluate(corpus, policy, costs, ctx);
  write_file(fs::path(c.out_dir) / "report.json", report_json(report) + "\n");
  fmt::print("{}: mean WER {:.4f}, total MACs {}", report.policy, report.mean_wer, report.total_macs);
  if (report.decision_accuracy) fmt::print(", decision accuracy {:.2f}%", *report.decision_accuracy);
  fmt::print("\n");
  return 0;
}

int cmd_sweep(const Common& c) {
  const Corpus corpus = need_manifest(c.manifest);
  CostSetup costs = need_costs(c);
  if (c.model.empty()) throw ValidationError("--model is required");
  const DeciderModel model = load_model(c.model);
  costs.decider = model.config();
  const auto ctx = make_context(c, costs.cheap.model_id, costs.expensive.model_id);
  const auto grid = parse_grid(c.threshold_grid);

  const auto scores = decider_scores(corpus, model, ctx);
  std::map<std::string, double> by_id;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) by_id[corpus.records[i].utt_id] = scores[i];
  const auto rows = sweep_thresholds(by_id, corpus, grid, costs, ctx.parallel);
  write_file(fs::path(c.out_dir) / "sweep.csv", sweep_csv(rows));
  fmt::print("{} sweep points\n", rows.size());
  return 0;
}

int cmd_cost(const Common& c) {
  const Corpus corpus = need_manifest(c.manifest);
  CostSetup costs = need_costs(c);
  fs::path policy_dir;
  const RoutingPolicy policy = resolve_policy(c.policy.empty() ? "fixed_expensive" : c.policy, policy_dir);
  const auto model = bind_decider(policy, policy_dir, costs);
  auto ctx = make_context(c, costs.cheap.model_id, costs.expensive.model_id);
  if (model) ctx.decider = &*model;

  const auto outcome = apply_policy(policy, corpus, ctx);
  const auto report = pipeline_macs(corpus, outcome.assignment, policy.pipeline(), costs, ctx.parallel);
  const fs::path out(c.out_dir);
  write_file(out / "cost.csv", mac_report_csv(report));
  write_file(out / "cost.json", mac_report_json(report) + "\n");
  fmt::print("total MACs {}\n", report.total_macs);
  return 0;
}

int cmd_correlate(const Common& c) {
  const Corpus corpus = need_manifest(c.manifest);
  const auto [a, b] = model_pair(c, corpus, maybe_costs(c));
  const auto wa = model_wers(corpus, a);
  const auto wb = model_wers(corpus, b);
  json j;
  j["model_a"] = a;
  j["model_b"] = b;
  j["n"] = wa.size();
  j["pearson"] = pearson(wa, wb);
  j["spearman"] = spearman(wa, wb);
  write_file(fs::path(c.out_dir) / "correlation.json", j.dump(2) + "\n");
  fmt::print("pearson {:.6f}, spearman {:.6f}\n", j["pearson"].get<double>(), j["spearman"].get<double>());
  return 0;
}

struct SynthFlags {
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  SyntheticSpec spec;
};

int cmd_synth(const Common& c, SynthFlags f) {
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  f.spec.seed = c.seed;
  for (auto [name, n] : {std::pair{"train", f.n_train}, {"val", f.n_val}, {"test", f.n_test}}) {
    if (n == 0) continue;
    SyntheticSpec s = f.spec;
    s.n_samples = n;
    s.id_prefix = name;
    const Corpus corpus = make_synthetic_corpus(s, out);
    save_manifest(corpus, out / fmt::format("{}.jsonl", name));
  }
  CostSetup costs{tiny_like_config(), small_like_config(), std::nullopt};
  costs.cheap.model_id = f.spec.cheap_model;
  costs.expensive.model_id = f.spec.expensive_model;
  write_file(out / "cost.json", cost_config_to_json(costs) + "\n");
  fmt::print("wrote synthetic splits to {}\n", out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cheap/expensive ASR routing toolkit"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--manifest", c.manifest, "JSON-lines manifest");
    sub->add_option("--features-dir", c.features_dir, "Directory feature/logit paths are relative to");
    sub->add_option("--cost-config", c.cost_config, "Cost configuration JSON");
    sub->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
    sub->add_flag("--single-thread", c.single_thread, "Serial execution for bit-stable output");
    sub->add_option("--cheap", c.cheap, "Cheap model id");
    sub->add_option("--expensive", c.expensive, "Expensive model id");
  };

  auto* label = app.add_subcommand("label", "Route labels and relative-performance matrix");
  add_common(label);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train the decider");
  add_common(train_cmd);
  train_cmd->add_option("--val-manifest", tf.val_manifest, "Validation manifest")->required();
  train_cmd->add_option("--epochs", tf.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tf.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tf.lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--channels", tf.channels)->capture_default_str();
  train_cmd->add_option("--blocks", tf.blocks)->capture_default_str();
  train_cmd->add_option("--kernel", tf.kernel)->capture_default_str();
  train_cmd->add_flag("--no-layer-weights", tf.no_layer_weights, "Read the last layer only");

  CalibrateFlags cf;
  auto* calibrate = app.add_subcommand("calibrate", "Pick a threshold (eer | nofn) and write policy.json");
  add_common(calibrate);
  calibrate->add_option("--method", cf.method)->required()->check(CLI::IsMember({"eer", "nofn"}));
  calibrate->add_option("--score", cf.score, "decider, or a manifest score name")->capture_default_str();
  calibrate->add_option("--orientation", cf.orientation, "higher | lower")->capture_default_str();
  calibrate->add_option("--model", c.model, "Decider model for --score decider");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Mean WER, MACs and decision accuracy of a policy");
  add_common(evaluate_cmd);
  evaluate_cmd->add_option("--policy", c.policy, "Policy JSON or fixed_cheap|fixed_expensive|oracle|accent");

  auto* sweep = app.add_subcommand("sweep", "Decider threshold sweep");
  add_common(sweep);
  sweep->add_option("--model", c.model, "Decider model");
  sweep->add_option("--threshold-grid", c.threshold_grid, "a,b,c or lo:hi:count")->capture_default_str();

  auto* cost = app.add_subcommand("cost", "Per-utterance MAC table of a policy");
  add_common(cost);
  cost->add_option("--policy", c.policy, "Policy JSON or built-in name (default fixed_expensive)");

  auto* correlate = app.add_subcommand("correlate", "Pearson/Spearman between two models' WER columns");
  add_common(correlate);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with train/val/test splits");
  add_common(synth);
  synth->add_option("--n-train", sf.n_train)->capture_default_str();
  synth->add_option("--n-val", sf.n_val)->capture_default_str();
  synth->add_option("--n-test", sf.n_test)->capture_default_str();
  synth->add_option("--layers", sf.spec.layers)->capture_default_str();
  synth->add_option("--dims", sf.spec.dims)->capture_default_str();
  synth->add_option("--frames-min", sf.spec.frames_min)->capture_default_str();
  synth->add_option("--frames-max", sf.spec.frames_max)->capture_default_str();
  synth->add_option("--planted-layer", sf.spec.planted_layer, "-1 plants in every layer")->capture_default_str();
  synth->add_option("--shift", sf.spec.planted_shift)->capture_default_str();
  synth->add_option("--noise", sf.spec.label_noise, "Label flip probability")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (c.single_thread) kernels::set_threads(1);
  try {
    if (*label) return cmd_label(c);
    if (*train_cmd) return cmd_train(c, tf);
    if (*calibrate) return cmd_calibrate(c, cf);
    if (*evaluate_cmd) return cmd_evaluate(c);
    if (*sweep) return cmd_sweep(c);
    if (*cost) return cmd_cost(c);
    if (*correlate) return cmd_correlate(c);
    if (*synth) return cmd_synth(c, sf);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
