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

#include "cascade/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cascade/errors.hpp"
#include "cascade/metrics.hpp"

namespace cascade {

using json = nlohmann::ordered_json;

EvalReport evaluate(const Corpus& corpus, const RoutingPolicy& policy, const CostSetup& costs,
                    const RoutingContext& ctx) {
  return evaluate(corpus, policy, costs, ctx, policy.pipeline());
}

EvalReport evaluate(const Corpus& corpus, const RoutingPolicy& policy, const CostSetup& costs,
                    const RoutingContext& ctx_in, PipelineKind accounting) {
  RoutingContext ctx = ctx_in;
  ctx.cheap_model = costs.cheap.model_id;
  ctx.expensive_model = costs.expensive.model_id;
  for (const auto& id : {ctx.cheap_model, ctx.expensive_model})
    if (!corpus.has_model(id)) throw ValidationError(fmt::format("model_id {} is not in the corpus registry", id));

  const PolicyOutcome outcome = apply_policy(policy, corpus, ctx);
  EvalReport report;
  report.policy = policy.describe();
  report.pipeline = accounting;
  report.macs = pipeline_macs(corpus, outcome.assignment, accounting, costs, ctx.parallel);
  report.total_macs = report.macs.total_macs;

  const std::size_t n = corpus.records.size();
  report.rows.resize(n);
  bool all_labeled = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = corpus.records[i];
    auto& row = report.rows[i];
    row.utt_id = r.utt_id;
    row.assigned_model = outcome.assignment.at(r.utt_id);
    row.wer = wer(r.ref_text, r.output(row.assigned_model).hyp_text).wer;
    row.macs = report.macs.rows[i].total();
    row.score = outcome.scores[i];
    const bool both = r.model_outputs.contains(ctx.cheap_model) && r.model_outputs.contains(ctx.expensive_model);
    if (both) {
      row.label = route_label(wer(r.ref_text, r.output(ctx.cheap_model).hyp_text).wer,
                              wer(r.ref_text, r.output(ctx.expensive_model).hyp_text).wer);
    } else {
      all_labeled = false;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return report.rows[a].utt_id < report.rows[b].utt_id; });
  double sum = 0.0;
  std::size_t n_exp = 0;
  for (std::size_t i : order) {
    sum += report.rows[i].wer;
    n_exp += report.rows[i].assigned_model == ctx.expensive_model ? 1 : 0;
  }
  report.mean_wer = sum / static_cast<double>(n);
  report.frac_expensive = static_cast<double>(n_exp) / static_cast<double>(n);

  if (all_labeled) {
    std::vector<int> predicted(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      predicted[i] = report.rows[i].assigned_model == ctx.expensive_model ? 1 : 0;
      labels[i] = *report.rows[i].label;
    }
    report.decision_accuracy = decision_accuracy(predicted, labels);
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  json j;
  j["policy"] = report.policy;
  j["pipeline"] = pipeline_name(report.pipeline);
  j["mean_wer"] = report.mean_wer;
  j["total_macs"] = report.total_macs;
  j["encode_macs"] = report.macs.encode_macs;
  j["decode_macs"] = report.macs.decode_macs;
  j["decider_macs"] = report.macs.decider_macs;
  j["frac_expensive"] = report.frac_expensive;
  j["decision_accuracy"] = report.decision_accuracy ? json(*report.decision_accuracy) : json(nullptr);
  j["mac_formula"] = report.macs.formula;
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row;
    row["utt_id"] = r.utt_id;
    row["model"] = r.assigned_model;
    row["wer"] = r.wer;
    row["macs"] = r.macs;
    row["label"] = r.label ? json(*r.label) : json(nullptr);
    row["score"] = r.score ? json(*r.score) : json(nullptr);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2);
}

std::vector<LabeledSample> labeled_samples(const Corpus& corpus, const RoutingContext& ctx) {
  std::vector<LabeledSample> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    if (!r.features_path) throw CapabilityError(fmt::format("utt_id {}: no features_path", r.utt_id));
    LabeledSample s;
    s.utt_id = r.utt_id;
    s.features = load_features(ctx.resolve(corpus, *r.features_path));
    s.label = route_label(wer(r.ref_text, r.output(ctx.cheap_model).hyp_text).wer,
                          wer(r.ref_text, r.output(ctx.expensive_model).hyp_text).wer);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

double parse_number(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(fmt::format("threshold grid: '{}' is not a finite number", s));
  return v;
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> grid;
  if (text.find(':') != std::string_view::npos) {
    const auto a = text.find(':');
    const auto b = text.find(':', a + 1);
    if (b == std::string_view::npos) throw ParseError("threshold grid: expected lo:hi:count");
    const double lo = parse_number(text.substr(0, a));
    const double hi = parse_number(text.substr(a + 1, b - a - 1));
    const double count = parse_number(text.substr(b + 1));
    if (count < 1 || count != std::floor(count)) throw ParseError("threshold grid: count must be a positive integer");
    const auto n = static_cast<std::size_t>(count);
    for (std::size_t i = 0; i < n; ++i)
      grid.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto end = std::min(text.find(',', pos), text.size());
      grid.push_back(parse_number(text.substr(pos, end - pos)));
      pos = end + 1;
    }
  }
  if (grid.empty()) throw ParseError("threshold grid: empty");
  std::sort(grid.begin(), grid.end());
  return grid;
}

}  // namespace cascade
