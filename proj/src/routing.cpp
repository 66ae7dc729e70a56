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

#include "cascade/routing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cascade/errors.hpp"
#include "cascade/metrics.hpp"

namespace cascade {

using json = nlohmann::ordered_json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

json threshold_to_json(double h) {
  if (std::isinf(h)) return h > 0 ? "inf" : "-inf";
  return h;
}

double threshold_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ParseError("policy: threshold string must be 'inf' or '-inf'");
  }
  return j.get<double>();
}

// Runs fn(i) for every record, in parallel when asked, rethrowing the first
// failure in corpus order.
template <typename Fn>
void for_each_record(std::size_t n, bool parallel, Fn&& fn) {
  std::vector<std::string> errors(n);
  std::vector<char> capability(n, 0);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (const CapabilityError& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
      capability[static_cast<std::size_t>(i)] = 1;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i].empty()) continue;
    if (capability[i]) throw CapabilityError(errors[i]);
    throw ValidationError(errors[i]);
  }
}

}  // namespace

std::string_view orientation_name(Orientation o) {
  return o == Orientation::kHigherMeansExpensive ? "higher_means_expensive" : "lower_means_expensive";
}

Orientation parse_orientation(std::string_view name) {
  if (name == "higher_means_expensive" || name == "higher") return Orientation::kHigherMeansExpensive;
  if (name == "lower_means_expensive" || name == "lower") return Orientation::kLowerMeansExpensive;
  throw ParseError(fmt::format("unknown orientation '{}'", name));
}

bool routes_expensive(double score, double h, Orientation o) {
  return o == Orientation::kHigherMeansExpensive ? score >= h : score <= h;
}

double entropy_from_logits(const LogitSequence& logits) {
  if (logits.steps == 0 || logits.vocab == 0) throw DomainError("entropy_from_logits: empty logit sequence");
  if (logits.data.size() != logits.steps * logits.vocab) throw ShapeError("entropy_from_logits: data size mismatch");
  double total = 0.0;
  for (std::size_t s = 0; s < logits.steps; ++s) {
    const auto row = logits.step(s);
    double mx = -kInf;
    for (float v : row) {
      if (!std::isfinite(v)) throw DomainError(fmt::format("entropy_from_logits: non-finite logit at step {}", s));
      mx = std::max(mx, static_cast<double>(v));
    }
    double z = 0.0;
    for (float v : row) z += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(z);
    double h = 0.0;
    for (float v : row) {
      const double logp = static_cast<double>(v) - lse;
      h -= std::exp(logp) * logp;
    }
    total += h;
  }
  return total / static_cast<double>(logits.steps);
}

Route accent_rule(std::string_view accent_label) {
  const auto a = lower(accent_label);
  return (a == "american" || a == "british" || a == "canadian") ? Route::kCheap : Route::kExpensive;
}

RateCounts error_rates(std::span<const ScoredSample> samples, double h, Orientation o) {
  std::size_t pos = 0, neg = 0, fp = 0, fn = 0;
  for (const auto& s : samples) {
    const bool predicted = routes_expensive(s.score, h, o);
    if (s.label) {
      ++pos;
      fn += predicted ? 0 : 1;
    } else {
      ++neg;
      fp += predicted ? 1 : 0;
    }
  }
  RateCounts r;
  r.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
  r.fnr = pos ? static_cast<double>(fn) / static_cast<double>(pos) : 0.0;
  return r;
}

double calibrate_eer(std::span<const ScoredSample> samples, Orientation o) {
  const double sign = o == Orientation::kHigherMeansExpensive ? 1.0 : -1.0;
  std::vector<std::pair<double, int>> s;
  s.reserve(samples.size());
  std::int64_t n_pos = 0, n_neg = 0;
  for (const auto& x : samples) {
    if (!std::isfinite(x.score)) throw DomainError("calibrate_eer: non-finite score for utt_id " + x.utt_id);
    s.emplace_back(sign * x.score, x.label);
    (x.label ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) throw DomainError("calibrate_eer: both labels must be present");
  std::sort(s.begin(), s.end());

  // Threshold just below sorted position k predicts positives for s[k..]. With
  // k == 0 that is the -inf candidate; k == n is +inf.
  // |FPR - FNR| * n_pos * n_neg = |FP * n_pos - FN * n_neg|, compared exactly.
  std::int64_t fn = 0;      // positives below the threshold
  std::int64_t fp = n_neg;  // negatives at or above it
  std::int64_t best = std::abs(fp * n_pos - fn * n_neg);
  double best_h = -kInf;
  std::size_t k = 0;
  while (k < s.size()) {
    std::size_t j = k;
    while (j < s.size() && s[j].first == s[k].first) {
      (s[j].second ? fn : fp) += s[j].second ? 1 : -1;
      ++j;
    }
    const double h = j < s.size() ? 0.5 * (s[k].first + s[j].first) : kInf;
    const std::int64_t gap = std::abs(fp * n_pos - fn * n_neg);
    if (gap < best) {
      best = gap;
      best_h = h;
    }
    k = j;
  }
  return sign * best_h;
}

double calibrate_no_false_negative(std::span<const double> wer_cheap, std::span<const int> labels) {
  if (wer_cheap.size() != labels.size())
    throw DomainError(fmt::format("calibrate_no_false_negative: {} WERs vs {} labels", wer_cheap.size(),
                                  labels.size()));
  if (wer_cheap.empty()) throw DomainError("calibrate_no_false_negative: empty input");
  double min_pos = kInf;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) min_pos = std::min(min_pos, wer_cheap[i]);
  double t = -kInf;
  for (double w : wer_cheap)
    if (w < min_pos) t = std::max(t, w);
  return t;
}

std::string_view policy_kind_name(RoutingPolicy::Kind kind) {
  switch (kind) {
    case RoutingPolicy::Kind::kFixedCheap: return "fixed_cheap";
    case RoutingPolicy::Kind::kFixedExpensive: return "fixed_expensive";
    case RoutingPolicy::Kind::kThreshold: return "threshold";
    case RoutingPolicy::Kind::kAccent: return "accent";
    case RoutingPolicy::Kind::kDecider: return "decider";
    case RoutingPolicy::Kind::kOracle: return "oracle";
    case RoutingPolicy::Kind::kWerOracle: return "wer_oracle";
  }
  return "?";
}

std::string RoutingPolicy::describe() const {
  switch (kind) {
    case Kind::kThreshold:
      return fmt::format("threshold({}, h={}, {})", score_name, threshold, orientation_name(orientation));
    case Kind::kDecider: return fmt::format("decider({}, h={})", model_path, threshold);
    case Kind::kWerOracle: return fmt::format("wer_oracle(t={})", threshold);
    default: return std::string(policy_kind_name(kind));
  }
}

PipelineKind RoutingPolicy::pipeline() const {
  if (kind == Kind::kDecider) return PipelineKind::kDecider;
  if (kind == Kind::kThreshold && score_name == "entropy_mean") return PipelineKind::kEntropyCascade;
  return PipelineKind::kDirect;
}

std::set<Capability> RoutingPolicy::required_capabilities() const {
  switch (kind) {
    case Kind::kDecider: return {Capability::kFeatures};
    case Kind::kAccent: return {Capability::kAccent};
    case Kind::kThreshold:
      if (score_name == "snr") return {Capability::kSnr};
      if (score_name == "entropy_mean") return {Capability::kLogitsEntropy};
      return {};
    default: return {};
  }
}

RoutingPolicy parse_policy(const std::string& text) {
  RoutingPolicy p;
  try {
    const auto j = json::parse(text);
    const auto kind = j.at("kind").get<std::string>();
    bool found = false;
    for (auto k : {RoutingPolicy::Kind::kFixedCheap, RoutingPolicy::Kind::kFixedExpensive,
                   RoutingPolicy::Kind::kThreshold, RoutingPolicy::Kind::kAccent, RoutingPolicy::Kind::kDecider,
                   RoutingPolicy::Kind::kOracle, RoutingPolicy::Kind::kWerOracle}) {
      if (policy_kind_name(k) == kind) {
        p.kind = k;
        found = true;
      }
    }
    if (!found) throw ParseError(fmt::format("policy: unknown kind '{}'", kind));
    if (j.contains("threshold")) p.threshold = threshold_from_json(j["threshold"]);
    if (j.contains("score")) p.score_name = j["score"].get<std::string>();
    if (j.contains("orientation")) p.orientation = parse_orientation(j["orientation"].get<std::string>());
    if (j.contains("model_path")) p.model_path = j["model_path"].get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy: ") + e.what());
  }
  if (p.kind == RoutingPolicy::Kind::kThreshold && p.score_name.empty())
    throw ParseError("policy: threshold policy needs a 'score'");
  if (p.kind == RoutingPolicy::Kind::kDecider && p.model_path.empty())
    throw ParseError("policy: decider policy needs a 'model_path'");
  if ((p.kind == RoutingPolicy::Kind::kThreshold || p.kind == RoutingPolicy::Kind::kDecider) &&
      !std::isfinite(p.threshold))
    throw ParseError("policy: threshold must be finite");
  if (std::isnan(p.threshold)) throw ParseError("policy: threshold is NaN");
  return p;
}

RoutingPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open policy " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_policy(buf.str());
}

std::string policy_to_json(const RoutingPolicy& p) {
  json j;
  j["kind"] = policy_kind_name(p.kind);
  switch (p.kind) {
    case RoutingPolicy::Kind::kThreshold:
      j["score"] = p.score_name;
      j["threshold"] = threshold_to_json(p.threshold);
      j["orientation"] = orientation_name(p.orientation);
      break;
    case RoutingPolicy::Kind::kDecider:
      j["model_path"] = p.model_path;
      j["threshold"] = threshold_to_json(p.threshold);
      break;
    case RoutingPolicy::Kind::kWerOracle: j["threshold"] = threshold_to_json(p.threshold); break;
    default: break;
  }
  return j.dump(2);
}

std::filesystem::path RoutingContext::resolve(const Corpus& corpus, const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  if (features_dir) return *features_dir / p;
  return corpus.resolve(path);
}

double record_score(const UtteranceRecord& r, const std::string& name, const Corpus& corpus,
                    const RoutingContext& ctx) {
  if (auto it = r.scores.find(name); it != r.scores.end()) return it->second;
  if (name == "entropy_mean") {
    auto lp = r.logits_path.find(ctx.cheap_model);
    if (lp == r.logits_path.end())
      throw CapabilityError(fmt::format("utt_id {}: no entropy_mean score or logits for model {}", r.utt_id,
                                        ctx.cheap_model));
    return entropy_from_logits(load_logits(ctx.resolve(corpus, lp->second)));
  }
  throw CapabilityError(fmt::format("utt_id {}: missing score '{}'", r.utt_id, name));
}

std::vector<double> decider_scores(const Corpus& corpus, const DeciderModel& model, const RoutingContext& ctx) {
  std::vector<double> scores(corpus.records.size());
  for_each_record(corpus.records.size(), ctx.parallel, [&](std::size_t i) {
    const auto& r = corpus.records[i];
    if (!r.features_path) throw CapabilityError(fmt::format("utt_id {}: no features_path", r.utt_id));
    const auto feats = load_features(ctx.resolve(corpus, *r.features_path));
    try {
      scores[i] = forward(model, feats);
    } catch (const Error& e) {
      throw ValidationError(fmt::format("utt_id {}: {}", r.utt_id, e.what()));
    }
  });
  return scores;
}

PolicyOutcome apply_policy(const RoutingPolicy& policy, const Corpus& corpus, const RoutingContext& ctx) {
  if (corpus.records.empty()) throw ValidationError("apply_policy: empty corpus");
  require(validate_corpus(corpus, policy.required_capabilities()));

  const auto n = corpus.records.size();
  PolicyOutcome out;
  out.scores.assign(n, std::nullopt);
  std::vector<char> expensive(n, 0);

  using K = RoutingPolicy::Kind;
  switch (policy.kind) {
    case K::kFixedCheap: break;
    case K::kFixedExpensive: std::fill(expensive.begin(), expensive.end(), 1); break;
    case K::kThreshold:
      for_each_record(n, ctx.parallel, [&](std::size_t i) {
        const double s = record_score(corpus.records[i], policy.score_name, corpus, ctx);
        out.scores[i] = s;
        expensive[i] = routes_expensive(s, policy.threshold, policy.orientation);
      });
      break;
    case K::kAccent:
      for (std::size_t i = 0; i < n; ++i) expensive[i] = accent_rule(*corpus.records[i].accent) == Route::kExpensive;
      break;
    case K::kDecider: {
      std::optional<DeciderModel> loaded;
      const DeciderModel* model = ctx.decider;
      if (!model) {
        loaded = load_model(policy.model_path);
        model = &*loaded;
      }
      const auto scores = decider_scores(corpus, *model, ctx);
      for (std::size_t i = 0; i < n; ++i) {
        out.scores[i] = scores[i];
        expensive[i] = scores[i] >= policy.threshold;
      }
      break;
    }
    case K::kOracle:
    case K::kWerOracle:
      for_each_record(n, ctx.parallel, [&](std::size_t i) {
        const auto& r = corpus.records[i];
        const double wc = wer(r.ref_text, r.output(ctx.cheap_model).hyp_text).wer;
        if (policy.kind == K::kOracle) {
          const double we = wer(r.ref_text, r.output(ctx.expensive_model).hyp_text).wer;
          expensive[i] = route_label(wc, we);
        } else {
          out.scores[i] = wc;
          expensive[i] = !(wc <= policy.threshold);
        }
      });
      break;
  }
  for (std::size_t i = 0; i < n; ++i)
    out.assignment.emplace(corpus.records[i].utt_id, expensive[i] ? ctx.expensive_model : ctx.cheap_model);
  return out;
}

std::vector<SweepRow> sweep_thresholds(const std::map<std::string, double>& scores, const Corpus& corpus,
                                       std::span<const double> grid, const CostSetup& costs, bool parallel) {
  if (grid.empty()) throw DomainError("sweep_thresholds: empty grid");
  if (corpus.records.empty()) throw ValidationError("sweep_thresholds: empty corpus");
  if (!costs.decider) throw ValidationError("sweep_thresholds: cost setup lacks a decider config");
  const std::size_t n = corpus.records.size();

  struct Row {
    double wer_cheap, wer_exp, score;
    Macs cost_cheap, cost_exp;
  };
  std::vector<Row> rows(n);
  for_each_record(n, parallel, [&](std::size_t i) {
    const auto& r = corpus.records[i];
    auto it = scores.find(r.utt_id);
    if (it == scores.end()) throw CapabilityError(fmt::format("utt_id {}: no decider score", r.utt_id));
    rows[i].score = it->second;
    rows[i].wer_cheap = wer(r.ref_text, r.output(costs.cheap.model_id).hyp_text).wer;
    rows[i].wer_exp = wer(r.ref_text, r.output(costs.expensive.model_id).hyp_text).wer;
    rows[i].cost_cheap = utterance_macs(r, costs.cheap.model_id, PipelineKind::kDecider, costs).total();
    rows[i].cost_exp = utterance_macs(r, costs.expensive.model_id, PipelineKind::kDecider, costs).total();
  });

  // Reduce in utt_id order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return corpus.records[a].utt_id < corpus.records[b].utt_id; });

  std::vector<double> sorted_grid(grid.begin(), grid.end());
  std::sort(sorted_grid.begin(), sorted_grid.end());
  std::vector<SweepRow> out;
  out.reserve(sorted_grid.size());
  for (double h : sorted_grid) {
    SweepRow row;
    row.threshold = h;
    double wer_sum = 0.0;
    std::size_t n_exp = 0;
    for (std::size_t i : order) {
      const bool exp = rows[i].score >= h;
      wer_sum += exp ? rows[i].wer_exp : rows[i].wer_cheap;
      row.total_macs += exp ? rows[i].cost_exp : rows[i].cost_cheap;
      n_exp += exp ? 1 : 0;
    }
    row.mean_wer = wer_sum / static_cast<double>(n);
    row.frac_expensive = static_cast<double>(n_exp) / static_cast<double>(n);
    out.push_back(row);
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "h,mean_wer,total_macs,frac_expensive\n";
  for (const auto& r : rows)
    out += fmt::format("{},{:.17g},{},{:.17g}\n", r.threshold, r.mean_wer, r.total_macs, r.frac_expensive);
  return out;
}

}  // namespace cascade
