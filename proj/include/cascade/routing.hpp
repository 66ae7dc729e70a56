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

#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade/corpus.hpp"
#include "cascade/costmodel.hpp"
#include "cascade/decider.hpp"

namespace cascade {

enum class Orientation { kHigherMeansExpensive, kLowerMeansExpensive };

std::string_view orientation_name(Orientation o);
Orientation parse_orientation(std::string_view name);

/// True iff a score routes to the expensive model under threshold h:
/// score >= h (higher) or score <= h (lower).
bool routes_expensive(double score, double h, Orientation o);

struct ScoredSample {
  std::string utt_id;
  double score = 0.0;
  int label = 0;
};

/// Mean over steps of the softmax entropy (nats) of each logit row.
double entropy_from_logits(const LogitSequence& logits);

/// "cheap" for american/british/canadian (case-insensitive), else "expensive".
enum class Route { kCheap, kExpensive };
Route accent_rule(std::string_view accent_label);

struct RateCounts {
  double fpr = 0.0;
  double fnr = 0.0;
};

/// FPR/FNR of the threshold rule with label 1 as the positive class.
RateCounts error_rates(std::span<const ScoredSample> samples, double h, Orientation o);

/// Equal-error-rate threshold: candidates are midpoints of consecutive distinct
/// scores plus +-infinity; minimizes |FPR - FNR|. Ties go to the smaller
/// threshold in the orientation-normalized score (so negating scores and
/// flipping orientation negates the result exactly).
double calibrate_eer(std::span<const ScoredSample> samples, Orientation o);

/// Largest t among observed WERs and -infinity such that no label-1 sample
/// has wer_cheap <= t.
double calibrate_no_false_negative(std::span<const double> wer_cheap, std::span<const int> labels);

struct RoutingPolicy {
  enum class Kind { kFixedCheap, kFixedExpensive, kThreshold, kAccent, kDecider, kOracle, kWerOracle };

  Kind kind = Kind::kFixedCheap;
  std::string score_name;  // kThreshold
  double threshold = 0.5;  // kThreshold, kDecider, kWerOracle
  Orientation orientation = Orientation::kHigherMeansExpensive;
  std::string model_path;  // kDecider

  static RoutingPolicy of(Kind k) {
    RoutingPolicy p;
    p.kind = k;
    return p;
  }
  static RoutingPolicy fixed_cheap() { return of(Kind::kFixedCheap); }
  static RoutingPolicy fixed_expensive() { return of(Kind::kFixedExpensive); }
  static RoutingPolicy oracle() { return of(Kind::kOracle); }
  static RoutingPolicy accent() { return of(Kind::kAccent); }
  static RoutingPolicy wer_oracle(double t) {
    auto p = of(Kind::kWerOracle);
    p.threshold = t;
    return p;
  }
  static RoutingPolicy threshold_on(std::string score, double h, Orientation o) {
    auto p = of(Kind::kThreshold);
    p.score_name = std::move(score);
    p.threshold = h;
    p.orientation = o;
    return p;
  }
  static RoutingPolicy decider(std::string path, double h) {
    auto p = of(Kind::kDecider);
    p.model_path = std::move(path);
    p.threshold = h;
    return p;
  }

  std::string describe() const;
  /// Cost accounting that matches how the policy runs.
  PipelineKind pipeline() const;
  std::set<Capability> required_capabilities() const;
};

std::string_view policy_kind_name(RoutingPolicy::Kind kind);

/// JSON: {"kind": "...", "score": "...", "threshold": h, "orientation": "...", "model_path": "..."}.
/// Infinite thresholds are written as the strings "inf" / "-inf".
RoutingPolicy parse_policy(const std::string& text);
RoutingPolicy load_policy(const std::filesystem::path& path);
std::string policy_to_json(const RoutingPolicy& policy);

/// Everything apply_policy may need besides the corpus.
struct RoutingContext {
  std::string cheap_model;
  std::string expensive_model;
  /// Overrides corpus.base_dir for feature/logit paths when set.
  std::optional<std::filesystem::path> features_dir;
  /// Already-loaded decider; otherwise loaded from the policy's model_path.
  const DeciderModel* decider = nullptr;
  bool parallel = false;

  std::filesystem::path resolve(const Corpus& corpus, const std::string& path) const;
};

using Assignment = std::map<std::string, std::string>;

struct PolicyOutcome {
  Assignment assignment;
  /// Per-utterance score used by threshold-style policies, corpus order.
  std::vector<std::optional<double>> scores;
};

/// Named score of a record: scores[name], or for "entropy_mean" the entropy of
/// the cheap model's logit file when no precomputed value is stored.
double record_score(const UtteranceRecord& r, const std::string& name, const Corpus& corpus,
                    const RoutingContext& ctx);

/// Decider scores of every record, corpus order.
std::vector<double> decider_scores(const Corpus& corpus, const DeciderModel& model, const RoutingContext& ctx);

PolicyOutcome apply_policy(const RoutingPolicy& policy, const Corpus& corpus, const RoutingContext& ctx);

struct SweepRow {
  double threshold = 0.0;
  double mean_wer = 0.0;
  Macs total_macs = 0;
  double frac_expensive = 0.0;
};

/// Decider-threshold sweep: expensive iff score >= h, costed as the decider pipeline.
std::vector<SweepRow> sweep_thresholds(const std::map<std::string, double>& scores, const Corpus& corpus,
                                       std::span<const double> grid, const CostSetup& costs, bool parallel = false);

std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace cascade
