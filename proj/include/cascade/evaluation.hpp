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

#include <optional>
#include <string>
#include <vector>

#include "cascade/corpus.hpp"
#include "cascade/costmodel.hpp"
#include "cascade/decider.hpp"
#include "cascade/routing.hpp"

namespace cascade {

struct EvalRow {
  std::string utt_id;
  std::string assigned_model;
  double wer = 0.0;
  Macs macs = 0;
  std::optional<int> label;
  std::optional<double> score;
};

struct EvalReport {
  std::string policy;
  PipelineKind pipeline = PipelineKind::kDirect;
  double mean_wer = 0.0;
  Macs total_macs = 0;
  std::optional<double> decision_accuracy;
  double frac_expensive = 0.0;
  MacReport macs;
  std::vector<EvalRow> rows;  // corpus order
};

/// Routes the corpus with `policy`, then scores WER, MACs and decision accuracy.
/// mean_wer is the mean of sentence WERs, summed in utt_id order.
EvalReport evaluate(const Corpus& corpus, const RoutingPolicy& policy, const CostSetup& costs,
                    const RoutingContext& ctx);

/// Same, with the cost accounting forced (e.g. fixed policies costed as the decider pipeline).
EvalReport evaluate(const Corpus& corpus, const RoutingPolicy& policy, const CostSetup& costs,
                    const RoutingContext& ctx, PipelineKind accounting);

std::string report_json(const EvalReport& report);

/// Loads every record's features and its route label.
std::vector<LabeledSample> labeled_samples(const Corpus& corpus, const RoutingContext& ctx);

/// Reads "a,b,c" or "lo:hi:count" (inclusive linspace).
std::vector<double> parse_grid(std::string_view text);

}  // namespace cascade
