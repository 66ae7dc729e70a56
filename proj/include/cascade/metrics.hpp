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

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/corpus.hpp"

namespace cascade {

using Tokens = std::vector<std::string>;

/// Lowercases ASCII letters, deletes punctuation (apostrophes survive only
/// between two alphanumerics) and splits on whitespace runs. Bytes >= 0x80
/// are kept verbatim so UTF-8 words pass through.
Tokens tokenize(std::string_view text);

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_len = 0;
  double wer = 0.0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  bool operator==(const WerBreakdown&) const = default;
};

/// Levenshtein alignment with unit costs. Backtrace prefers the diagonal
/// (match/substitution), then deletion, then insertion. `ref` must be non-empty.
WerBreakdown edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

WerBreakdown wer(std::string_view ref_text, std::string_view hyp_text);

/// 1 iff the cheap model is strictly worse; ties keep the cheap model.
int route_label(double wer_cheap, double wer_expensive);

/// WER of every record for one model, in corpus order.
std::vector<double> model_wers(const Corpus& corpus, const std::string& model_id);

/// Route labels for (cheap, expensive) over the corpus, in corpus order.
std::vector<int> route_labels(const Corpus& corpus, const std::string& cheap, const std::string& expensive);

/// cell[i][j] = percentage of utterances where model i's WER <= model j's.
std::vector<std::vector<double>> relative_perf_matrix(const Corpus& corpus,
                                                      std::span<const std::string> models);

double decision_accuracy(std::span<const int> predicted, std::span<const int> labels);

double pearson(std::span<const double> xs, std::span<const double> ys);

/// Fractional (average) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> xs);

double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace cascade
