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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cascade/corpus.hpp"
#include "cascade/metrics.hpp"
#include "cascade/rng.hpp"

namespace cascade {

/// Desk-scale stand-in for a real corpus. Features carry a planted statistic
/// (mean of dim 0 over time in one layer) whose sign decides the route label;
/// hypotheses are built so that both models' WERs are exact.
struct SyntheticSpec {
  std::size_t n_samples = 100;
  std::uint32_t layers = 3;
  std::uint32_t frames_min = 16;
  std::uint32_t frames_max = 24;
  std::uint32_t dims = 8;
  /// Layer holding the planted signal; -1 puts it in every layer.
  std::int32_t planted_layer = -1;
  /// Magnitude of the dim-0 offset added with the label's sign.
  double planted_shift = 1.0;
  /// Probability of flipping the label away from the planted rule.
  double label_noise = 0.0;
  std::uint32_t ref_len_min = 4;
  std::uint32_t ref_len_max = 12;
  /// Probability that a label-0 utterance has equal WERs (otherwise cheap is strictly better).
  double tie_prob = 0.6;
  std::string cheap_model = "tiny";
  std::string expensive_model = "small";
  std::string id_prefix = "utt";
  /// Vocabulary of the cheap model's logit files; 0 disables logit files.
  std::uint32_t logit_vocab = 16;
  std::uint64_t seed = 0;
};

/// Builds a hypothesis of `ref` whose WER against it is exactly target_errors / |ref|.
/// Errors are substitutions with out-of-vocabulary words, then deletions,
/// then insertions when target_errors exceeds |ref|.
Tokens realize_hypothesis(const Tokens& ref, std::size_t target_errors, Rng& rng);

/// Same, from a requested WER; throws DomainError when wer * |ref| is not an integer.
Tokens realize_hypothesis_wer(const Tokens& ref, double target_wer, Rng& rng);

/// Label implied by a feature tensor under the planted rule (no noise).
int planted_label(const FeatureTensor& features, std::int32_t planted_layer);

/// Generates the corpus and writes feature/logit files under `out_dir`
/// (paths in the records are relative to it).
Corpus make_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// In-memory variant: same records, no files. Feature tensors returned alongside.
struct SyntheticData {
  Corpus corpus;
  std::vector<FeatureTensor> features;
  std::vector<LogitSequence> logits;
};
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace cascade
