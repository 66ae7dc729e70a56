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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade/corpus.hpp"
#include "cascade/decider.hpp"

namespace cascade {

using Macs = std::uint64_t;

struct Conv1dSpec {
  std::uint32_t in_ch = 1;
  std::uint32_t out_ch = 1;
  std::uint32_t kernel = 1;
  std::uint32_t stride = 1;

  bool operator==(const Conv1dSpec&) const = default;
};

/// Architecture of an encoder-decoder ASR model, as far as MAC counting needs it.
struct ModelCostConfig {
  std::string model_id;
  std::uint64_t d_model = 1;
  std::uint64_t enc_layers = 1;
  std::uint64_t dec_layers = 1;
  double ffn_mult = 4.0;  // feed-forward width = ffn_mult * d_model, must be integral
  std::uint64_t vocab = 1;
  std::vector<Conv1dSpec> frontend;
  std::uint64_t beam = 1;

  void validate() const;
  std::uint64_t ffn_width() const;
  /// Frames after the front end for `mel_frames` input frames.
  std::uint64_t encoder_frames(std::uint64_t mel_frames) const;
  /// Product of front-end strides.
  std::uint64_t total_stride() const;

  bool operator==(const ModelCostConfig&) const = default;
};

/// Whisper-Tiny-like and Whisper-Small-like shapes (80-bin log-mel input,
/// two-conv front end with stride 2, 51865-token vocabulary, beam 8).
ModelCostConfig tiny_like_config();
ModelCostConfig small_like_config();

/// Same-padding convention: out_frames = ceil(frames_in / stride).
Macs conv1d_macs(const Conv1dSpec& spec, std::uint64_t frames_in);

Macs encoder_macs(const ModelCostConfig& cfg, std::uint64_t mel_frames);

/// Beam search with KV caching; see README for the full accounting.
Macs beam_decode_macs(const ModelCostConfig& cfg, std::uint64_t enc_frames, std::uint64_t decode_steps);

struct DeciderMacBreakdown {
  Macs layer_sum = 0;
  Macs stem = 0;
  Macs blocks = 0;
  Macs head = 0;
  Macs total() const { return layer_sum + stem + blocks + head; }
};

DeciderMacBreakdown decider_mac_breakdown(const DeciderConfig& cfg, std::uint64_t layers, std::uint64_t frames,
                                          std::uint64_t dims);
Macs decider_macs(const DeciderConfig& cfg, std::uint64_t layers, std::uint64_t frames, std::uint64_t dims);

/// How a routing policy is paid for.
enum class PipelineKind {
  /// Each utterance pays encode + beam decode of its assigned model only.
  kDirect,
  /// Expensive encoder + decider on every utterance; cheap-routed ones also pay
  /// the cheap model end to end, expensive-routed ones only the expensive decode.
  kDecider,
  /// Cheap encoder + greedy decode on every utterance; expensive-routed ones
  /// also pay the expensive model end to end.
  kEntropyCascade,
};

std::string_view pipeline_name(PipelineKind kind);

struct CostSetup {
  ModelCostConfig cheap;
  ModelCostConfig expensive;
  /// Decider shape; its frame count is each utterance's enc_frames.
  std::optional<DeciderConfig> decider;
};

/// Reads {"cheap": {...}, "expensive": {...}, "decider": {...}?}.
CostSetup load_cost_config(const std::filesystem::path& path);
CostSetup parse_cost_config(const std::string& text);
std::string cost_config_to_json(const CostSetup& setup);

struct UtteranceMacs {
  std::string utt_id;
  Macs encode = 0;
  Macs decode = 0;
  Macs decider = 0;
  Macs total() const { return encode + decode + decider; }
};

struct MacReport {
  Macs encode_macs = 0;
  Macs decode_macs = 0;
  Macs decider_macs = 0;
  Macs total_macs = 0;
  std::vector<UtteranceMacs> rows;  // corpus order
  std::string formula;              // human-readable accounting summary
};

/// Per-utterance cost of one record under an assignment ("cheap"/"expensive" model ids).
UtteranceMacs utterance_macs(const UtteranceRecord& record, const std::string& assigned_model, PipelineKind kind,
                             const CostSetup& setup);

/// `assignments` maps utt_id to a model id (the cheap or expensive model's id).
MacReport pipeline_macs(const Corpus& corpus, const std::map<std::string, std::string>& assignments,
                        PipelineKind kind, const CostSetup& setup, bool parallel = false);

std::string mac_report_json(const MacReport& report);
std::string mac_report_csv(const MacReport& report);

}  // namespace cascade
