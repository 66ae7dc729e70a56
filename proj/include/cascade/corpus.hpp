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
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace cascade {

struct HypothesisRecord {
  std::string hyp_text;
  /// Beam-search token steps actually taken; absent means "use the default rule".
  std::optional<std::uint32_t> decode_steps;

  bool operator==(const HypothesisRecord&) const = default;
};

struct UtteranceRecord {
  std::string utt_id;
  std::string ref_text;
  std::uint32_t enc_frames = 0;
  std::map<std::string, HypothesisRecord> model_outputs;
  std::map<std::string, double> scores;
  std::optional<std::string> accent;
  std::optional<std::string> features_path;
  std::map<std::string, std::string> logits_path;

  const HypothesisRecord& output(const std::string& model_id) const;

  bool operator==(const UtteranceRecord&) const = default;
};

/// Decode steps for a hypothesis: the recorded value, else whitespace tokens + 2
/// (begin and end tokens).
std::uint32_t resolve_decode_steps(const HypothesisRecord& hyp);

struct Corpus {
  std::vector<UtteranceRecord> records;
  /// Model ids in order of first appearance in the manifest.
  std::vector<std::string> model_registry;
  std::string split_name;
  /// Directory relative feature/logit paths are resolved against.
  std::filesystem::path base_dir;

  const UtteranceRecord& find(const std::string& utt_id) const;
  bool has_model(const std::string& model_id) const;
  std::filesystem::path resolve(const std::string& path) const;

  bool operator==(const Corpus&) const = default;
};

/// Encoder activations of one utterance, laid out [layer][frame][dim].
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(std::size_t layers, std::size_t frames, std::size_t dims);
  FeatureTensor(std::size_t layers, std::size_t frames, std::size_t dims, std::vector<float> data);

  std::size_t layers() const { return layers_; }
  std::size_t frames() const { return frames_; }
  std::size_t dims() const { return dims_; }

  float& at(std::size_t l, std::size_t t, std::size_t d) { return data_[(l * frames_ + t) * dims_ + d]; }
  float at(std::size_t l, std::size_t t, std::size_t d) const {
    return data_[(l * frames_ + t) * dims_ + d];
  }
  std::span<const float> layer(std::size_t l) const {
    return {data_.data() + l * frames_ * dims_, frames_ * dims_};
  }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const FeatureTensor&) const = default;

 private:
  std::size_t layers_ = 0;
  std::size_t frames_ = 0;
  std::size_t dims_ = 0;
  std::vector<float> data_;
};

/// Unnormalized decoder logits, [step][vocab].
struct LogitSequence {
  std::size_t steps = 0;
  std::size_t vocab = 0;
  std::vector<float> data;

  std::span<const float> step(std::size_t s) const { return {data.data() + s * vocab, vocab}; }
};

Corpus load_manifest(const std::filesystem::path& path);
Corpus parse_manifest(std::string_view text, std::string split_name = "");
void save_manifest(const Corpus& corpus, const std::filesystem::path& path);
std::string manifest_line(const UtteranceRecord& record);

FeatureTensor load_features(const std::filesystem::path& path);
FeatureTensor decode_features(std::span<const std::uint8_t> bytes);
void save_features(const FeatureTensor& tensor, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const FeatureTensor& tensor);

LogitSequence load_logits(const std::filesystem::path& path);
LogitSequence decode_logits(std::span<const std::uint8_t> bytes);
void save_logits(const LogitSequence& logits, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_logits(const LogitSequence& logits);

enum class Capability { kFeatures, kLogitsEntropy, kSnr, kAccent, kDecodeSteps };

std::string_view capability_name(Capability c);
Capability parse_capability(std::string_view name);

struct ValidationReport {
  /// utt_ids lacking each capability, in corpus order.
  std::map<Capability, std::vector<std::string>> missing;
  std::set<Capability> required;

  bool ok(Capability c) const;
  /// True iff every required capability is present on every record.
  bool ok() const;
  std::string summary() const;
};

ValidationReport validate_corpus(const Corpus& corpus, const std::set<Capability>& required);

/// Throws CapabilityError naming the first offending utt_id if `report` is not ok.
void require(const ValidationReport& report);

bool has_capability(const UtteranceRecord& record, Capability c);

}  // namespace cascade
