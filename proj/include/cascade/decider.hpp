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
#include <span>
#include <string>
#include <vector>

#include "cascade/corpus.hpp"

namespace cascade {

/// Shape of the decision network. Every conv is stride 1 with edge-replicated
/// "same" padding; the stem is a 1x1 conv from the input dims to `channels`.
struct DeciderConfig {
  std::uint32_t in_layers = 1;
  std::uint32_t in_dims = 1;
  std::uint32_t channels = 256;
  std::uint32_t res_blocks = 3;
  std::uint32_t kernel = 3;
  std::uint64_t seed = 0;
  /// When false the network reads the last layer directly and has no layer logits.
  bool layer_weights = true;

  void validate() const;
  bool operator==(const DeciderConfig&) const = default;
};

/// Offsets of each parameter group inside the flat parameter vector. The same
/// order is used on disk.
struct ParamLayout {
  struct Conv {
    std::size_t weight, bias;  // weight is [out][in][kernel]
  };
  std::size_t layer_logits = 0;
  std::size_t n_layer_logits = 0;
  Conv stem{};
  std::vector<Conv> block_conv1, block_conv2;
  std::size_t head_weight = 0, head_bias = 0;
  std::size_t total = 0;

  static ParamLayout of(const DeciderConfig& cfg);
};

class DeciderModel {
 public:
  DeciderModel() = default;
  /// Seeded initialization: He-normal convs; biases, layer logits and head start at zero.
  explicit DeciderModel(const DeciderConfig& cfg);
  DeciderModel(const DeciderConfig& cfg, std::vector<double> params);

  const DeciderConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<const double> layer_logits() const { return view(layout_.layer_logits, layout_.n_layer_logits); }
  std::span<double> layer_logits() { return view(layout_.layer_logits, layout_.n_layer_logits); }
  std::span<double> head_weight() { return view(layout_.head_weight, cfg_.channels); }
  double& head_bias() { return params_[layout_.head_bias]; }

  /// softmax(layer_logits); {1} for a model without layer weights.
  std::vector<double> layer_weights() const;

  bool operator==(const DeciderModel& o) const { return cfg_ == o.cfg_ && params_ == o.params_; }

 private:
  std::span<double> view(std::size_t off, std::size_t n) { return {params_.data() + off, n}; }
  std::span<const double> view(std::size_t off, std::size_t n) const { return {params_.data() + off, n}; }

  DeciderConfig cfg_;
  ParamLayout layout_;
  std::vector<double> params_;
};

enum class Execution { kSerial, kParallel };

std::vector<double> softmax(std::span<const double> logits);

/// out[t*D + d] = sum_l softmax(logits)[l] * features[l,t,d].
std::vector<double> weighted_layer_sum(const FeatureTensor& features, std::span<const double> layer_logits);

/// Pre-sigmoid output.
double forward_logit(const DeciderModel& model, const FeatureTensor& features,
                     Execution exec = Execution::kSerial);

/// Score in (0, 1); higher means "send to the expensive model".
double forward(const DeciderModel& model, const FeatureTensor& features, Execution exec = Execution::kSerial);

/// Logistic function, clamped to the open interval (0, 1).
double sigmoid(double z);

/// Binary cross-entropy of a probability. Throws DomainError outside (0, 1).
double bce_loss(double score, int label);

/// Same loss evaluated from the logit without forming the probability.
double bce_loss_from_logit(double logit, int label);

struct Gradients {
  double loss = 0.0;
  double score = 0.0;
  std::vector<double> grad;  // same layout as DeciderModel::params()
};

/// Exact gradient of bce_loss(forward(model, features), label).
Gradients backward(const DeciderModel& model, const FeatureTensor& features, int label);

/// Scores many utterances; the parallel variant splits utterances across threads.
std::vector<double> score_batch(const DeciderModel& model, std::span<const FeatureTensor> features,
                                Execution exec = Execution::kSerial);

struct TrainConfig {
  double lr0 = 1e-5;
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Schedule length in optimizer steps; 0 means epochs * batches per epoch.
  std::uint64_t total_steps = 0;

  void validate() const;
};

/// 0.5 * lr0 * (1 + cos(pi * step / total_steps)), step in [0, total_steps].
double cosine_lr(std::uint64_t step, const TrainConfig& cfg);

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const TrainConfig& cfg);

struct LabeledSample {
  std::string utt_id;
  FeatureTensor features;
  int label = 0;
};

struct EpochStats {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;  // learning rate at the last step of the epoch
};

struct TrainResult {
  DeciderModel model;  // snapshot with the best validation accuracy
  std::vector<EpochStats> history;
  std::uint32_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

/// Mini-batch Adam with a cosine schedule. Deterministic for a fixed seed.
TrainResult train(std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set,
                  const DeciderConfig& dcfg, const TrainConfig& tcfg);

/// Percentage of samples with (score >= threshold) == label.
double accuracy_at(const DeciderModel& model, std::span<const LabeledSample> samples, double threshold = 0.5);

void save_model(const DeciderModel& model, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_model(const DeciderModel& model);
DeciderModel load_model(const std::filesystem::path& path);
/// Loads and checks the stored config against `expected` (seed ignored).
DeciderModel load_model(const std::filesystem::path& path, const DeciderConfig& expected);
DeciderModel decode_model(std::span<const std::uint8_t> bytes);

std::string config_to_json(const DeciderConfig& cfg);
DeciderConfig config_from_json(const std::string& text);

}  // namespace cascade
