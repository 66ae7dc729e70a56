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

#include "cascade/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

constexpr std::array<std::string_view, 32> kWords = {
    "the",   "cat",   "sat",   "on",    "a",     "mat",   "dog",   "ran",   "to",     "house", "big",
    "small", "red",   "blue",  "river", "stone", "light", "dark",  "north", "south",  "train", "voice",
    "word",  "sound", "clear", "quick", "slow",  "green", "field", "city",  "window", "paper"};

constexpr std::array<std::string_view, 8> kAccents = {"american", "british", "canadian", "indian",
                                                      "scottish", "australian", "irish", "african"};

std::string join(const Tokens& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string foreign_word(Rng& rng) { return fmt::format("xq{}", rng.below(1000)); }

// Error counts (cheap, expensive) consistent with `label`.
std::pair<std::size_t, std::size_t> error_pair(int label, std::size_t n, double tie_prob, Rng& rng) {
  const std::size_t low_cap = std::max<std::size_t>(1, n / 3);
  if (label) {
    const std::size_t e_exp = rng.below(low_cap);               // [0, n/3)
    const std::size_t e_cheap = e_exp + 1 + rng.below(n - e_exp);  // (e_exp, n]
    return {e_cheap, e_exp};
  }
  if (rng.bernoulli(tie_prob)) {
    const std::size_t e = rng.below(low_cap);
    return {e, e};
  }
  const std::size_t e_cheap = rng.below(low_cap);
  const std::size_t e_exp = e_cheap + 1 + rng.below(n - e_cheap);
  return {e_cheap, e_exp};
}

}  // namespace

Tokens realize_hypothesis(const Tokens& ref, std::size_t target_errors, Rng& rng) {
  const std::size_t n = ref.size();
  if (n == 0) throw DomainError("realize_hypothesis: empty reference");
  if (target_errors > n) {
    Tokens hyp;
    for (std::size_t i = 0; i < n; ++i) hyp.push_back(foreign_word(rng));
    for (std::size_t k = n; k < target_errors; ++k) {
      const auto at = static_cast<std::ptrdiff_t>(rng.below(hyp.size() + 1));
      hyp.insert(hyp.begin() + at, foreign_word(rng));
    }
    return hyp;
  }
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  rng.shuffle(std::span<std::size_t>(positions));
  positions.resize(target_errors);
  const std::size_t deletions = target_errors ? static_cast<std::size_t>(rng.below(target_errors + 1)) : 0;
  std::vector<char> action(n, 0);  // 0 keep, 1 delete, 2 substitute
  for (std::size_t k = 0; k < positions.size(); ++k) action[positions[k]] = k < deletions ? 1 : 2;
  Tokens hyp;
  for (std::size_t i = 0; i < n; ++i) {
    if (action[i] == 0) hyp.push_back(ref[i]);
    if (action[i] == 2) hyp.push_back(foreign_word(rng));
  }
  return hyp;
}

Tokens realize_hypothesis_wer(const Tokens& ref, double target_wer, Rng& rng) {
  if (ref.empty()) throw DomainError("realize_hypothesis_wer: empty reference");
  if (!(target_wer >= 0.0) || !std::isfinite(target_wer))
    throw DomainError(fmt::format("requested WER {} is not a non-negative number", target_wer));
  const double errors = target_wer * static_cast<double>(ref.size());
  const double rounded = std::round(errors);
  if (std::abs(errors - rounded) > 1e-9)
    throw DomainError(fmt::format("requested WER {} is not representable with reference length {}", target_wer,
                                  ref.size()));
  return realize_hypothesis(ref, static_cast<std::size_t>(rounded), rng);
}

int planted_label(const FeatureTensor& f, std::int32_t planted_layer) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t l = 0; l < f.layers(); ++l) {
    if (planted_layer >= 0 && l != static_cast<std::size_t>(planted_layer)) continue;
    for (std::size_t t = 0; t < f.frames(); ++t) sum += f.at(l, t, 0);
    count += f.frames();
  }
  return sum / static_cast<double>(count) > 0.0 ? 1 : 0;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_samples == 0) throw DomainError("synthetic: n_samples must be positive");
  if (spec.layers == 0 || spec.dims == 0 || spec.frames_min == 0 || spec.frames_max < spec.frames_min)
    throw DomainError("synthetic: invalid feature shape");
  if (spec.planted_layer >= static_cast<std::int32_t>(spec.layers))
    throw DomainError("synthetic: planted_layer out of range");
  if (spec.ref_len_min == 0 || spec.ref_len_max < spec.ref_len_min)
    throw DomainError("synthetic: invalid reference length range");

  SyntheticData out;
  out.corpus.model_registry = {spec.cheap_model, spec.expensive_model};
  out.corpus.split_name = spec.id_prefix;
  const Rng root(spec.seed);
  const int width = static_cast<int>(std::to_string(spec.n_samples).size());

  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    Rng rng = root.split(i).split(spec.id_prefix);
    UtteranceRecord r;
    r.utt_id = fmt::format("{}{:0{}}", spec.id_prefix, i, width);

    const auto frames = static_cast<std::uint32_t>(spec.frames_min + rng.below(spec.frames_max - spec.frames_min + 1));
    FeatureTensor f(spec.layers, frames, spec.dims);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    for (std::size_t l = 0; l < spec.layers; ++l) {
      const bool planted = spec.planted_layer < 0 || l == static_cast<std::size_t>(spec.planted_layer);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t d = 0; d < spec.dims; ++d) {
          double v = rng.normal();
          if (planted && d == 0) v += sign * spec.planted_shift;
          f.at(l, t, d) = static_cast<float>(v);
        }
    }
    int label = planted_label(f, spec.planted_layer);
    if (spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise)) label = 1 - label;

    const std::size_t n = spec.ref_len_min + rng.below(spec.ref_len_max - spec.ref_len_min + 1);
    Tokens ref;
    for (std::size_t k = 0; k < n; ++k) ref.emplace_back(kWords[rng.below(kWords.size())]);
    const auto [e_cheap, e_exp] = error_pair(label, n, spec.tie_prob, rng);
    r.ref_text = join(ref);
    r.enc_frames = frames;
    r.model_outputs[spec.cheap_model].hyp_text = join(realize_hypothesis(ref, e_cheap, rng));
    r.model_outputs[spec.expensive_model].hyp_text = join(realize_hypothesis(ref, e_exp, rng));
    r.features_path = fmt::format("features/{}.ftns", r.utt_id);
    r.scores["snr"] = 25.0 - 6.0 * label + rng.normal(0.0, 6.0);
    r.accent = std::string(kAccents[rng.below(kAccents.size())]);

    LogitSequence logits;
    if (spec.logit_vocab > 0) {
      logits.steps = resolve_decode_steps(r.model_outputs[spec.cheap_model]);
      logits.vocab = spec.logit_vocab;
      // Peakier rows (lower entropy) when the cheap model is right.
      const double peak = label ? 1.5 : 4.0;
      for (std::size_t s = 0; s < logits.steps; ++s) {
        const auto top = rng.below(logits.vocab);
        for (std::size_t v = 0; v < logits.vocab; ++v)
          logits.data.push_back(static_cast<float>(rng.normal() + (v == top ? peak + rng.normal() : 0.0)));
      }
      r.logits_path[spec.cheap_model] = fmt::format("logits/{}.lgts", r.utt_id);
    }

    out.corpus.records.push_back(std::move(r));
    out.features.push_back(std::move(f));
    out.logits.push_back(std::move(logits));
  }
  return out;
}

Corpus make_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  SyntheticData data = generate_synthetic(spec);
  for (std::size_t i = 0; i < data.corpus.records.size(); ++i) {
    const auto& r = data.corpus.records[i];
    save_features(data.features[i], out_dir / *r.features_path);
    if (auto it = r.logits_path.find(spec.cheap_model); it != r.logits_path.end())
      save_logits(data.logits[i], out_dir / it->second);
  }
  data.corpus.base_dir = out_dir;
  return std::move(data.corpus);
}

}  // namespace cascade
