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

// Small builders shared by the unit and acceptance tests.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cascade/corpus.hpp"
#include "cascade/costmodel.hpp"
#include "cascade/rng.hpp"

namespace cascade::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("cascade-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline UtteranceRecord make_record(std::string id, std::string ref, std::string hyp_cheap, std::string hyp_exp,
                                   std::uint32_t frames = 10) {
  UtteranceRecord r;
  r.utt_id = std::move(id);
  r.ref_text = std::move(ref);
  r.enc_frames = frames;
  r.model_outputs["tiny"].hyp_text = std::move(hyp_cheap);
  r.model_outputs["small"].hyp_text = std::move(hyp_exp);
  return r;
}

inline Corpus make_corpus(std::vector<UtteranceRecord> records) {
  Corpus c;
  c.records = std::move(records);
  c.model_registry = {"tiny", "small"};
  return c;
}

/// Random toy corpus: references over a small alphabet, hypotheses perturbed
/// independently so WER pairs cover ties and both orderings.
inline Corpus random_toy_corpus(Rng& rng, std::size_t n) {
  static const char* words[] = {"a", "b", "c", "d", "e"};
  auto sentence = [&](std::size_t len) {
    std::string s;
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s += ' ';
      s += words[rng.below(5)];
    }
    return s;
  };
  std::vector<UtteranceRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string ref = sentence(1 + rng.below(6));
    auto perturb = [&] { return rng.bernoulli(0.3) ? ref : sentence(rng.below(7)); };
    recs.push_back(make_record(fmt::format("r{:03}", i), ref, perturb(), perturb(),
                               static_cast<std::uint32_t>(5 + rng.below(40))));
  }
  return make_corpus(std::move(recs));
}

/// Gives both models the cheap model's step count on every utterance. Under
/// equal step counts the expensive route never costs less than the cheap one.
inline Corpus with_shared_steps(Corpus c) {
  for (auto& r : c.records) {
    const auto steps = resolve_decode_steps(r.output("tiny"));
    for (auto& [_, out] : r.model_outputs) out.decode_steps = steps;
  }
  return c;
}

/// Tiny cost setup whose numbers are easy to audit by hand.
inline CostSetup toy_costs() {
  ModelCostConfig cheap;
  cheap.model_id = "tiny";
  cheap.d_model = 4;
  cheap.enc_layers = 1;
  cheap.dec_layers = 1;
  cheap.ffn_mult = 2.0;
  cheap.vocab = 10;
  cheap.beam = 2;
  ModelCostConfig exp = cheap;
  exp.model_id = "small";
  exp.d_model = 8;
  exp.enc_layers = 2;
  exp.dec_layers = 2;
  return {cheap, exp, std::nullopt};
}

}  // namespace cascade::testing
