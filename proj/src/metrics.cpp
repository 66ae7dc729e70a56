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

#include "cascade/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !current.empty() && is_word_byte(static_cast<unsigned char>(current.back())) &&
               i + 1 < text.size() && is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      current.push_back('\'');
    }
    // Any other punctuation is dropped without splitting the word.
  }
  flush();
  return tokens;
}

WerBreakdown edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw DomainError("edit_distance: empty reference");
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  const std::size_t w = m + 1;
  std::vector<std::size_t> dist((n + 1) * w);
  for (std::size_t i = 0; i <= n; ++i) dist[i * w] = i;
  for (std::size_t j = 0; j <= m; ++j) dist[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = dist[(i - 1) * w + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::size_t del = dist[(i - 1) * w + j] + 1;
      const std::size_t ins = dist[i * w + j - 1] + 1;
      dist[i * w + j] = std::min({diag, del, ins});
    }
  }

  WerBreakdown out;
  out.ref_len = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = dist[i * w + j];
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (here == dist[(i - 1) * w + j - 1] + (same ? 0 : 1)) {
        if (!same) ++out.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && here == dist[(i - 1) * w + j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  out.wer = static_cast<double>(out.errors()) / static_cast<double>(n);
  return out;
}

WerBreakdown wer(std::string_view ref_text, std::string_view hyp_text) {
  const Tokens ref = tokenize(ref_text);
  const Tokens hyp = tokenize(hyp_text);
  return edit_distance(ref, hyp);
}

int route_label(double wer_cheap, double wer_expensive) { return wer_cheap > wer_expensive ? 1 : 0; }

std::vector<double> model_wers(const Corpus& corpus, const std::string& model_id) {
  std::vector<double> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) out.push_back(wer(r.ref_text, r.output(model_id).hyp_text).wer);
  return out;
}

std::vector<int> route_labels(const Corpus& corpus, const std::string& cheap, const std::string& expensive) {
  const auto wc = model_wers(corpus, cheap);
  const auto we = model_wers(corpus, expensive);
  std::vector<int> labels(wc.size());
  for (std::size_t i = 0; i < wc.size(); ++i) labels[i] = route_label(wc[i], we[i]);
  return labels;
}

std::vector<std::vector<double>> relative_perf_matrix(const Corpus& corpus, std::span<const std::string> models) {
  if (corpus.records.empty()) throw DomainError("relative_perf_matrix: empty corpus");
  std::vector<std::vector<double>> wers;
  wers.reserve(models.size());
  for (const auto& m : models) wers.push_back(model_wers(corpus, m));

  const double n = static_cast<double>(corpus.records.size());
  std::vector<std::vector<double>> cell(models.size(), std::vector<double>(models.size(), 0.0));
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = 0; j < models.size(); ++j) {
      std::size_t count = 0;
      for (std::size_t a = 0; a < wers[i].size(); ++a) count += wers[i][a] <= wers[j][a] ? 1 : 0;
      cell[i][j] = 100.0 * static_cast<double>(count) / n;
    }
  }
  return cell;
}

double decision_accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size())
    throw DomainError(fmt::format("decision_accuracy: {} predictions vs {} labels", predicted.size(), labels.size()));
  if (predicted.empty()) throw DomainError("decision_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DomainError("pearson: length mismatch");
  if (xs.size() < 2) throw DomainError("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DomainError("spearman: length mismatch");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

}  // namespace cascade
