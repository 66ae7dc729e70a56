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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cascade/corpus.hpp"
#include "cascade/costmodel.hpp"
#include "cascade/decider.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/metrics.hpp"
#include "cascade/routing.hpp"
#include "cascade/synthetic.hpp"
#include "../support/fixtures.hpp"
#include "../support/gradcheck.hpp"

using namespace cascade;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first failure message; later ones only flip the flag.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (out_.pass) out_.detail = what;
    out_.pass = false;
  }
  Outcome& result() { return out_; }

 private:
  Outcome out_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

std::size_t oracle_distance(const Tokens& a, std::size_t i, const Tokens& b, std::size_t j,
                            std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const auto key = std::make_pair(i, j);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  const std::size_t best = std::min({oracle_distance(a, i + 1, b, j + 1, memo) + (a[i] == b[j] ? 0 : 1),
                                     oracle_distance(a, i + 1, b, j, memo) + 1,
                                     oracle_distance(a, i, b, j + 1, memo) + 1});
  memo[key] = best;
  return best;
}

Outcome criterion_edit_distance() {
  Checker c;
  Rng rng(1001);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 600; ++trial) {
    auto draw = [&](std::size_t min_len) {
      Tokens t(min_len + rng.below(9 - min_len));
      for (auto& w : t) w = std::string(1, static_cast<char>('a' + rng.below(5)));
      return t;
    };
    const Tokens ref = draw(1), hyp = draw(0);
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    const std::size_t expected = oracle_distance(ref, 0, hyp, 0, memo);
    const auto got = edit_distance(ref, hyp);
    c.expect(got.errors() == expected, fmt::format("trial {}: {} != oracle {}", trial, got.errors(), expected));
    c.expect(got.wer == static_cast<double>(expected) / static_cast<double>(ref.size()),
             fmt::format("trial {}: WER mismatch", trial));
  }
  const double dt = seconds_since(t0);
  c.expect(dt < 10.0, fmt::format("runtime {:.1f}s", dt));
  if (c.result().pass) c.result().detail = fmt::format("600 pairs, {:.2f}s", dt);
  return c.result();
}

// ---------------------------------------------------------------- 2

Outcome criterion_gradcheck() {
  Checker c;
  Rng rng(1002);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t checked = 0;
  double worst_rel = 0, worst_abs = 0;
  for (int trial = 0; trial < 24; ++trial) {
    auto g = testing::random_grad_case(rng);
    const auto r = testing::check_gradients(g.model, g.features, g.label);
    checked += r.checked;
    worst_rel = std::max(worst_rel, r.worst_rel);
    worst_abs = std::max(worst_abs, r.worst_abs);
    c.expect(r.failures == 0, fmt::format("case {}: {}", trial, r.first_failure));
  }
  const double dt = seconds_since(t0);
  c.expect(dt < 60.0, fmt::format("runtime {:.1f}s", dt));
  if (c.result().pass)
    c.result().detail = fmt::format("24 configs, {} params, worst rel {:.2e}, worst abs {:.2e}, {:.1f}s", checked,
                                    worst_rel, worst_abs, dt);
  return c.result();
}

// ---------------------------------------------------------------- 3

struct PlantedSetup {
  SyntheticSpec spec;
  DeciderConfig dcfg;
  TrainConfig tcfg;
};

PlantedSetup planted_setup() {
  PlantedSetup p;
  p.spec.n_samples = 2500;
  p.spec.layers = 3;
  p.spec.dims = 8;
  p.spec.logit_vocab = 0;
  p.spec.seed = 7;
  p.dcfg.in_layers = 3;
  p.dcfg.in_dims = 8;
  p.dcfg.channels = 16;
  p.dcfg.seed = 1;
  p.tcfg.lr0 = 1e-5;
  p.tcfg.epochs = 30;
  p.tcfg.batch_size = 32;
  p.tcfg.seed = 1;
  return p;
}

std::vector<LabeledSample> to_samples(const SyntheticData& data, std::size_t begin, std::size_t end) {
  const auto labels = route_labels(data.corpus, "tiny", "small");
  std::vector<LabeledSample> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back({data.corpus.records[i].utt_id, data.features[i], labels[i]});
  return out;
}

std::optional<DeciderModel> g_planted_model;

Outcome criterion_planted() {
  Checker c;
  const auto p = planted_setup();
  const auto data = generate_synthetic(p.spec);
  const auto tr = to_samples(data, 0, 2000), va = to_samples(data, 2000, 2500);
  const auto t0 = std::chrono::steady_clock::now();
  const auto first = train(tr, va, p.dcfg, p.tcfg);
  const double dt = seconds_since(t0);
  const auto second = train(tr, va, p.dcfg, p.tcfg);
  c.expect(first.best_val_accuracy >= 95.0,
           fmt::format("best validation accuracy {:.1f}% < 95%", first.best_val_accuracy));
  c.expect(first.model == second.model && first.best_epoch == second.best_epoch, "training is not deterministic");
  c.expect(dt < 300.0, fmt::format("runtime {:.1f}s", dt));
  c.result().detail = fmt::format("val {:.1f}% at epoch {}, {} channels, {:.1f}s per run{}", first.best_val_accuracy,
                                  first.best_epoch, p.dcfg.channels, dt,
                                  c.result().pass ? "" : " | " + c.result().detail);
  g_planted_model = first.model;
  return c.result();
}

// ---------------------------------------------------------------- 4

Outcome criterion_calibration() {
  Checker c;
  Rng rng(1004);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    const bool coarse = trial % 2 == 0;
    std::vector<ScoredSample> s;
    for (std::size_t i = 0; i < n; ++i)
      s.push_back({fmt::format("s{}", i), coarse ? static_cast<double>(rng.below(5)) : rng.uniform(),
                   static_cast<int>(rng.below(2))});
    s[0].label = 0;
    s[1].label = 1;
    const auto orient = trial % 3 == 0 ? Orientation::kLowerMeansExpensive : Orientation::kHigherMeansExpensive;
    // Every distinct partition is produced by some observed score or by +/-inf.
    std::vector<double> candidates{kInf, -kInf};
    for (const auto& x : s) candidates.push_back(x.score);
    double best = kInf;
    for (double h : candidates) {
      const auto r = error_rates(s, h, orient);
      best = std::min(best, std::abs(r.fpr - r.fnr));
    }
    const auto got = error_rates(s, calibrate_eer(s, orient), orient);
    c.expect(std::abs(std::abs(got.fpr - got.fnr) - best) < 1e-12,
             fmt::format("EER trial {}: gap {} vs exhaustive {}", trial, std::abs(got.fpr - got.fnr), best));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<double> w(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = static_cast<double>(rng.below(6)) / 4.0;
      y[i] = static_cast<int>(rng.below(2));
    }
    const double t = calibrate_no_false_negative(w, y);
    auto false_negatives = [&](double h) {
      std::size_t fn = 0;
      for (std::size_t i = 0; i < n; ++i) fn += y[i] == 1 && !(w[i] > h);
      return fn;
    };
    c.expect(false_negatives(t) == 0, fmt::format("no-FN trial {}: false negatives at {}", trial, t));
    for (double v : w)
      if (v > t) c.expect(false_negatives(v) > 0, fmt::format("no-FN trial {}: {} is not maximal", trial, t));
  }
  if (c.result().pass) c.result().detail = "100 EER sets, 100 no-FN sets";
  return c.result();
}

// ---------------------------------------------------------------- 5

Outcome criterion_oracle() {
  Checker c;
  Rng rng(1005);
  const auto costs = testing::toy_costs();
  for (int trial = 0; trial < 100; ++trial) {
    auto corpus = testing::random_toy_corpus(rng, 5 + rng.below(40));
    for (auto& r : corpus.records) r.scores["snr"] = rng.uniform(0.0, 40.0);
    const std::size_t n = corpus.records.size();
    const auto wc = model_wers(corpus, "tiny"), we = model_wers(corpus, "small");
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += std::min(wc[i], we[i]);
    const double expected = sum / static_cast<double>(n);
    const auto oracle = evaluate(corpus, RoutingPolicy::oracle(), costs, {});
    c.expect(oracle.mean_wer == expected,
             fmt::format("trial {}: oracle mean {} != mean of minima {}", trial, oracle.mean_wer, expected));
    c.expect(oracle.decision_accuracy && *oracle.decision_accuracy == 100.0,
             fmt::format("trial {}: oracle decision accuracy below 100%", trial));

    std::vector<RoutingPolicy> others{RoutingPolicy::fixed_cheap(), RoutingPolicy::fixed_expensive(),
                                      RoutingPolicy::wer_oracle(calibrate_no_false_negative(
                                          wc, route_labels(corpus, "tiny", "small")))};
    for (int k = 0; k < 5; ++k) {
      others.push_back(RoutingPolicy::wer_oracle(rng.uniform(0.0, 1.5)));
      others.push_back(
          RoutingPolicy::threshold_on("snr", rng.uniform(0.0, 40.0), Orientation::kLowerMeansExpensive));
    }
    for (const auto& p : others) {
      const auto rep = evaluate(corpus, p, costs, {});
      c.expect(oracle.mean_wer <= rep.mean_wer,
               fmt::format("trial {}: {} beats the oracle ({} < {})", trial, p.describe(), rep.mean_wer,
                           oracle.mean_wer));
    }
  }
  if (c.result().pass) c.result().detail = "100 corpora, 13 competing policies each";
  return c.result();
}

// ---------------------------------------------------------------- 6

Outcome criterion_costmodel() {
  Checker c;
  // Hand-derived values for the toy configurations.
  c.expect(conv1d_macs({2, 3, 3, 1}, 10) == 180, "conv1d 2->3 k3 T10");
  c.expect(conv1d_macs({4, 8, 3, 2}, 9) == 480, "conv1d 4->8 k3 s2 T9");
  ModelCostConfig enc;
  enc.model_id = "toy";
  enc.d_model = 4;
  enc.enc_layers = 1;
  enc.dec_layers = 1;
  enc.ffn_mult = 4.0;
  enc.vocab = 5;
  c.expect(encoder_macs(enc, 2) == 416, "encoder d4 T2");
  ModelCostConfig dec = enc;
  dec.d_model = 2;
  dec.ffn_mult = 2.0;
  dec.beam = 1;
  c.expect(beam_decode_macs(dec, 3, 1) == 90, "decode d2 T3 one step");
  c.expect(beam_decode_macs(dec, 3, 2) == 160, "decode d2 T3 two steps");
  DeciderConfig d;
  d.in_layers = 2;
  d.in_dims = 16;
  c.expect(decider_macs(d, 2, 100, 16) == 2 * 100 * 16 + 16 * 256 * 100 + 2 * 3 * (256 * 256 * 3 * 100) + 256,
           "decider default T100");

  // Decode-heavy split on synthetic utterances with beam 8.
  CostSetup setup{tiny_like_config(), small_like_config(), std::nullopt};
  std::size_t checked = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticSpec spec;
    spec.n_samples = 200;
    spec.seed = seed;
    spec.logit_vocab = 0;
    const auto data = generate_synthetic(spec);
    for (const auto& r : data.corpus.records)
      for (const auto* m : {&setup.cheap, &setup.expensive}) {
        const auto u = utterance_macs(r, m->model_id, PipelineKind::kDirect, setup);
        c.expect(u.decode > u.encode, fmt::format("{} on {}: decode {} <= encode {}", m->model_id, r.utt_id,
                                                  u.decode, u.encode));
        ++checked;
      }
  }

  // Decider share of the expensive pipeline at T >= 100.
  DeciderConfig full;
  full.in_layers = 13;
  full.in_dims = 768;
  setup.decider = full;
  double worst_share = 0;
  SyntheticSpec long_spec;
  long_spec.n_samples = 100;
  long_spec.frames_min = 100;
  long_spec.frames_max = 1500;
  long_spec.logit_vocab = 0;
  long_spec.seed = 4;
  for (const auto& r : generate_synthetic(long_spec).corpus.records) {
    const auto u = utterance_macs(r, "small", PipelineKind::kDecider, setup);
    const double share = static_cast<double>(u.decider) / static_cast<double>(u.total());
    worst_share = std::max(worst_share, share);
    c.expect(share < 0.05, fmt::format("{}: decider share {:.4f}", r.utt_id, share));
  }
  if (c.result().pass)
    c.result().detail =
        fmt::format("{} utterance/model pairs decode-heavy, worst decider share {:.4f}", checked, worst_share);
  return c.result();
}

// ---------------------------------------------------------------- 7

bool under_chord(const SweepRow& p, const SweepRow& exp, const SweepRow& cheap) {
  if (exp.total_macs == cheap.total_macs) return p.mean_wer <= cheap.mean_wer + 1e-12;
  const double x = static_cast<double>(p.total_macs - cheap.total_macs) /
                   static_cast<double>(exp.total_macs - cheap.total_macs);
  return p.mean_wer <= cheap.mean_wer + x * (exp.mean_wer - cheap.mean_wer) + 1e-12;
}

Outcome criterion_sweep() {
  Checker c;
  Rng rng(1007);
  // Default configs: the expensive decode alone outweighs the whole cheap pass.
  CostSetup costs{tiny_like_config(), small_like_config(), std::nullopt};
  DeciderConfig toy_decider;
  toy_decider.in_layers = 2;
  toy_decider.in_dims = 3;
  toy_decider.channels = 4;
  costs.decider = toy_decider;
  for (int trial = 0; trial < 50; ++trial) {
    const auto corpus = testing::with_shared_steps(testing::random_toy_corpus(rng, 5 + rng.below(30)));
    std::map<std::string, double> scores;
    for (const auto& r : corpus.records) scores[r.utt_id] = rng.uniform();
    std::vector<double> grid{0.0, 2.0};
    for (int k = 0; k < 15; ++k) grid.push_back(rng.uniform());
    std::sort(grid.begin(), grid.end());
    const auto rows = sweep_thresholds(scores, corpus, grid, costs);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      c.expect(rows[i].frac_expensive <= rows[i - 1].frac_expensive, fmt::format("trial {}: fraction rises", trial));
      c.expect(rows[i].total_macs <= rows[i - 1].total_macs, fmt::format("trial {}: MACs rise", trial));
    }
    const auto exp = evaluate(corpus, RoutingPolicy::fixed_expensive(), costs, {}, PipelineKind::kDecider);
    const auto cheap = evaluate(corpus, RoutingPolicy::fixed_cheap(), costs, {}, PipelineKind::kDecider);
    c.expect(rows.front().total_macs == exp.total_macs && rows.front().mean_wer == exp.mean_wer,
             fmt::format("trial {}: h=0 differs from fixed expensive", trial));
    c.expect(rows.back().total_macs == cheap.total_macs && rows.back().mean_wer == cheap.mean_wer,
             fmt::format("trial {}: h=2 differs from fixed cheap", trial));
  }

  // Trained decider on fresh seeded corpora that follow the planted rule.
  if (!g_planted_model) {
    c.expect(false, "planted model unavailable");
    return c.result();
  }
  const auto p = planted_setup();
  CostSetup real{tiny_like_config(), small_like_config(), g_planted_model->config()};
  std::vector<double> grid = parse_grid("0:1:21");
  grid.push_back(2.0);
  int good = 0;
  const int trials = 10;
  for (int trial = 0; trial < trials; ++trial) {
    SyntheticSpec spec = p.spec;
    spec.n_samples = 300;
    spec.seed = 500 + static_cast<std::uint64_t>(trial);
    spec.id_prefix = "test";
    spec.label_noise = 0.1;
    const auto data = generate_synthetic(spec);
    const auto s = score_batch(*g_planted_model, data.features);
    std::map<std::string, double> scores;
    for (std::size_t i = 0; i < s.size(); ++i) scores[data.corpus.records[i].utt_id] = s[i];
    const auto rows = sweep_thresholds(scores, data.corpus, grid, real);
    good += std::all_of(rows.begin(), rows.end(),
                        [&](const SweepRow& r) { return under_chord(r, rows.front(), rows.back()); });
  }
  c.expect(good * 10 >= trials * 8, fmt::format("only {}/{} seeded sweeps under the diagonal", good, trials));
  c.result().detail = fmt::format("50 shape trials; {}/{} seeded sweeps under the diagonal{}", good, trials,
                                  c.result().pass ? "" : " | " + c.result().detail);
  return c.result();
}

// ---------------------------------------------------------------- 8

Outcome criterion_matrix() {
  Checker c;
  Rng rng(1008);
  for (int trial = 0; trial < 100; ++trial) {
    auto corpus = testing::random_toy_corpus(rng, 1 + rng.below(30));
    corpus.model_registry.push_back("medium");
    for (auto& r : corpus.records)
      r.model_outputs["medium"].hyp_text =
          rng.bernoulli(0.5) ? r.ref_text : r.model_outputs["tiny"].hyp_text + " a";
    const auto m = relative_perf_matrix(corpus, corpus.model_registry);
    for (std::size_t i = 0; i < m.size(); ++i) {
      c.expect(m[i][i] == 100.0, fmt::format("trial {}: diagonal {}", trial, m[i][i]));
      for (std::size_t j = 0; j < m.size(); ++j)
        c.expect(m[i][j] + m[j][i] >= 100.0 - 1e-9, fmt::format("trial {}: cell pair ({},{}) below 100", trial, i, j));
    }
  }
  if (c.result().pass) c.result().detail = "100 corpora, 3 models";
  return c.result();
}

// ---------------------------------------------------------------- 9

Outcome criterion_statistics() {
  Checker c;
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const std::vector<double> y{2.0, 1.0, 4.0, 3.0, 7.0, 5.0};
  // Direct formula: cov / (sx * sy) with the means 3.5 and 11/3.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= 6;
  my /= 6;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double r = sxy / std::sqrt(sxx * syy);
  c.expect(std::abs(pearson(x, y) - r) <= 1e-12, fmt::format("pearson {} vs {}", pearson(x, y), r));
  // No ties: rho = 1 - 6 sum d^2 / (n (n^2 - 1)); y ranks are 2 1 4 3 6 5.
  const double rho = 1.0 - 6.0 * 6.0 / (6.0 * 35.0);
  c.expect(std::abs(spearman(x, y) - rho) <= 1e-12, fmt::format("spearman {} vs {}", spearman(x, y), rho));
  // With ties: ranks of {1, 2, 2, 3} are {1, 2.5, 2.5, 4}; against {1, 2, 3, 4} that is 0.9486832980505138.
  const std::vector<double> a{1, 2, 2, 3}, b{1, 2, 3, 4};
  const double tied = 4.5 / std::sqrt(4.5 * 5.0);
  c.expect(std::abs(spearman(a, b) - tied) <= 1e-12, fmt::format("tied spearman {} vs {}", spearman(a, b), tied));

  Rng rng(1009);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.below(30);
    std::vector<double> u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = trial % 2 ? static_cast<double>(rng.below(4)) : rng.normal();
      v[i] = rng.normal();
    }
    const double base = spearman(u, v);
    std::vector<double> u2(n), v2(n);
    for (std::size_t i = 0; i < n; ++i) {
      u2[i] = std::exp(u[i]) * 3 + 1;
      v2[i] = v[i] * v[i] * v[i];
    }
    c.expect(std::abs(spearman(u2, v2) - base) <= 1e-12, fmt::format("trial {}: not rank invariant", trial));
  }
  if (c.result().pass) c.result().detail = fmt::format("pearson {:.15f}, spearman {:.15f}", r, rho);
  return c.result();
}

// ---------------------------------------------------------------- 10

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

// Runs synth -> train -> calibrate -> evaluate -> sweep into `dir`.
std::optional<std::string> pipeline(const fs::path& dir) {
  const std::string cli = CASCADE_CLI_PATH;
  const std::string d = dir.string();
  const std::string common = fmt::format(" --seed 11 --single-thread --cost-config {0}/cost.json", d);
  const std::vector<std::string> steps{
      fmt::format("{0} synth --out-dir {1} --seed 11 --single-thread --n-train 200 --n-val 100 --n-test 100", cli, d),
      fmt::format("{0} train --manifest {1}/train.jsonl --val-manifest {1}/val.jsonl --out-dir {1}/model "
                  "--channels 8 --epochs 3{2}",
                  cli, d, common),
      fmt::format("{0} calibrate --method eer --score decider --model {1}/model/model.dcdr "
                  "--manifest {1}/val.jsonl --out-dir {1}/policy{2}",
                  cli, d, common),
      fmt::format("{0} evaluate --policy {1}/policy/policy.json --manifest {1}/test.jsonl --out-dir {1}/eval{2}", cli,
                  d, common),
      fmt::format("{0} sweep --model {1}/model/model.dcdr --manifest {1}/test.jsonl --out-dir {1}/sweep{2}", cli, d,
                  common)};
  for (const auto& s : steps)
    if (run(s) != 0) return "command failed: " + s;
  return std::nullopt;
}

Outcome criterion_determinism() {
  Checker c;
  testing::TempDir a("accept-a"), b("accept-b");
  for (const auto* dir : {&a, &b})
    if (auto err = pipeline(dir->path())) {
      c.expect(false, *err);
      return c.result();
    }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path());
    ++files;
    c.expect(fs::exists(b.path() / rel), fmt::format("{} missing in the second run", rel.string()));
    c.expect(slurp(entry.path()) == slurp(b.path() / rel), fmt::format("{} differs between runs", rel.string()));
  }
  for (const auto& name : {"model/model.dcdr", "policy/policy.json", "eval/report.json", "sweep/sweep.csv"})
    c.expect(fs::exists(a.path() / name), fmt::format("{} not produced", name));

  // Bit-exact file round-trips.
  const auto model = load_model(a.path() / "model/model.dcdr");
  c.expect(encode_model(model) == std::vector<std::uint8_t>(
                                      [&] {
                                        const auto s = slurp(a.path() / "model/model.dcdr");
                                        return std::vector<std::uint8_t>(s.begin(), s.end());
                                      }()),
           "model re-encoding differs from the file");
  const fs::path copy = a.path() / "copy.dcdr";
  save_model(model, copy);
  c.expect(load_model(copy) == model, "model round-trip changed parameters");
  Rng rng(1010);
  FeatureTensor f(2, 5, 3);
  for (auto& v : f.data()) v = static_cast<float>(rng.normal() * 1e3);
  f.data()[0] = std::numeric_limits<float>::denorm_min();
  f.data()[1] = -0.0f;
  save_features(f, a.path() / "f.ftns");
  const auto back = load_features(a.path() / "f.ftns");
  c.expect(encode_features(back) == encode_features(f), "feature round-trip is not bit-exact");
  if (c.result().pass) c.result().detail = fmt::format("{} output files identical across two runs", files);
  return c.result();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"edit-distance oracle", criterion_edit_distance},
      {"gradient check", criterion_gradcheck},
      {"planted-task learning", criterion_planted},
      {"calibration", criterion_calibration},
      {"oracle dominance", criterion_oracle},
      {"cost-model structure", criterion_costmodel},
      {"sweep shape", criterion_sweep},
      {"matrix properties", criterion_matrix},
      {"statistics", criterion_statistics},
      {"determinism and round-trips", criterion_determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += o.pass ? 0 : 1;
    fmt::print("criterion {:>2} {:<28} {}  {}\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
