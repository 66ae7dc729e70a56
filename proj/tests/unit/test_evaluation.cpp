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

#include <doctest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "cascade/errors.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/metrics.hpp"
#include "../support/fixtures.hpp"

using namespace cascade;
using testing::make_record;

namespace {

Corpus three_utterances() {
  // Cheap WERs 1/3, 0, 1; expensive WERs 0, 0, 1/2.
  return testing::make_corpus({make_record("u1", "a b c", "a b", "a b c", 8),
                               make_record("u2", "d e", "d e", "d e", 6),
                               make_record("u3", "f g", "", "f", 4)});
}

}  // namespace

TEST_CASE("fixed policies report hand-computed means") {
  const auto corpus = three_utterances();
  const auto costs = testing::toy_costs();
  const RoutingContext ctx;
  const auto cheap = evaluate(corpus, RoutingPolicy::fixed_cheap(), costs, ctx);
  CHECK(cheap.mean_wer == doctest::Approx((1.0 / 3 + 0.0 + 1.0) / 3).epsilon(1e-15));
  CHECK(cheap.frac_expensive == 0.0);
  REQUIRE(cheap.decision_accuracy);
  CHECK(*cheap.decision_accuracy == doctest::Approx(100.0 / 3));

  const auto exp = evaluate(corpus, RoutingPolicy::fixed_expensive(), costs, ctx);
  CHECK(exp.mean_wer == doctest::Approx(0.5 / 3).epsilon(1e-15));
  CHECK(exp.frac_expensive == 1.0);
  CHECK(exp.total_macs > cheap.total_macs);
}

TEST_CASE("oracle takes the per-utterance minimum") {
  Rng rng(71);
  const auto costs = testing::toy_costs();
  for (int trial = 0; trial < 20; ++trial) {
    const auto corpus = testing::with_shared_steps(testing::random_toy_corpus(rng, 25));
    const auto rep = evaluate(corpus, RoutingPolicy::oracle(), costs, {});
    const auto wc = model_wers(corpus, "tiny"), we = model_wers(corpus, "small");
    double sum = 0;
    for (std::size_t i = 0; i < wc.size(); ++i) sum += std::min(wc[i], we[i]);
    CHECK(rep.mean_wer == doctest::Approx(sum / 25).epsilon(1e-12));
    CHECK(*rep.decision_accuracy == 100.0);

    const auto cheap = evaluate(corpus, RoutingPolicy::fixed_cheap(), costs, {});
    const auto exp = evaluate(corpus, RoutingPolicy::fixed_expensive(), costs, {});
    CHECK(rep.mean_wer <= cheap.mean_wer + 1e-15);
    CHECK(rep.mean_wer <= exp.mean_wer + 1e-15);
    CHECK(cheap.total_macs <= rep.total_macs);
    CHECK(rep.total_macs <= exp.total_macs);
  }
}

TEST_CASE("report rows are consistent with the totals") {
  Rng rng(72);
  const auto corpus = testing::random_toy_corpus(rng, 15);
  const auto rep = evaluate(corpus, RoutingPolicy::oracle(), testing::toy_costs(), {});
  Macs sum = 0;
  double wsum = 0;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(rep.rows[i].utt_id == corpus.records[i].utt_id);
    sum += rep.rows[i].macs;
    wsum += rep.rows[i].wer;
  }
  CHECK(sum == rep.total_macs);
  CHECK(wsum / 15 == doctest::Approx(rep.mean_wer).epsilon(1e-12));

  const auto j = nlohmann::json::parse(report_json(rep));
  CHECK(j["total_macs"].get<Macs>() == rep.total_macs);
  CHECK(j["rows"].size() == 15);
  CHECK(j["decision_accuracy"].get<double>() == 100.0);
}

TEST_CASE("forced accounting and registry checks") {
  const auto corpus = three_utterances();
  auto costs = testing::toy_costs();
  DeciderConfig d;
  d.in_layers = 2;
  d.in_dims = 3;
  d.channels = 4;
  costs.decider = d;
  const auto direct = evaluate(corpus, RoutingPolicy::fixed_cheap(), costs, {});
  const auto forced = evaluate(corpus, RoutingPolicy::fixed_cheap(), costs, {}, PipelineKind::kDecider);
  CHECK(forced.mean_wer == direct.mean_wer);
  CHECK(forced.total_macs > direct.total_macs);
  CHECK(forced.macs.decider_macs > 0);

  costs.expensive.model_id = "medium";
  CHECK_THROWS_WITH_AS(evaluate(corpus, RoutingPolicy::fixed_cheap(), costs, {}), doctest::Contains("medium"),
                       ValidationError);
}

TEST_CASE("threshold grid parsing") {
  CHECK(parse_grid("0.5,0.1, 0.9") == std::vector<double>{0.1, 0.5, 0.9});
  CHECK(parse_grid("0:1:5") == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(parse_grid("2:2:1") == std::vector<double>{2.0});
  CHECK_THROWS_AS(parse_grid(""), ParseError);
  CHECK_THROWS_AS(parse_grid("0:1"), ParseError);
  CHECK_THROWS_AS(parse_grid("0:1:0"), ParseError);
  CHECK_THROWS_AS(parse_grid("a,b"), ParseError);
  CHECK_THROWS_AS(parse_grid("0.1,,0.2"), ParseError);
}
