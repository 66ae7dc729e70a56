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

#include "cascade/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cascade/errors.hpp"

namespace cascade {

using json = nlohmann::ordered_json;

void ModelCostConfig::validate() const {
  if (d_model == 0 || enc_layers == 0 || dec_layers == 0 || vocab == 0 || beam == 0)
    throw ValidationError(fmt::format("model {}: d_model, layers, vocab and beam must be positive", model_id));
  if (!(ffn_mult > 0.0)) throw ValidationError(fmt::format("model {}: ffn_mult must be positive", model_id));
  const double width = ffn_mult * static_cast<double>(d_model);
  if (std::abs(width - std::round(width)) > 1e-9)
    throw ValidationError(fmt::format("model {}: ffn_mult * d_model = {} is not an integer", model_id, width));
  for (const auto& c : frontend)
    if (c.in_ch == 0 || c.out_ch == 0 || c.kernel == 0 || c.stride == 0)
      throw ValidationError(fmt::format("model {}: front-end conv fields must be positive", model_id));
}

std::uint64_t ModelCostConfig::ffn_width() const {
  return static_cast<std::uint64_t>(std::llround(ffn_mult * static_cast<double>(d_model)));
}

std::uint64_t ModelCostConfig::encoder_frames(std::uint64_t mel_frames) const {
  std::uint64_t t = mel_frames;
  for (const auto& c : frontend) t = (t + c.stride - 1) / c.stride;
  return t;
}

std::uint64_t ModelCostConfig::total_stride() const {
  std::uint64_t s = 1;
  for (const auto& c : frontend) s *= c.stride;
  return s;
}

ModelCostConfig tiny_like_config() {
  ModelCostConfig c;
  c.model_id = "tiny";
  c.d_model = 384;
  c.enc_layers = 4;
  c.dec_layers = 4;
  c.ffn_mult = 4.0;
  c.vocab = 51865;
  c.frontend = {{80, 384, 3, 1}, {384, 384, 3, 2}};
  c.beam = 8;
  return c;
}

ModelCostConfig small_like_config() {
  ModelCostConfig c;
  c.model_id = "small";
  c.d_model = 768;
  c.enc_layers = 12;
  c.dec_layers = 12;
  c.ffn_mult = 4.0;
  c.vocab = 51865;
  c.frontend = {{80, 768, 3, 1}, {768, 768, 3, 2}};
  c.beam = 8;
  return c;
}

Macs conv1d_macs(const Conv1dSpec& spec, std::uint64_t frames_in) {
  if (frames_in == 0) throw DomainError("conv1d_macs: frames_in must be >= 1");
  if (spec.stride == 0) throw DomainError("conv1d_macs: stride must be >= 1");
  const std::uint64_t out_frames = (frames_in + spec.stride - 1) / spec.stride;
  return std::uint64_t{spec.in_ch} * spec.out_ch * spec.kernel * out_frames;
}

Macs encoder_macs(const ModelCostConfig& cfg, std::uint64_t mel_frames) {
  if (mel_frames == 0) throw DomainError("encoder_macs: mel_frames must be >= 1");
  Macs total = 0;
  std::uint64_t t = mel_frames;
  for (const auto& c : cfg.frontend) {
    total += conv1d_macs(c, t);
    t = (t + c.stride - 1) / c.stride;
  }
  const std::uint64_t d = cfg.d_model;
  const Macs per_layer = 4 * t * d * d + 2 * t * t * d + 2 * t * d * cfg.ffn_width();
  return total + cfg.enc_layers * per_layer;
}

Macs beam_decode_macs(const ModelCostConfig& cfg, std::uint64_t enc_frames, std::uint64_t decode_steps) {
  if (decode_steps == 0) throw DomainError("beam_decode_macs: decode_steps must be >= 1");
  if (enc_frames == 0) throw DomainError("beam_decode_macs: enc_frames must be >= 1");
  const std::uint64_t d = cfg.d_model;
  const Macs per_token =
      cfg.dec_layers * (4 * d * d + 2 * d * d + 2 * enc_frames * d + 2 * d * cfg.ffn_width()) + d * cfg.vocab;
  const Macs cross_kv = 2 * enc_frames * d * d * cfg.dec_layers;
  const Macs prefix = cfg.beam * cfg.dec_layers * 2 * d * (decode_steps * (decode_steps + 1) / 2);
  return cfg.beam * decode_steps * per_token + cross_kv + prefix;
}

DeciderMacBreakdown decider_mac_breakdown(const DeciderConfig& cfg, std::uint64_t layers, std::uint64_t frames,
                                          std::uint64_t dims) {
  if (layers == 0 || frames == 0 || dims == 0) throw DomainError("decider_macs: feature shape must be positive");
  DeciderMacBreakdown b;
  const auto C = static_cast<std::uint32_t>(cfg.channels);
  b.layer_sum = cfg.layer_weights ? layers * frames * dims : 0;
  b.stem = conv1d_macs({static_cast<std::uint32_t>(dims), C, 1, 1}, frames);
  b.blocks = 2 * std::uint64_t{cfg.res_blocks} * conv1d_macs({C, C, cfg.kernel, 1}, frames);
  b.head = C;
  return b;
}

Macs decider_macs(const DeciderConfig& cfg, std::uint64_t layers, std::uint64_t frames, std::uint64_t dims) {
  return decider_mac_breakdown(cfg, layers, frames, dims).total();
}

std::string_view pipeline_name(PipelineKind kind) {
  switch (kind) {
    case PipelineKind::kDirect: return "direct";
    case PipelineKind::kDecider: return "decider";
    case PipelineKind::kEntropyCascade: return "entropy_cascade";
  }
  return "?";
}

namespace {

ModelCostConfig model_from_json(const json& j, const std::string& role) {
  ModelCostConfig c;
  try {
    c.model_id = j.at("model_id").get<std::string>();
    c.d_model = j.at("d_model").get<std::uint64_t>();
    c.enc_layers = j.at("enc_layers").get<std::uint64_t>();
    c.dec_layers = j.at("dec_layers").get<std::uint64_t>();
    c.ffn_mult = j.value("ffn_mult", 4.0);
    c.vocab = j.at("vocab").get<std::uint64_t>();
    c.beam = j.value("beam", std::uint64_t{8});
    if (j.contains("frontend"))
      for (const auto& f : j["frontend"])
        c.frontend.push_back({f.at("in_ch").get<std::uint32_t>(), f.at("out_ch").get<std::uint32_t>(),
                              f.at("kernel").get<std::uint32_t>(), f.value("stride", 1u)});
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("cost config '{}': {}", role, e.what()));
  }
  c.validate();
  return c;
}

json model_to_json(const ModelCostConfig& c) {
  json j;
  j["model_id"] = c.model_id;
  j["d_model"] = c.d_model;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["ffn_mult"] = c.ffn_mult;
  j["vocab"] = c.vocab;
  j["beam"] = c.beam;
  json fe = json::array();
  for (const auto& f : c.frontend)
    fe.push_back({{"in_ch", f.in_ch}, {"out_ch", f.out_ch}, {"kernel", f.kernel}, {"stride", f.stride}});
  j["frontend"] = fe;
  return j;
}

}  // namespace

CostSetup parse_cost_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("cost config: ") + e.what());
  }
  CostSetup s;
  if (!j.contains("cheap") || !j.contains("expensive"))
    throw ParseError("cost config: needs 'cheap' and 'expensive' entries");
  s.cheap = model_from_json(j["cheap"], "cheap");
  s.expensive = model_from_json(j["expensive"], "expensive");
  if (s.cheap.model_id == s.expensive.model_id) throw ValidationError("cost config: cheap and expensive ids match");
  if (j.contains("decider") && !j["decider"].is_null()) s.decider = config_from_json(j["decider"].dump());
  return s;
}

CostSetup load_cost_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cost config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_cost_config(buf.str());
}

std::string cost_config_to_json(const CostSetup& setup) {
  json j;
  j["cheap"] = model_to_json(setup.cheap);
  j["expensive"] = model_to_json(setup.expensive);
  if (setup.decider) j["decider"] = json::parse(config_to_json(*setup.decider));
  return j.dump(2);
}

UtteranceMacs utterance_macs(const UtteranceRecord& r, const std::string& assigned, PipelineKind kind,
                             const CostSetup& setup) {
  const bool to_cheap = assigned == setup.cheap.model_id;
  if (!to_cheap && assigned != setup.expensive.model_id)
    throw ValidationError(fmt::format("utt_id {}: unknown model_id '{}'", r.utt_id, assigned));

  // enc_frames counts the expensive encoder's output frames.
  const std::uint64_t mel = std::uint64_t{r.enc_frames} * setup.expensive.total_stride();
  const auto& ce = setup.cheap;
  const auto& ex = setup.expensive;
  auto full = [&](const ModelCostConfig& cfg, std::uint64_t beam, Macs& enc, Macs& dec) {
    ModelCostConfig c = cfg;
    c.beam = beam;
    const auto steps = resolve_decode_steps(r.output(cfg.model_id));
    enc += encoder_macs(c, mel);
    dec += beam_decode_macs(c, c.encoder_frames(mel), steps);
  };

  UtteranceMacs u;
  u.utt_id = r.utt_id;
  switch (kind) {
    case PipelineKind::kDirect:
      full(to_cheap ? ce : ex, (to_cheap ? ce : ex).beam, u.encode, u.decode);
      break;
    case PipelineKind::kDecider: {
      if (!setup.decider) throw ValidationError("decider pipeline needs a decider config");
      const auto& dc = *setup.decider;
      u.encode += encoder_macs(ex, mel);
      u.decider = decider_macs(dc, dc.in_layers, r.enc_frames, dc.in_dims);
      if (to_cheap) {
        full(ce, ce.beam, u.encode, u.decode);
      } else {
        u.decode += beam_decode_macs(ex, ex.encoder_frames(mel), resolve_decode_steps(r.output(ex.model_id)));
      }
      break;
    }
    case PipelineKind::kEntropyCascade:
      full(ce, 1, u.encode, u.decode);
      if (!to_cheap) full(ex, ex.beam, u.encode, u.decode);
      break;
  }
  return u;
}

MacReport pipeline_macs(const Corpus& corpus, const std::map<std::string, std::string>& assignments,
                        PipelineKind kind, const CostSetup& setup, bool parallel) {
  MacReport report;
  report.rows.resize(corpus.records.size());
  for (const auto& r : corpus.records)
    if (!assignments.contains(r.utt_id)) throw ValidationError(fmt::format("utt_id {}: unassigned", r.utt_id));

  const auto n = static_cast<std::ptrdiff_t>(corpus.records.size());
  std::vector<std::string> errors(corpus.records.size());
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& r = corpus.records[static_cast<std::size_t>(i)];
    try {
      report.rows[static_cast<std::size_t>(i)] = utterance_macs(r, assignments.at(r.utt_id), kind, setup);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ValidationError(e);

  // Integer sums are order-independent, but reduce in utt_id order regardless.
  std::vector<std::size_t> order(report.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return report.rows[a].utt_id < report.rows[b].utt_id; });
  for (std::size_t i : order) {
    report.encode_macs += report.rows[i].encode;
    report.decode_macs += report.rows[i].decode;
    report.decider_macs += report.rows[i].decider;
  }
  report.total_macs = report.encode_macs + report.decode_macs + report.decider_macs;
  report.formula = fmt::format(
      "pipeline={}; encoder: frontend convs + layers*(4*T*d^2 + 2*T^2*d + 2*T*d*ffn); "
      "decode: beam*steps*(dec_layers*(6*d^2 + 2*T*d + 2*d*ffn) + d*vocab) + 2*T*d^2*dec_layers "
      "+ beam*dec_layers*2*d*steps*(steps+1)/2; decider: L*T*D + stem + 2*blocks*C*C*k*T + C",
      pipeline_name(kind));
  return report;
}

std::string mac_report_json(const MacReport& report) {
  json j;
  j["encode_macs"] = report.encode_macs;
  j["decode_macs"] = report.decode_macs;
  j["decider_macs"] = report.decider_macs;
  j["total_macs"] = report.total_macs;
  j["formula"] = report.formula;
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"utt_id", r.utt_id}, {"encode", r.encode}, {"decode", r.decode}, {"decider", r.decider},
                    {"total", r.total()}});
  j["rows"] = rows;
  return j.dump(2);
}

std::string mac_report_csv(const MacReport& report) {
  std::string out = "utt_id,encode,decode,decider,total\n";
  for (const auto& r : report.rows)
    out += fmt::format("{},{},{},{},{}\n", r.utt_id, r.encode, r.decode, r.decider, r.total());
  return out;
}

}  // namespace cascade
