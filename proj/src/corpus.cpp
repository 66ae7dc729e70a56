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

#include "cascade/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cascade/errors.hpp"
#include "cascade/metrics.hpp"

namespace cascade {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint8_t kFormatVersion = 1;
constexpr char kFeatureMagic[4] = {'F', 'T', 'N', 'S'};
constexpr char kLogitMagic[4] = {'L', 'G', 'T', 'S'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap32(v);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  if constexpr (std::endian::native == std::endian::big) v = byteswap32(v);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

void check_header(std::span<const std::uint8_t> bytes, const char (&magic)[4], std::size_t header_size,
                  std::string_view what) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(FormatError::Kind::kBadMagic, fmt::format("{}: bad magic", what));
  if (bytes[4] != kFormatVersion)
    throw FormatError(FormatError::Kind::kBadVersion,
                      fmt::format("{}: unsupported version {}", what, static_cast<int>(bytes[4])));
  if (bytes.size() < header_size)
    throw FormatError(FormatError::Kind::kTruncated, fmt::format("{}: truncated header", what));
}

// Decodes `count` floats following the header, checking the payload size exactly.
std::vector<float> read_payload(std::span<const std::uint8_t> bytes, std::size_t header_size,
                                std::uint64_t count, std::string_view what) {
  const std::uint64_t expected = header_size + count * 4;
  if (bytes.size() < expected)
    throw FormatError(FormatError::Kind::kTruncated,
                      fmt::format("{}: truncated payload ({} of {} bytes)", what, bytes.size(), expected));
  if (bytes.size() > expected)
    throw FormatError(FormatError::Kind::kTrailingBytes,
                      fmt::format("{}: {} trailing bytes", what, bytes.size() - expected));
  std::vector<float> data(count);
  const std::uint8_t* p = bytes.data() + header_size;
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = get_f32(p + 4 * i);
    if (!std::isfinite(data[i]))
      throw FormatError(FormatError::Kind::kNonFinite, fmt::format("{}: non-finite value at index {}", what, i));
  }
  return data;
}

std::size_t whitespace_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

UtteranceRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError("expected a JSON object", line);
  UtteranceRecord r;
  try {
    r.utt_id = j.at("utt_id").get<std::string>();
    r.ref_text = j.at("ref_text").get<std::string>();
    const auto frames = j.at("enc_frames").get<std::int64_t>();
    if (frames < 1) throw ValidationError(fmt::format("utt_id {}: enc_frames must be >= 1", r.utt_id));
    r.enc_frames = static_cast<std::uint32_t>(frames);
    for (const auto& [model, out] : j.at("models").items()) {
      HypothesisRecord h;
      h.hyp_text = out.at("hyp").get<std::string>();
      if (out.contains("decode_steps") && !out["decode_steps"].is_null()) {
        const auto steps = out["decode_steps"].get<std::int64_t>();
        if (steps < 1)
          throw ValidationError(
              fmt::format("utt_id {}: model {} decode_steps must be >= 1", r.utt_id, model));
        h.decode_steps = static_cast<std::uint32_t>(steps);
      }
      r.model_outputs.emplace(model, std::move(h));
    }
    if (j.contains("scores"))
      for (const auto& [name, v] : j["scores"].items()) r.scores.emplace(name, v.get<double>());
    if (j.contains("accent") && !j["accent"].is_null()) r.accent = j["accent"].get<std::string>();
    if (j.contains("features_path") && !j["features_path"].is_null())
      r.features_path = j["features_path"].get<std::string>();
    if (j.contains("logits_path"))
      for (const auto& [model, p] : j["logits_path"].items()) r.logits_path.emplace(model, p.get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(e.what(), line);
  }
  if (r.model_outputs.empty()) throw ValidationError(fmt::format("utt_id {}: no model outputs", r.utt_id));
  if (tokenize(r.ref_text).empty())
    throw ValidationError(fmt::format("utt_id {}: reference is empty after tokenization", r.utt_id));
  return r;
}

// Models are written in `order` first, so a reload rebuilds the same registry.
json record_to_json(const UtteranceRecord& r, std::span<const std::string> order = {}) {
  json j;
  j["utt_id"] = r.utt_id;
  j["ref_text"] = r.ref_text;
  j["enc_frames"] = r.enc_frames;
  json models = json::object();
  auto put = [&](const std::string& model, const HypothesisRecord& h) {
    json m;
    m["hyp"] = h.hyp_text;
    if (h.decode_steps) m["decode_steps"] = *h.decode_steps;
    models[model] = std::move(m);
  };
  for (const auto& model : order)
    if (auto it = r.model_outputs.find(model); it != r.model_outputs.end()) put(model, it->second);
  for (const auto& [model, h] : r.model_outputs)
    if (!models.contains(model)) put(model, h);
  j["models"] = std::move(models);
  if (!r.scores.empty()) j["scores"] = r.scores;
  if (r.accent) j["accent"] = *r.accent;
  if (r.features_path) j["features_path"] = *r.features_path;
  if (!r.logits_path.empty()) j["logits_path"] = r.logits_path;
  return j;
}

}  // namespace

const HypothesisRecord& UtteranceRecord::output(const std::string& model_id) const {
  auto it = model_outputs.find(model_id);
  if (it == model_outputs.end())
    throw CapabilityError(fmt::format("utt_id {}: no hypothesis for model {}", utt_id, model_id));
  return it->second;
}

std::uint32_t resolve_decode_steps(const HypothesisRecord& hyp) {
  if (hyp.decode_steps) return *hyp.decode_steps;
  return static_cast<std::uint32_t>(whitespace_tokens(hyp.hyp_text) + 2);
}

const UtteranceRecord& Corpus::find(const std::string& utt_id) const {
  auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.utt_id == utt_id; });
  if (it == records.end()) throw ValidationError("unknown utt_id " + utt_id);
  return *it;
}

bool Corpus::has_model(const std::string& model_id) const {
  return std::find(model_registry.begin(), model_registry.end(), model_id) != model_registry.end();
}

std::filesystem::path Corpus::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

Corpus parse_manifest(std::string_view text, std::string split_name) {
  Corpus corpus;
  corpus.split_name = std::move(split_name);
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    UtteranceRecord r = record_from_json(j, line_no);
    if (!seen.insert(r.utt_id).second) throw ValidationError(fmt::format("duplicate utt_id {}", r.utt_id));
    // Registry order follows first appearance in the file, not map order.
    for (const auto& [model, _] : j.at("models").items())
      if (!corpus.has_model(model)) corpus.model_registry.push_back(model);
    corpus.records.push_back(std::move(r));
    if (end == text.size()) break;
  }
  return corpus;
}

Corpus load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Corpus c = parse_manifest(buf.str(), path.stem().string());
  c.base_dir = path.parent_path();
  return c;
}

std::string manifest_line(const UtteranceRecord& record) { return record_to_json(record).dump(); }

void save_manifest(const Corpus& corpus, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : corpus.records) {
    text += record_to_json(r, corpus.model_registry).dump();
    text += '\n';
  }
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

FeatureTensor::FeatureTensor(std::size_t layers, std::size_t frames, std::size_t dims)
    : FeatureTensor(layers, frames, dims, std::vector<float>(layers * frames * dims, 0.0f)) {}

FeatureTensor::FeatureTensor(std::size_t layers, std::size_t frames, std::size_t dims, std::vector<float> data)
    : layers_(layers), frames_(frames), dims_(dims), data_(std::move(data)) {
  if (layers == 0 || frames == 0 || dims == 0) throw ShapeError("feature tensor dimensions must be positive");
  if (data_.size() != layers * frames * dims)
    throw ShapeError(fmt::format("feature tensor data has {} values, shape ({},{},{}) needs {}", data_.size(),
                                 layers, frames, dims, layers * frames * dims));
}

std::vector<std::uint8_t> encode_features(const FeatureTensor& t) {
  std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 4);
  out.push_back(kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(t.layers()));
  put_u32(out, static_cast<std::uint32_t>(t.frames()));
  put_u32(out, static_cast<std::uint32_t>(t.dims()));
  out.reserve(out.size() + 4 * t.data().size());
  for (float v : t.data()) put_f32(out, v);
  return out;
}

FeatureTensor decode_features(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 5 + 12;
  check_header(bytes, kFeatureMagic, kHeader, "feature tensor");
  const std::uint32_t l = get_u32(bytes.data() + 5);
  const std::uint32_t t = get_u32(bytes.data() + 9);
  const std::uint32_t d = get_u32(bytes.data() + 13);
  if (l == 0 || t == 0 || d == 0)
    throw FormatError(FormatError::Kind::kHeader, fmt::format("feature tensor: zero dimension ({},{},{})", l, t, d));
  auto data = read_payload(bytes, kHeader, std::uint64_t{l} * t * d, "feature tensor");
  return FeatureTensor(l, t, d, std::move(data));
}

FeatureTensor load_features(const std::filesystem::path& path) {
  try {
    return decode_features(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

void save_features(const FeatureTensor& tensor, const std::filesystem::path& path) {
  write_file(path, encode_features(tensor));
}

std::vector<std::uint8_t> encode_logits(const LogitSequence& logits) {
  if (logits.data.size() != logits.steps * logits.vocab) throw ShapeError("logit data size mismatch");
  std::vector<std::uint8_t> out(kLogitMagic, kLogitMagic + 4);
  out.push_back(kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(logits.steps));
  put_u32(out, static_cast<std::uint32_t>(logits.vocab));
  for (float v : logits.data) put_f32(out, v);
  return out;
}

LogitSequence decode_logits(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 5 + 8;
  check_header(bytes, kLogitMagic, kHeader, "logit file");
  LogitSequence seq;
  seq.steps = get_u32(bytes.data() + 5);
  seq.vocab = get_u32(bytes.data() + 9);
  if (seq.steps == 0 || seq.vocab == 0)
    throw FormatError(FormatError::Kind::kHeader, "logit file: zero steps or vocab");
  seq.data = read_payload(bytes, kHeader, std::uint64_t{seq.steps} * seq.vocab, "logit file");
  return seq;
}

LogitSequence load_logits(const std::filesystem::path& path) {
  try {
    return decode_logits(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

void save_logits(const LogitSequence& logits, const std::filesystem::path& path) {
  write_file(path, encode_logits(logits));
}

std::string_view capability_name(Capability c) {
  switch (c) {
    case Capability::kFeatures: return "features";
    case Capability::kLogitsEntropy: return "logits-entropy";
    case Capability::kSnr: return "snr";
    case Capability::kAccent: return "accent";
    case Capability::kDecodeSteps: return "decode_steps";
  }
  return "?";
}

Capability parse_capability(std::string_view name) {
  for (auto c : {Capability::kFeatures, Capability::kLogitsEntropy, Capability::kSnr, Capability::kAccent,
                 Capability::kDecodeSteps})
    if (capability_name(c) == name) return c;
  throw ParseError(fmt::format("unknown capability '{}'", name));
}

bool has_capability(const UtteranceRecord& r, Capability c) {
  switch (c) {
    case Capability::kFeatures: return r.features_path.has_value();
    case Capability::kLogitsEntropy: return r.scores.contains("entropy_mean") || !r.logits_path.empty();
    case Capability::kSnr: return r.scores.contains("snr");
    case Capability::kAccent: return r.accent.has_value();
    case Capability::kDecodeSteps:
      return std::all_of(r.model_outputs.begin(), r.model_outputs.end(),
                         [](const auto& kv) { return kv.second.decode_steps.has_value(); });
  }
  return false;
}

bool ValidationReport::ok(Capability c) const {
  auto it = missing.find(c);
  return it == missing.end() || it->second.empty();
}

bool ValidationReport::ok() const {
  return std::all_of(required.begin(), required.end(), [&](Capability c) { return ok(c); });
}

std::string ValidationReport::summary() const {
  std::string s;
  for (const auto& [cap, ids] : missing) {
    if (ids.empty()) continue;
    s += fmt::format("{}{}: missing on {} record(s), first utt_id {}", s.empty() ? "" : "; ", capability_name(cap),
                     ids.size(), ids.front());
  }
  return s.empty() ? "ok" : s;
}

ValidationReport validate_corpus(const Corpus& corpus, const std::set<Capability>& required) {
  ValidationReport report;
  report.required = required;
  for (auto c : {Capability::kFeatures, Capability::kLogitsEntropy, Capability::kSnr, Capability::kAccent,
                 Capability::kDecodeSteps}) {
    auto& ids = report.missing[c];
    for (const auto& r : corpus.records)
      if (!has_capability(r, c)) ids.push_back(r.utt_id);
  }
  return report;
}

void require(const ValidationReport& report) {
  for (Capability c : report.required) {
    if (report.ok(c)) continue;
    const auto& ids = report.missing.at(c);
    throw CapabilityError(fmt::format("utt_id {}: missing {} ({} record(s) affected)", ids.front(),
                                      capability_name(c), ids.size()));
  }
}

}  // namespace cascade
