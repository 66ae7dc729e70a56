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

#include "cascade/decider.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cascade/errors.hpp"
#include "cascade/kernels.hpp"
#include "cascade/rng.hpp"

namespace cascade {

namespace {

constexpr double kNormEps = 1e-5;
constexpr char kModelMagic[4] = {'D', 'C', 'D', 'R'};
constexpr std::uint8_t kModelVersion = 1;

using Vec = std::vector<double>;

struct BlockCache {
  Vec in;     // block input h, [C][T]
  Vec norm1;  // normalized conv1 output
  Vec inv1;   // per-channel 1/std
  Vec relu1;
  Vec norm2;
  Vec inv2;
  Vec out;  // relu(h + norm2)
};

struct ForwardCache {
  Vec weights;  // layer weights
  Vec stem_in;  // [D][T]
  Vec stem_out;
  std::vector<BlockCache> blocks;
  Vec pooled;
  double logit = 0.0;
};

// Normalizes each channel of a [C][T] buffer over time, in place. Stores 1/std.
void normalize_rows(Vec& a, std::size_t C, std::size_t T, Vec& inv_std) {
  inv_std.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    double* row = a.data() + c * T;
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += row[t];
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) var += (row[t] - mean) * (row[t] - mean);
    var /= static_cast<double>(T);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    for (std::size_t t = 0; t < T; ++t) row[t] = (row[t] - mean) * inv;
    inv_std[c] = inv;
  }
}

// Gradient through normalize_rows given its output y and 1/std.
Vec normalize_rows_backward(const Vec& dy, const Vec& y, const Vec& inv_std, std::size_t C, std::size_t T) {
  Vec dx(C * T);
  const double n = static_cast<double>(T);
  for (std::size_t c = 0; c < C; ++c) {
    const double* g = dy.data() + c * T;
    const double* yy = y.data() + c * T;
    double mean_g = 0.0, mean_gy = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      mean_g += g[t];
      mean_gy += g[t] * yy[t];
    }
    mean_g /= n;
    mean_gy /= n;
    for (std::size_t t = 0; t < T; ++t) dx[c * T + t] = inv_std[c] * (g[t] - mean_g - yy[t] * mean_gy);
  }
  return dx;
}

void conv(Execution exec, const kernels::ConvShape& s, std::span<const double> w, std::span<const double> b,
          std::span<const double> x, std::span<double> y) {
  if (exec == Execution::kParallel)
    kernels::omp::conv1d(s, w, b, x, y);
  else
    kernels::serial::conv1d(s, w, b, x, y);
}

void check_shape(const DeciderConfig& cfg, const FeatureTensor& f) {
  if (f.layers() != cfg.in_layers || f.dims() != cfg.in_dims)
    throw ShapeError(fmt::format("decider expects (L={}, D={}), features are (L={}, T={}, D={})", cfg.in_layers,
                                 cfg.in_dims, f.layers(), f.frames(), f.dims()));
}

double run_forward(const DeciderModel& model, const FeatureTensor& feats, Execution exec, ForwardCache& cache) {
  const auto& cfg = model.config();
  const auto& lay = model.layout();
  check_shape(cfg, feats);
  const auto p = model.params();
  const std::size_t T = feats.frames();
  const std::size_t D = cfg.in_dims;
  const std::size_t C = cfg.channels;
  const std::size_t K = cfg.kernel;

  // Layer mixing, then transpose to [D][T] for the convolutions.
  Vec mixed(T * D);
  if (cfg.layer_weights) {
    cache.weights = softmax(model.layer_logits());
    if (exec == Execution::kParallel)
      kernels::omp::layer_mix(cache.weights, feats.data(), T, D, mixed);
    else
      kernels::serial::layer_mix(cache.weights, feats.data(), T, D, mixed);
  } else {
    cache.weights.clear();
    auto last = feats.layer(feats.layers() - 1);
    std::transform(last.begin(), last.end(), mixed.begin(), [](float v) { return static_cast<double>(v); });
  }
  cache.stem_in.assign(D * T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) cache.stem_in[d * T + t] = mixed[t * D + d];

  cache.stem_out.assign(C * T, 0.0);
  conv(exec, {D, C, 1, T}, p.subspan(lay.stem.weight, C * D), p.subspan(lay.stem.bias, C), cache.stem_in,
       cache.stem_out);

  const kernels::ConvShape block_shape{C, C, K, T};
  cache.blocks.resize(cfg.res_blocks);
  const Vec* h = &cache.stem_out;
  for (std::size_t b = 0; b < cfg.res_blocks; ++b) {
    auto& bc = cache.blocks[b];
    bc.in = *h;
    bc.norm1.assign(C * T, 0.0);
    conv(exec, block_shape, p.subspan(lay.block_conv1[b].weight, C * C * K), p.subspan(lay.block_conv1[b].bias, C),
         bc.in, bc.norm1);
    normalize_rows(bc.norm1, C, T, bc.inv1);
    bc.relu1.resize(C * T);
    for (std::size_t i = 0; i < C * T; ++i) bc.relu1[i] = std::max(0.0, bc.norm1[i]);
    bc.norm2.assign(C * T, 0.0);
    conv(exec, block_shape, p.subspan(lay.block_conv2[b].weight, C * C * K), p.subspan(lay.block_conv2[b].bias, C),
         bc.relu1, bc.norm2);
    normalize_rows(bc.norm2, C, T, bc.inv2);
    bc.out.resize(C * T);
    for (std::size_t i = 0; i < C * T; ++i) bc.out[i] = std::max(0.0, bc.in[i] + bc.norm2[i]);
    h = &bc.out;
  }

  cache.pooled.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += (*h)[c * T + t];
    cache.pooled[c] = s / static_cast<double>(T);
  }
  double z = p[lay.head_bias];
  for (std::size_t c = 0; c < C; ++c) z += p[lay.head_weight + c] * cache.pooled[c];
  if (!std::isfinite(z)) throw NumericError("decider forward produced a non-finite activation");
  cache.logit = z;
  return z;
}

}  // namespace

void DeciderConfig::validate() const {
  if (in_layers == 0 || in_dims == 0) throw ShapeError("decider input layers and dims must be positive");
  if (channels == 0) throw ShapeError("decider channels must be >= 1");
  if (kernel == 0 || kernel % 2 == 0) throw ShapeError("decider kernel must be odd");
}

ParamLayout ParamLayout::of(const DeciderConfig& cfg) {
  cfg.validate();
  ParamLayout l;
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  const std::size_t C = cfg.channels;
  l.n_layer_logits = cfg.layer_weights ? cfg.in_layers : 0;
  l.layer_logits = take(l.n_layer_logits);
  l.stem.weight = take(C * cfg.in_dims);
  l.stem.bias = take(C);
  for (std::uint32_t b = 0; b < cfg.res_blocks; ++b) {
    ParamLayout::Conv c1{}, c2{};
    c1.weight = take(C * C * cfg.kernel);
    c1.bias = take(C);
    c2.weight = take(C * C * cfg.kernel);
    c2.bias = take(C);
    l.block_conv1.push_back(c1);
    l.block_conv2.push_back(c2);
  }
  l.head_weight = take(C);
  l.head_bias = take(1);
  l.total = off;
  return l;
}

DeciderModel::DeciderModel(const DeciderConfig& cfg)
    : cfg_(cfg), layout_(ParamLayout::of(cfg)), params_(layout_.total, 0.0) {
  Rng rng = Rng(cfg.seed).split("decider-init");
  const std::size_t C = cfg.channels;
  auto fill_normal = [&](std::size_t off, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = rng.normal(0.0, stddev);
  };
  fill_normal(layout_.stem.weight, C * cfg.in_dims, std::sqrt(1.0 / cfg.in_dims));
  const double conv_std = std::sqrt(2.0 / static_cast<double>(C * cfg.kernel));
  for (std::uint32_t b = 0; b < cfg.res_blocks; ++b) {
    fill_normal(layout_.block_conv1[b].weight, C * C * cfg.kernel, conv_std);
    fill_normal(layout_.block_conv2[b].weight, C * C * cfg.kernel, conv_std);
  }
  // Head stays at zero: the untrained model scores exactly 0.5.
}

DeciderModel::DeciderModel(const DeciderConfig& cfg, std::vector<double> params)
    : cfg_(cfg), layout_(ParamLayout::of(cfg)), params_(std::move(params)) {
  if (params_.size() != layout_.total)
    throw ShapeError(fmt::format("decider config needs {} parameters, got {}", layout_.total, params_.size()));
}

std::vector<double> DeciderModel::layer_weights() const {
  if (!cfg_.layer_weights) return {1.0};
  return softmax(layer_logits());
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - mx);
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<double> weighted_layer_sum(const FeatureTensor& features, std::span<const double> layer_logits) {
  if (features.layers() != layer_logits.size())
    throw ShapeError(
        fmt::format("weighted_layer_sum: {} logits for {} layers", layer_logits.size(), features.layers()));
  const auto w = softmax(layer_logits);
  std::vector<double> out(features.frames() * features.dims());
  kernels::serial::layer_mix(w, features.data(), features.frames(), features.dims(), out);
  return out;
}

double sigmoid(double z) {
  // Kept strictly inside (0, 1) so bce_loss stays finite for saturated logits.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  if (z >= 0) return std::min(hi, 1.0 / (1.0 + std::exp(-z)));
  const double e = std::exp(z);
  return std::max(lo, e / (1.0 + e));
}

double forward_logit(const DeciderModel& model, const FeatureTensor& features, Execution exec) {
  ForwardCache cache;
  return run_forward(model, features, exec, cache);
}

double forward(const DeciderModel& model, const FeatureTensor& features, Execution exec) {
  return sigmoid(forward_logit(model, features, exec));
}

double bce_loss(double score, int label) {
  if (!(score > 0.0 && score < 1.0)) throw DomainError(fmt::format("bce_loss: score {} outside (0,1)", score));
  return label ? -std::log(score) : -std::log1p(-score);
}

double bce_loss_from_logit(double logit, int label) {
  // softplus(z) - y*z, evaluated without overflow.
  const double softplus = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return softplus - (label ? logit : 0.0);
}

Gradients backward(const DeciderModel& model, const FeatureTensor& features, int label) {
  ForwardCache cache;
  const double z = run_forward(model, features, Execution::kSerial, cache);
  const auto& cfg = model.config();
  const auto& lay = model.layout();
  const auto p = model.params();
  const std::size_t T = features.frames();
  const std::size_t D = cfg.in_dims;
  const std::size_t C = cfg.channels;
  const std::size_t K = cfg.kernel;

  Gradients g;
  g.score = sigmoid(z);
  g.loss = bce_loss_from_logit(z, label);
  g.grad.assign(lay.total, 0.0);
  auto grad = std::span<double>(g.grad);

  const double dz = g.score - static_cast<double>(label);
  grad[lay.head_bias] = dz;
  for (std::size_t c = 0; c < C; ++c) grad[lay.head_weight + c] = dz * cache.pooled[c];

  // d(pooled)/d(out) spreads evenly over time.
  Vec dh(C * T);
  for (std::size_t c = 0; c < C; ++c) {
    const double v = dz * p[lay.head_weight + c] / static_cast<double>(T);
    std::fill(dh.begin() + c * T, dh.begin() + (c + 1) * T, v);
  }

  const kernels::ConvShape block_shape{C, C, K, T};
  for (std::size_t b = cfg.res_blocks; b-- > 0;) {
    const auto& bc = cache.blocks[b];
    Vec ds(C * T);
    for (std::size_t i = 0; i < C * T; ++i) ds[i] = bc.out[i] > 0.0 ? dh[i] : 0.0;
    // Skip path carries ds straight to the block input; the residual path goes back through norm2/conv2/...
    Vec da2 = normalize_rows_backward(ds, bc.norm2, bc.inv2, C, T);
    Vec dr1(C * T, 0.0);
    kernels::conv1d_backward(block_shape, p.subspan(lay.block_conv2[b].weight, C * C * K), bc.relu1, da2,
                             grad.subspan(lay.block_conv2[b].weight, C * C * K),
                             grad.subspan(lay.block_conv2[b].bias, C), dr1);
    for (std::size_t i = 0; i < C * T; ++i)
      if (bc.norm1[i] <= 0.0) dr1[i] = 0.0;
    Vec da1 = normalize_rows_backward(dr1, bc.norm1, bc.inv1, C, T);
    Vec din = ds;
    kernels::conv1d_backward(block_shape, p.subspan(lay.block_conv1[b].weight, C * C * K), bc.in, da1,
                             grad.subspan(lay.block_conv1[b].weight, C * C * K),
                             grad.subspan(lay.block_conv1[b].bias, C), din);
    dh = std::move(din);
  }

  Vec dx(D * T, 0.0);
  kernels::conv1d_backward({D, C, 1, T}, p.subspan(lay.stem.weight, C * D), cache.stem_in, dh,
                           grad.subspan(lay.stem.weight, C * D), grad.subspan(lay.stem.bias, C), dx);

  if (cfg.layer_weights) {
    // dL/dw_l = <dx, features[l]>, then through the softmax.
    const std::size_t L = cfg.in_layers;
    Vec dw(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) s += dx[d * T + t] * static_cast<double>(features.at(l, t, d));
      dw[l] = s;
    }
    double dot = 0.0;
    for (std::size_t l = 0; l < L; ++l) dot += cache.weights[l] * dw[l];
    for (std::size_t l = 0; l < L; ++l) grad[lay.layer_logits + l] = cache.weights[l] * (dw[l] - dot);
  }
  return g;
}

std::vector<double> score_batch(const DeciderModel& model, std::span<const FeatureTensor> features,
                                Execution exec) {
  std::vector<double> scores(features.size());
  if (exec == Execution::kParallel) {
    const auto n = static_cast<std::ptrdiff_t>(features.size());
    // Exceptions must not escape the parallel region.
    std::vector<std::string> errors(features.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        scores[static_cast<std::size_t>(i)] = forward(model, features[static_cast<std::size_t>(i)]);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
    for (const auto& e : errors)
      if (!e.empty()) throw NumericError(e);
  } else {
    for (std::size_t i = 0; i < features.size(); ++i) scores[i] = forward(model, features[i]);
  }
  return scores;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw DomainError("lr0 must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw DomainError("Adam betas must lie in (0,1)");
  if (epochs == 0 || batch_size == 0) throw DomainError("epochs and batch_size must be positive");
}

double cosine_lr(std::uint64_t step, const TrainConfig& cfg) {
  if (cfg.total_steps == 0) throw DomainError("cosine_lr: total_steps must be positive");
  if (step > cfg.total_steps)
    throw DomainError(fmt::format("cosine_lr: step {} outside [0, {}]", step, cfg.total_steps));
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return 0.5 * cfg.lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * g;
    state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

double accuracy_at(const DeciderModel& model, std::span<const LabeledSample> samples, double threshold) {
  if (samples.empty()) throw DomainError("accuracy_at: empty sample set");
  std::size_t hits = 0;
  for (const auto& s : samples) hits += ((forward(model, s.features) >= threshold ? 1 : 0) == s.label) ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(samples.size());
}

TrainResult train(std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set,
                  const DeciderConfig& dcfg, const TrainConfig& tcfg_in) {
  if (train_set.empty() || val_set.empty()) throw DomainError("train: empty train or validation split");
  tcfg_in.validate();
  for (const auto& s : train_set)
    if (s.label != 0 && s.label != 1) throw ValidationError("utt_id " + s.utt_id + ": label must be 0 or 1");

  TrainConfig tcfg = tcfg_in;
  const std::size_t batches = (train_set.size() + tcfg.batch_size - 1) / tcfg.batch_size;
  if (tcfg.total_steps == 0) tcfg.total_steps = static_cast<std::uint64_t>(batches) * tcfg.epochs;

  TrainResult result;
  DeciderModel model(dcfg);
  AdamState adam(model.params().size());
  Rng shuffle_rng = Rng(tcfg.seed).split("train-shuffle");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  result.model = model;
  result.best_val_accuracy = -1.0;
  std::uint64_t step = 0;
  std::vector<double> batch_grad(model.params().size());

  for (std::uint32_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      // Each sample runs at its own length, which is what masked padding computes.
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train_set[order[k]];
        Gradients g = backward(model, s.features, s.label);
        loss_sum += g.loss;
        correct += ((g.score >= 0.5 ? 1 : 0) == s.label) ? 1 : 0;
        for (std::size_t i = 0; i < batch_grad.size(); ++i) batch_grad[i] += g.grad[i];
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& v : batch_grad) v *= scale;
      lr = cosine_lr(std::min(step, tcfg.total_steps), tcfg);
      adam_step(model.params(), batch_grad, adam, lr, tcfg);
      ++step;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(train_set.size());
    stats.val_accuracy = accuracy_at(model, val_set);
    stats.lr = lr;
    result.history.push_back(stats);
    if (stats.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = stats.val_accuracy;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

std::string config_to_json(const DeciderConfig& cfg) {
  nlohmann::ordered_json j;
  j["in_layers"] = cfg.in_layers;
  j["in_dims"] = cfg.in_dims;
  j["channels"] = cfg.channels;
  j["res_blocks"] = cfg.res_blocks;
  j["kernel"] = cfg.kernel;
  j["seed"] = cfg.seed;
  j["layer_weights"] = cfg.layer_weights;
  return j.dump();
}

DeciderConfig config_from_json(const std::string& text) {
  DeciderConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    cfg.in_layers = j.at("in_layers").get<std::uint32_t>();
    cfg.in_dims = j.at("in_dims").get<std::uint32_t>();
    cfg.channels = j.value("channels", cfg.channels);
    cfg.res_blocks = j.value("res_blocks", cfg.res_blocks);
    cfg.kernel = j.value("kernel", cfg.kernel);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.layer_weights = j.value("layer_weights", cfg.layer_weights);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("decider config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// Layout: "DCDR", version byte, u32 LE header length, JSON config, then every
// parameter as f64 LE in ParamLayout order.
std::vector<std::uint8_t> encode_model(const DeciderModel& model) {
  const std::string header = config_to_json(model.config());
  std::vector<std::uint8_t> out(kModelMagic, kModelMagic + 4);
  out.push_back(kModelVersion);
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  for (double v : model.params()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

DeciderModel decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw FormatError(FormatError::Kind::kBadMagic, "decider model: bad magic");
  if (bytes[4] != kModelVersion)
    throw FormatError(FormatError::Kind::kBadVersion,
                      fmt::format("decider model: unsupported version {}", static_cast<int>(bytes[4])));
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
  if (bytes.size() < 9 + std::size_t{len})
    throw FormatError(FormatError::Kind::kTruncated, "decider model: truncated header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + 9), len);
  DeciderConfig cfg;
  try {
    cfg = config_from_json(header);
  } catch (const Error& e) {
    throw FormatError(FormatError::Kind::kHeader, std::string("decider model: ") + e.what());
  }
  const auto layout = ParamLayout::of(cfg);
  const std::size_t offset = 9 + len;
  const std::size_t expected = offset + 8 * layout.total;
  if (bytes.size() < expected)
    throw FormatError(FormatError::Kind::kTruncated,
                      fmt::format("decider model: {} bytes, expected {}", bytes.size(), expected));
  if (bytes.size() > expected)
    throw FormatError(FormatError::Kind::kTrailingBytes, "decider model: trailing bytes");
  std::vector<double> params(layout.total);
  for (std::size_t i = 0; i < layout.total; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[offset + 8 * i + k]) << (8 * k);
    params[i] = std::bit_cast<double>(bits);
  }
  return DeciderModel(cfg, std::move(params));
}

void save_model(const DeciderModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DeciderModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_model(bytes);
}

DeciderModel load_model(const std::filesystem::path& path, const DeciderConfig& expected) {
  DeciderModel m = load_model(path);
  DeciderConfig stored = m.config();
  DeciderConfig want = expected;
  stored.seed = want.seed = 0;
  if (!(stored == want))
    throw ShapeError(fmt::format("decider model {} has config {}, expected {}", path.string(),
                                 config_to_json(m.config()), config_to_json(expected)));
  return m;
}

}  // namespace cascade
