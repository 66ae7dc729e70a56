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

#include "cascade/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cascade::kernels {

namespace {

// One output channel. Shared by the serial and OpenMP paths so the
// accumulation order is identical.
void conv_row(const ConvShape& s, std::size_t o, const double* w, const double* b, const double* x, double* y) {
  const std::size_t T = s.frames;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.kernel / 2);
  double* row = y + o * T;
  std::fill(row, row + T, b[o]);
  for (std::size_t i = 0; i < s.in_ch; ++i) {
    const double* xi = x + i * T;
    const double* wk = w + (o * s.in_ch + i) * s.kernel;
    for (std::size_t k = 0; k < s.kernel; ++k) {
      const double wv = wk[k];
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      // Frames whose tap t+shift lies inside [0, T).
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(T), static_cast<std::ptrdiff_t>(T) - shift);
      for (std::ptrdiff_t t = 0; t < std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(T)); ++t) row[t] += wv * xi[0];
      for (std::ptrdiff_t t = lo; t < hi; ++t) row[t] += wv * xi[t + shift];
      for (std::ptrdiff_t t = std::max<std::ptrdiff_t>(hi, 0); t < static_cast<std::ptrdiff_t>(T); ++t) row[t] += wv * xi[T - 1];
    }
  }
}

void mix_frame(std::span<const double> weights, const float* feats, std::size_t frames, std::size_t dims,
               std::size_t t, double* out) {
  double* dst = out + t * dims;
  std::fill(dst, dst + dims, 0.0);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const float* src = feats + (l * frames + t) * dims;
    const double wl = weights[l];
    for (std::size_t d = 0; d < dims; ++d) dst[d] += wl * static_cast<double>(src[d]);
  }
}

}  // namespace

namespace serial {

void conv1d(const ConvShape& s, std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> y) {
  for (std::size_t o = 0; o < s.out_ch; ++o) conv_row(s, o, w.data(), b.data(), x.data(), y.data());
}

void layer_mix(std::span<const double> weights, std::span<const float> feats, std::size_t frames, std::size_t dims,
               std::span<double> out) {
  for (std::size_t t = 0; t < frames; ++t) mix_frame(weights, feats.data(), frames, dims, t, out.data());
}

}  // namespace serial

namespace omp {

void conv1d(const ConvShape& s, std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(s.out_ch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < n; ++o)
    conv_row(s, static_cast<std::size_t>(o), w.data(), b.data(), x.data(), y.data());
}

void layer_mix(std::span<const double> weights, std::span<const float> feats, std::size_t frames, std::size_t dims,
               std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t)
    mix_frame(weights, feats.data(), frames, dims, static_cast<std::size_t>(t), out.data());
}

}  // namespace omp

void conv1d_backward(const ConvShape& s, std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dw, std::span<double> db, std::span<double> dx) {
  const std::size_t T = s.frames;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.kernel / 2);
  const auto last = static_cast<std::ptrdiff_t>(T) - 1;
  for (std::size_t o = 0; o < s.out_ch; ++o) {
    const double* g = dy.data() + o * T;
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += g[t];
    db[o] += acc;
    for (std::size_t i = 0; i < s.in_ch; ++i) {
      const double* xi = x.data() + i * T;
      double* dxi = dx.data() + i * T;
      const std::size_t widx = (o * s.in_ch + i) * s.kernel;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const double wv = w[widx + k];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        double gw = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const auto src = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + shift, 0, last);
          gw += g[t] * xi[src];
          dxi[src] += wv * g[t];
        }
        dw[widx + k] += gw;
      }
    }
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace cascade::kernels
