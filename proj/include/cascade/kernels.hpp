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

// Inner loops of the decider. Each kernel has a serial reference and an
// OpenMP variant; the OpenMP variants partition independent outputs only, so
// both produce bit-identical results.

#include <cstddef>
#include <span>

namespace cascade::kernels {

struct ConvShape {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 1;  // odd
  std::size_t frames = 0;
};

// x is [in_ch][frames], y is [out_ch][frames], w is [out_ch][in_ch][kernel].
// Stride 1, "same" output length, out-of-range taps read the nearest edge frame.

namespace serial {
void conv1d(const ConvShape& s, std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> y);
/// out[t*D+d] = sum_l weights[l] * feats[(l*T+t)*D+d]
void layer_mix(std::span<const double> weights, std::span<const float> feats, std::size_t frames, std::size_t dims,
               std::span<double> out);
}  // namespace serial

namespace omp {
void conv1d(const ConvShape& s, std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> y);
void layer_mix(std::span<const double> weights, std::span<const float> feats, std::size_t frames, std::size_t dims,
               std::span<double> out);
}  // namespace omp

/// Backward of serial::conv1d. Accumulates into dw, db, dx.
void conv1d_backward(const ConvShape& s, std::span<const double> w, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dw, std::span<double> db, std::span<double> dx);

/// Number of threads OpenMP would use, 1 when built without OpenMP.
int max_threads();
void set_threads(int n);

}  // namespace cascade::kernels
