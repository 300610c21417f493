/* Copyright 2026 The uqseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#pragma once

#include <cstddef>
#include <vector>

#include "uqseg/core/tensor.hpp"

// Differentiable operations. Layout is row-major (N, C, H, W) throughout;
// every op records a backward closure when graph recording is on.
namespace uqseg {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log; throws NumericError on non-positive input.
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Reductions.
Tensor sum(const Tensor& a);   // -> [1]
Tensor mean(const Tensor& a);  // -> [1]
/// [N, C, spatial...] -> [N, C], summing over everything after axis 1.
Tensor sum_spatial(const Tensor& a);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
/// Broadcasts a single-element tensor to `shape`.
Tensor expand_scalar(const Tensor& a, Shape shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, end) of a [N, C, ...] tensor.
Tensor channel_slice(const Tensor& a, std::size_t begin, std::size_t end);
/// Rows of a [M, C] table picked by `rows`; result is [rows.size(), C].
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& rows);

// Per-channel broadcasting. `v` is [C] (shared across the batch) or [N, C].
Tensor scale_channels(const Tensor& x, const Tensor& v);
Tensor add_channels(const Tensor& x, const Tensor& v);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& a);               // [m,n] -> [n,m]

// Convolutions. `bias` may be an undefined tensor.
/// input [N,Cin,H,W], kernel [Cout,Cin,kH,kW] -> [N,Cout,H',W'],
/// H' = floor((H + 2 pad - kH) / stride) + 1. Rejects non-finite input.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t pad);
/// Adjoint of conv2d. input [N,Cin,H,W], kernel [Cin,Cout,kH,kW] ->
/// [N,Cout,(H-1) stride - 2 pad + kH, ...].
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                        std::size_t pad);

// Normalization and activations.
struct BatchNormStats {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C], unbiased
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Train mode normalizes with batch moments (biased variance) and blends them
/// into `stats` with `momentum`; eval mode uses `stats`. Variance is floored
/// by `eps`, so constant batches map to beta.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool training,
                 double eps = kBatchNormEpsilon, double momentum = kBatchNormMomentum);
/// x if x > 0 else alpha * x; alpha is [C] or [1].
Tensor prelu(const Tensor& x, const Tensor& alpha);
/// Softmax over axis 1 with max subtraction.
Tensor softmax_channel(const Tensor& x);
Tensor log_softmax_channel(const Tensor& x);

}  // namespace uqseg
