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

#include <string>
#include <vector>

#include "uqseg/core/tensor.hpp"

namespace uqseg::uq {

/// Voxel-wise statistic used to turn a set of sampled predictions into an
/// uncertainty map.
enum class UncertaintyMode {
  std_dev,  // population std of the foreground probability (1 - p_background)
  entropy,  // entropy of the mean distribution, in nats
};

UncertaintyMode parse_uncertainty_mode(const std::string& tag);
std::string to_string(UncertaintyMode mode);

/// 1 - max_c p_c per voxel for probabilities [C, H, W].
Tensor base_uq(const Tensor& probs);

struct Aggregate {
  Tensor mean_probs;   // [C, H, W]
  Tensor uncertainty;  // [H, W]
};

/// Voxel-wise mean of `samples` plus the uncertainty statistic of `mode`.
Aggregate aggregate_samples(const std::vector<Tensor>& samples, UncertaintyMode mode = UncertaintyMode::std_dev);

}  // namespace uqseg::uq
