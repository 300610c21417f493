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

namespace uqseg {

/// Output of one UQ prediction for a single image.
struct PredictiveResult {
  Tensor mean_probs;               // [classes, H, W], sums to one per voxel
  Tensor uncertainty_map;          // [H, W], non-negative
  std::vector<Tensor> samples;     // per-sample [classes, H, W]; empty for single-pass methods
  std::string method;
  double inference_seconds = 0.0;  // wall clock, all samples
};

}  // namespace uqseg
