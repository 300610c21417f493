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

#include "uqseg/core/tensor.hpp"

namespace uqseg::model {

inline constexpr double kDiceSmooth = 1e-5;

/// Mean voxel cross-entropy. logits [N, C, H, W], labels [N, H, W] holding
/// class indices in [0, C).
Tensor cross_entropy_loss(const Tensor& logits, const Tensor& labels);

/// 1 - soft foreground Dice, averaged over images. The foreground
/// probability is 1 - p(background) and the target is label > 0.
Tensor soft_dice_loss(const Tensor& logits, const Tensor& labels, double smooth = kDiceSmooth);

/// cross_entropy_loss + soft_dice_loss with equal weights.
Tensor dice_ce_loss(const Tensor& logits, const Tensor& labels);

}  // namespace uqseg::model
