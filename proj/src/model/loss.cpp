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

#include "uqseg/model/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "uqseg/core/ops.hpp"

namespace uqseg::model {
namespace {

void check_labels(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 4 || labels.rank() != 3 || labels.dim(0) != logits.dim(0) || labels.dim(1) != logits.dim(2) ||
      labels.dim(2) != logits.dim(3)) {
    throw ShapeError("loss expects logits [N,C,H,W] and labels [N,H,W], got " + to_string(logits.shape()) + " and " +
                     to_string(labels.shape()));
  }
  const double c = static_cast<double>(logits.dim(1));
  for (double v : labels.data()) {
    if (!(v >= 0.0 && v < c) || v != std::floor(v)) {
      throw std::invalid_argument("label " + std::to_string(v) + " out of range for " + std::to_string(logits.dim(1)) +
                                  " classes");
    }
  }
}

Tensor one_hot(const Tensor& labels, std::size_t classes) {
  const std::size_t n = labels.dim(0), hw = labels.dim(1) * labels.dim(2);
  std::vector<double> v(n * classes * hw, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const auto c = static_cast<std::size_t>(labels[b * hw + i]);
      v[(b * classes + c) * hw + i] = 1.0;
    }
  }
  return Tensor({n, classes, labels.dim(1), labels.dim(2)}, std::move(v));
}

}  // namespace

Tensor cross_entropy_loss(const Tensor& logits, const Tensor& labels) {
  check_labels(logits, labels);
  const double voxels = static_cast<double>(labels.numel());
  return mul_scalar(sum(mul(log_softmax_channel(logits), one_hot(labels, logits.dim(1)))), -1.0 / voxels);
}

Tensor soft_dice_loss(const Tensor& logits, const Tensor& labels, double smooth) {
  check_labels(logits, labels);
  const std::size_t n = labels.dim(0);
  const Tensor fg = add_scalar(neg(channel_slice(softmax_channel(logits), 0, 1)), 1.0);  // [N,1,H,W]
  std::vector<double> t(labels.numel());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = labels[i] > 0 ? 1.0 : 0.0;
  const Tensor target({n, 1, labels.dim(1), labels.dim(2)}, std::move(t));

  const Tensor inter = sum_spatial(mul(fg, target));  // [N,1]
  const Tensor denom = add_scalar(add(sum_spatial(fg), sum_spatial(target)), smooth);
  const Tensor dice = div(add_scalar(mul_scalar(inter, 2.0), smooth), denom);
  return add_scalar(neg(mean(dice)), 1.0);
}

Tensor dice_ce_loss(const Tensor& logits, const Tensor& labels) {
  return add(cross_entropy_loss(logits, labels), soft_dice_loss(logits, labels));
}

}  // namespace uqseg::model
