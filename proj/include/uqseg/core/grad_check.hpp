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

#include <functional>
#include <vector>

#include "uqseg/core/tensor.hpp"

namespace uqseg {

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Returns the largest
///   |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// over every entry of every input. `inputs` must be leaves; their
/// requires_grad flag is set and their grads are cleared. `f` must rebuild its
/// graph on every call and must be deterministic.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                  double eps = 1e-5);

}  // namespace uqseg
