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
#include <string_view>
#include <vector>

#include "uqseg/core/tensor.hpp"

namespace uqseg::model {

/// Flat copy of parameter values, in store order.
using WeightVector = std::vector<double>;

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;  // false for buffers such as batchnorm running statistics
};

/// Ordered, uniquely named parameters and buffers. Tensors are shared
/// handles, so layers holding the same tensor see every update.
class ParameterStore {
 public:
  /// Registers `value` under `name`; trainable entries get requires_grad.
  Tensor add(std::string name, Tensor value, bool trainable = true);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry* find(std::string_view name) const;
  Tensor get(std::string_view name) const;

  std::vector<Tensor> trainable() const;
  /// Number of trainable scalars.
  std::size_t parameter_count() const;

  WeightVector flatten(bool trainable_only) const;
  void assign(const WeightVector& values, bool trainable_only);

  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
};

}  // namespace uqseg::model
