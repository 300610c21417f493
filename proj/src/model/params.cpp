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

#include "uqseg/model/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace uqseg::model {

Tensor ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
  if (trainable) value.set_requires_grad(true);
  entries_.push_back({std::move(name), value, trainable});
  return value;
}

const ParamEntry* ParameterStore::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

Tensor ParameterStore::get(std::string_view name) const {
  const auto* e = find(name);
  if (!e) throw std::out_of_range("no parameter named " + std::string(name));
  return e->tensor;
}

std::vector<Tensor> ParameterStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

WeightVector ParameterStore::flatten(bool trainable_only) const {
  WeightVector out;
  for (const auto& e : entries_) {
    if (trainable_only && !e.trainable) continue;
    const auto d = e.tensor.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

void ParameterStore::assign(const WeightVector& values, bool trainable_only) {
  std::size_t offset = 0;
  for (auto& e : entries_) {
    if (trainable_only && !e.trainable) continue;
    auto d = e.tensor.mutable_data();
    if (offset + d.size() > values.size()) throw std::invalid_argument("weight vector too short");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), d.size(), d.begin());
    offset += d.size();
  }
  if (offset != values.size()) throw std::invalid_argument("weight vector too long");
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) {
    if (e.trainable) e.tensor.zero_grad();
  }
}

}  // namespace uqseg::model
