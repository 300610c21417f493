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

#include "uqseg/uq/aggregate.hpp"

#include <cmath>
#include <stdexcept>

namespace uqseg::uq {

UncertaintyMode parse_uncertainty_mode(const std::string& tag) {
  if (tag == "std") return UncertaintyMode::std_dev;
  if (tag == "entropy") return UncertaintyMode::entropy;
  throw std::invalid_argument("unknown uncertainty mode '" + tag + "'");
}

std::string to_string(UncertaintyMode mode) { return mode == UncertaintyMode::std_dev ? "std" : "entropy"; }

namespace {

void check_probs(const Tensor& p, const char* what) {
  if (p.rank() != 3 || p.dim(0) < 2) throw ShapeError(std::string(what) + ": expected [C>=2, H, W], got " + uqseg::to_string(p.shape()));
}

}  // namespace

Tensor base_uq(const Tensor& probs) {
  check_probs(probs, "base_uq");
  const std::size_t c = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
  const auto p = probs.data();
  std::vector<double> out(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    double m = p[i];
    for (std::size_t k = 1; k < c; ++k) m = std::max(m, p[k * plane + i]);
    out[i] = 1.0 - m;
  }
  return Tensor({probs.dim(1), probs.dim(2)}, std::move(out));
}

Aggregate aggregate_samples(const std::vector<Tensor>& samples, UncertaintyMode mode) {
  if (samples.empty()) throw std::invalid_argument("aggregate_samples: no samples");
  const Shape& shape = samples.front().shape();
  check_probs(samples.front(), "aggregate_samples");
  for (const auto& s : samples) {
    if (s.shape() != shape) throw ShapeError("aggregate_samples: samples differ in shape");
  }
  const std::size_t c = shape[0], plane = shape[1] * shape[2];
  const double t = static_cast<double>(samples.size());

  std::vector<double> mean(c * plane, 0.0);
  for (const auto& s : samples) {
    const auto d = s.data();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d[i];
  }
  for (auto& v : mean) v /= t;

  std::vector<double> unc(plane, 0.0);
  if (mode == UncertaintyMode::std_dev) {
    // foreground probability is 1 - p_background; its spread equals the
    // spread of p_background
    for (const auto& s : samples) {
      const auto d = s.data();
      for (std::size_t i = 0; i < plane; ++i) {
        const double e = d[i] - mean[i];
        unc[i] += e * e;
      }
    }
    for (auto& v : unc) v = std::sqrt(v / t);
  } else {
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double p = mean[k * plane + i];
        if (p > 0.0) unc[i] -= p * std::log(p);
      }
    }
    for (auto& v : unc) v = std::max(v, 0.0);
  }
  return {Tensor(shape, std::move(mean)), Tensor({shape[1], shape[2]}, std::move(unc))};
}

}  // namespace uqseg::uq
