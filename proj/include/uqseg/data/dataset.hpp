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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uqseg/core/rng.hpp"
#include "uqseg/core/tensor.hpp"

namespace uqseg::data {

inline constexpr int kBackground = 0;
inline constexpr int kOrgan = 1;
inline constexpr int kTumor = 2;

struct LabeledImage {
  std::string id;
  Tensor image;   // [1, H, W]
  Tensor labels;  // [H, W] of class indices
  std::optional<double> tumor_ratio;
};

struct Dataset {
  std::vector<LabeledImage> images;
  std::size_t num_classes = 2;

  const LabeledImage& by_id(const std::string& id) const;
  std::vector<std::string> ids() const;
  /// Images for `ids`, in that order.
  std::vector<LabeledImage> subset(const std::vector<std::string>& ids) const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Desk-scale stand-in for abdominal CT: one soft-edged elliptical organ on a
/// noisy background, optionally with a darker tumor ellipse inside it.
struct SynthConfig {
  std::size_t image_size = 64;
  Range organ_radius{10.0, 20.0};
  Range tumor_radius{2.0, 10.0};
  double tumor_probability = 0.0;
  double noise_sigma = 0.05;
  double background_intensity = 0.2;
  double organ_intensity = 0.6;
  double tumor_intensity = 0.4;
  double edge_softness = 1.0;  // px, width of the organ boundary ramp
  // Organ-intensity blobs that are not labeled; they make the task depend on
  // shape as well as brightness.
  std::size_t distractors = 0;
  Range distractor_radius{3.0, 6.0};
  bool three_class = false;  // emit class 2 and tumor ratios even if tumor_probability is 0

  bool has_tumor_class() const { return three_class || tumor_probability > 0.0; }
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Generates `n` images. Image i depends only on (cfg, seed, i).
Dataset synth_generate(std::size_t n, const SynthConfig& cfg, std::uint64_t seed);

/// |class 2| / |class 1|. Throws std::domain_error when there are no organ voxels.
double tumor_ratio(const Tensor& labels);

/// (x - min) / (max - min); a constant volume maps to zeros.
Tensor normalize_intensity(const Tensor& volume);

struct Patch {
  Tensor image;   // [C, P, P]
  Tensor labels;  // [P, P]
  std::size_t row = 0;
  std::size_t col = 0;
};

/// `n` square patches at uniformly random top-left corners.
std::vector<Patch> sample_patches(const Tensor& image, const Tensor& labels, std::size_t patch_size, Rng& rng,
                                  std::size_t n);

/// Splits off the `holdout_n` instances with the largest tumor ratio (ties by
/// id ascending). Returns (in-distribution ids, out-of-distribution ids), each
/// sorted by id.
std::pair<std::vector<std::string>, std::vector<std::string>> ood_split(const Dataset& dataset, std::size_t holdout_n);

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

void to_json(nlohmann::json& j, const SplitPlan& p);
void from_json(const nlohmann::json& j, SplitPlan& p);

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Shuffles ids once, cuts `folds` contiguous test chunks (sizes differ by at
/// most one, larger chunks first) and takes round(val * n) validation ids from
/// the front of the remainder.
SplitPlan kfold_split(const std::vector<std::string>& ids, std::size_t folds, std::uint64_t seed,
                      SplitFractions fractions = {});

/// Single split: shuffle, then test = round(test * n), val = round(val * n),
/// train = rest.
Fold holdout_split(const std::vector<std::string>& ids, std::uint64_t seed, SplitFractions fractions = {});

/// Dataset directory: images/<id>.<ext>, labels/<id>.<ext> and manifest.json
/// with ids, ratios and class count. `format` is "nifti" (.nii.gz) or "uqtn".
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, const std::string& format = "uqtn");
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace uqseg::data
