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
#include <vector>

#include "json.hpp"
#include "uqseg/data/dataset.hpp"
#include "uqseg/model/train.hpp"
#include "uqseg/model/unet.hpp"
#include "uqseg/uq/method.hpp"

namespace uqseg::bench {

inline constexpr const char* kSoftwareVersion = "0.1.0";

/// Where the images come from: a generated synthetic set or a dataset
/// directory written by data::write_dataset.
struct DatasetSource {
  enum class Kind { synthetic, directory };
  Kind kind = Kind::synthetic;
  data::SynthConfig generator;
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::filesystem::path path;  // directory only

  data::Dataset load() const;
};

enum class Experiment { kfold, ood };

Experiment parse_experiment(const std::string& tag);
std::string to_string(Experiment e);

struct BenchConfig {
  DatasetSource dataset;
  Experiment experiment = Experiment::kfold;
  std::size_t folds = 5;                    // kfold only
  std::optional<std::size_t> ood_holdout;   // ood only; default round(50 n / 281)
  data::SplitFractions fractions;
  std::vector<uq::UQMethodSpec> methods;
  std::vector<std::size_t> sample_budgets{4, 30};
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output = "uqbench_out";
  bool deterministic = false;  // canonical outputs: wall-clock fields written as 0
  model::UNetConfig network;
  model::TrainConfig training;
  std::size_t heatmaps = 1;  // uncertainty maps kept per method for qualitative plots

  void validate() const;
  /// Hex FNV-1a of the canonical JSON form without the output path.
  std::string hash() const;
  /// Number of held-out OOD instances for a dataset of `n` images.
  std::size_t holdout_count(std::size_t n) const;
};

void to_json(nlohmann::json& j, const BenchConfig& c);
void from_json(const nlohmann::json& j, BenchConfig& c);

BenchConfig load_config(const std::filesystem::path& path);

/// Sample budgets a method is evaluated at. Methods with a fixed number of
/// passes (base, SWA, ensembles) use that number once.
std::vector<std::size_t> budgets_for(const uq::UQMethodSpec& spec, const std::vector<std::size_t>& budgets);

/// True for methods whose prediction draws a configurable number of samples.
bool is_sampled(uq::MethodTag tag);

}  // namespace uqseg::bench
