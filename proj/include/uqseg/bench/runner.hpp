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
#include <iosfwd>
#include <optional>
#include <string>

#include "uqseg/bench/config.hpp"
#include "uqseg/bench/report.hpp"

namespace uqseg::bench {

/// Name of one training job inside the output directory, e.g.
/// "seed_0/ensemble/fold_3" or "seed_0/swag/ood".
std::string job_name(std::uint64_t seed, const std::string& method, std::optional<std::size_t> fold);

/// Training seed of a job; ensemble members add their index to it.
std::uint64_t job_seed(std::uint64_t seed, std::optional<std::size_t> fold);

/// Images one job trains on and the id lists it is evaluated on.
struct JobSplit {
  std::optional<std::size_t> fold;  // empty in ood mode
  model::SplitDataset data;
  std::vector<std::pair<std::string, std::vector<std::string>>> eval;  // split name, ids
  nlohmann::json plan;  // the split as written to split_plan.json
};

/// kfold: one JobSplit per fold with split "test". ood: a single JobSplit with
/// splits "id" and "ood".
std::vector<JobSplit> plan_splits(const BenchConfig& config, const data::Dataset& dataset, std::uint64_t seed);

/// The network a run builds: the configured one with the dataset's class count.
model::UNetConfig network_for(const BenchConfig& config, const data::Dataset& dataset);

struct RunOutcome {
  std::size_t jobs_total = 0;
  std::size_t jobs_run = 0;
  std::size_t jobs_skipped = 0;  // completed by an earlier run
  std::size_t jobs_failed = 0;
  Report report;

  bool ok() const { return jobs_failed == 0; }
};

/// Runs every (seed, method, fold) job of `config` that the output manifest
/// does not list as done, then profiles each method and writes the reports
/// (csv, json and svg) to <output>/report.
///
/// kfold: each image is predicted by the model of the fold that held it out;
/// records of all folds are pooled per seed. ood: the largest-ratio instances
/// are held out, the rest is split once into train/val/test, and the
/// in-distribution test set and the held-out set are evaluated separately.
///
/// A failing job is recorded in the manifest and does not stop the others.
/// Throws std::invalid_argument when the output directory belongs to a
/// different configuration.
RunOutcome run(const BenchConfig& config, std::ostream* log = nullptr);

/// Rebuilds the report from the files of an earlier run.
Report collect_report(const BenchConfig& config);

/// The configuration recorded in the manifest of `output`.
BenchConfig config_from_output(const std::filesystem::path& output);

}  // namespace uqseg::bench
