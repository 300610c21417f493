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
#include <string>
#include <vector>

#include "uqseg/bench/profile.hpp"
#include "uqseg/metrics/metrics.hpp"

namespace uqseg::bench {

enum class ReportFormat { csv, json, svg };

ReportFormat parse_report_format(const std::string& tag);
std::string to_string(ReportFormat f);

/// Evaluation records of one method, split and sample budget.
struct RecordSet {
  std::string method;
  std::string split;
  std::size_t n_samples = 0;
  std::vector<metrics::EvalRecord> records;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  metrics::SummaryRow row;
};

struct OodRow {
  std::uint64_t seed = 0;
  std::string method;
  std::size_t n_samples = 0;
  metrics::OodCorrelation correlation;
};

/// Uncertainty map of one test image, kept for qualitative inspection.
struct Heatmap {
  std::string method;
  std::string image_id;
  Tensor uncertainty;  // [H, W]
};

struct Report {
  std::vector<metrics::SummaryRow> summaries;  // records of all seeds pooled
  std::vector<SeedSummary> seed_summaries;
  std::vector<RecordSet> records;              // pooled over seeds; feeds the retention plots
  std::vector<ScalabilityRow> scalability;
  std::vector<OodRow> ood;
  std::vector<Heatmap> heatmaps;
};

/// Writes the report files for `format` into `dir`:
///   csv:  summary.csv, summary_by_seed.csv, scalability.csv, ood_correlation.csv
///   json: report.json
///   svg:  retention_<split>.svg (one polyline per method, at its largest
///         sample budget) and heatmap_<method>_<image>.svg
/// Files for empty sections are skipped. Throws std::invalid_argument, before
/// writing anything, when the report has no summaries.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir,
                                               ReportFormat format);

/// Columns: method,split,n_samples,dsc_mean,dsc_std,pearson_r,rauc_mean,rauc_std.
/// An undefined correlation is an empty field.
void write_summary_csv(std::ostream& os, const std::vector<metrics::SummaryRow>& rows);
std::vector<metrics::SummaryRow> read_summary_csv(std::istream& is);

/// Mean error per retention fraction over `records`.
std::vector<double> mean_retention(const std::vector<metrics::EvalRecord>& records);

}  // namespace uqseg::bench
