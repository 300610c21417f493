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

#include <array>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqseg/core/tensor.hpp"
#include "uqseg/uq/predictive.hpp"

namespace uqseg::metrics {

/// Thrown when a correlation has no defined value (a zero-variance side).
class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Classes counted as foreground. Empty means "every non-zero class", which
/// scores organ and tumor jointly.
using ForegroundSet = std::set<int>;

/// Foreground Dice in percent: 100 * 2|P n G| / (|P| + |G|), where P and G are
/// the voxels whose label is in `foreground`. Both sets empty scores 100.
double dsc_foreground(const Tensor& pred, const Tensor& gt, const ForegroundSet& foreground = {});

/// Per-voxel arg-max over the leading class axis of [C, H, W] probabilities.
Tensor argmax_labels(const Tensor& probs);

/// Product-moment correlation. Throws UndefinedCorrelation when either side
/// has zero variance and std::invalid_argument on bad lengths.
double pearson_r(std::span<const double> xs, std::span<const double> ys);

inline constexpr std::size_t kRetentionPoints = 101;

struct RetentionCurve {
  std::array<double, kRetentionPoints> fractions{};
  std::array<double, kRetentionPoints> errors{};
  double r_auc = 0.0;
};

/// Error-retention curve. Voxels are ranked by uncertainty (descending, ties by
/// linear index ascending); at fraction f = k/100 the first floor(k V / 100)
/// voxels take their ground-truth label and error = 100 - DSC. r_auc is the
/// trapezoidal area over f in [0, 1], without normalization.
RetentionCurve retention_curve(const Tensor& pred, const Tensor& gt, const Tensor& uncertainty,
                               const ForegroundSet& foreground = {});

/// Area under a retention curve by the trapezoid rule.
double trapezoid_auc(const RetentionCurve& curve);

struct EvalRecord {
  std::string image_id;
  double dsc = 0.0;    // percent
  double error = 0.0;  // 100 - dsc
  double uq_sum = 0.0;
  RetentionCurve retention;
  double r_auc = 0.0;
  std::optional<double> tumor_ratio;
};

/// Aggregate over one split. Standard deviations use the population
/// denominator. An undefined correlation is left empty.
struct SummaryRow {
  std::string method;
  std::string split;
  std::size_t n_samples = 0;
  std::size_t n_images = 0;
  double dsc_mean = 0.0;
  double dsc_std = 0.0;
  std::optional<double> pearson_r;
  double rauc_mean = 0.0;
  double rauc_std = 0.0;
};

EvalRecord evaluate_image(const std::string& id, const PredictiveResult& prediction, const Tensor& gt,
                          std::optional<double> tumor_ratio = std::nullopt, const ForegroundSet& foreground = {});

/// Builds one record per image and the split summary. Records are ordered by
/// image id before aggregation, so the result does not depend on input order.
std::pair<std::vector<EvalRecord>, SummaryRow> evaluate_split(const std::vector<PredictiveResult>& predictions,
                                                              const std::vector<Tensor>& gts,
                                                              const std::vector<std::string>& ids,
                                                              const std::vector<std::optional<double>>& ratios,
                                                              const std::string& method, const std::string& split,
                                                              std::size_t n_samples,
                                                              const ForegroundSet& foreground = {});

/// Summary from records already computed (pooled folds, reloaded CSVs).
SummaryRow summarize(std::vector<EvalRecord> records, const std::string& method, const std::string& split,
                     std::size_t n_samples);

struct OodCorrelation {
  std::optional<double> ratio_error;
  std::optional<double> uq_error;
  std::optional<double> uq_ratio;
  std::size_t n_records = 0;
  std::size_t n_undefined = 0;
};

/// Ratio/error, UQ/error and UQ/ratio correlations over the union of the
/// in-distribution and out-of-distribution records. Every record must carry a
/// tumor ratio; fewer than three pooled records is an error.
OodCorrelation ood_correlation_report(const std::vector<EvalRecord>& in_distribution,
                                      const std::vector<EvalRecord>& out_of_distribution);

// CSV forms: image_id,dsc,error,uq_sum,r_auc,tumor_ratio and the retention
// sidecar image_id,fraction,error. Doubles are written with 17 significant
// digits so reloading reproduces them exactly.
void write_records_csv(std::ostream& os, const std::vector<EvalRecord>& records);
void write_retention_csv(std::ostream& os, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records_csv(std::istream& records, std::istream& retention);

std::string format_double(double v);

}  // namespace uqseg::metrics
