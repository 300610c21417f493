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

#include "uqseg/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace uqseg::metrics {
namespace {

bool is_foreground(double label, const ForegroundSet& fg) {
  const int c = static_cast<int>(std::lround(label));
  return fg.empty() ? c != 0 : fg.count(c) > 0;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

double dice_from_counts(std::size_t p, std::size_t g, std::size_t both) {
  if (p + g == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

std::optional<double> try_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  try {
    return pearson_r(xs, ys);
  } catch (const UndefinedCorrelation&) {
    return std::nullopt;
  }
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number in CSV: '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

double dsc_foreground(const Tensor& pred, const Tensor& gt, const ForegroundSet& foreground) {
  require_same_shape(pred, gt, "dsc_foreground");
  const auto p = pred.data();
  const auto g = gt.data();
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = is_foreground(p[i], foreground);
    const bool b = is_foreground(g[i], foreground);
    np += a;
    ng += b;
    both += a && b;
  }
  return dice_from_counts(np, ng, both);
}

Tensor argmax_labels(const Tensor& probs) {
  if (probs.rank() != 3) throw ShapeError("argmax_labels expects [C,H,W], got " + to_string(probs.shape()));
  const std::size_t c = probs.dim(0), hw = probs.dim(1) * probs.dim(2);
  const auto p = probs.data();
  std::vector<double> out(hw, 0.0);
  for (std::size_t i = 0; i < hw; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (p[k * hw + i] > p[best * hw + i]) best = k;
    }
    out[i] = static_cast<double>(best);
  }
  return Tensor({probs.dim(1), probs.dim(2)}, std::move(out));
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson_r: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson_r: need at least two values");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

RetentionCurve retention_curve(const Tensor& pred, const Tensor& gt, const Tensor& uncertainty,
                               const ForegroundSet& foreground) {
  require_same_shape(pred, gt, "retention_curve");
  require_same_shape(pred, uncertainty, "retention_curve");
  const auto p = pred.data();
  const auto g = gt.data();
  const auto u = uncertainty.data();
  const std::size_t v = p.size();
  for (double x : u) {
    if (!(x >= 0.0)) throw std::invalid_argument("retention_curve: uncertainty must be non-negative");
  }

  std::vector<std::size_t> order(v);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });

  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < v; ++i) {
    const bool a = is_foreground(p[i], foreground);
    const bool b = is_foreground(g[i], foreground);
    np += a;
    ng += b;
    both += a && b;
  }

  RetentionCurve curve;
  std::size_t replaced = 0;
  for (std::size_t k = 0; k < kRetentionPoints; ++k) {
    const std::size_t target = k * v / 100;
    for (; replaced < target; ++replaced) {
      const std::size_t i = order[replaced];
      const bool a = is_foreground(p[i], foreground);
      const bool b = is_foreground(g[i], foreground);
      if (a == b) continue;
      if (b) {
        ++np;
        ++both;
      } else {
        --np;
      }
    }
    curve.fractions[k] = static_cast<double>(k) / 100.0;
    curve.errors[k] = 100.0 - dice_from_counts(np, ng, both);
  }
  curve.r_auc = trapezoid_auc(curve);
  return curve;
}

double trapezoid_auc(const RetentionCurve& curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < kRetentionPoints; ++k) {
    area += 0.5 * (curve.errors[k] + curve.errors[k - 1]) * (curve.fractions[k] - curve.fractions[k - 1]);
  }
  return area;
}

EvalRecord evaluate_image(const std::string& id, const PredictiveResult& prediction, const Tensor& gt,
                          std::optional<double> tumor_ratio, const ForegroundSet& foreground) {
  const Tensor labels = argmax_labels(prediction.mean_probs);
  EvalRecord r;
  r.image_id = id;
  r.dsc = dsc_foreground(labels, gt, foreground);
  r.error = 100.0 - r.dsc;
  for (double x : prediction.uncertainty_map.data()) r.uq_sum += x;
  r.retention = retention_curve(labels, gt, prediction.uncertainty_map, foreground);
  r.r_auc = r.retention.r_auc;
  r.tumor_ratio = tumor_ratio;
  return r;
}

std::pair<std::vector<EvalRecord>, SummaryRow> evaluate_split(const std::vector<PredictiveResult>& predictions,
                                                              const std::vector<Tensor>& gts,
                                                              const std::vector<std::string>& ids,
                                                              const std::vector<std::optional<double>>& ratios,
                                                              const std::string& method, const std::string& split,
                                                              std::size_t n_samples,
                                                              const ForegroundSet& foreground) {
  if (predictions.empty()) throw std::invalid_argument("evaluate_split: no predictions");
  if (gts.size() != predictions.size() || ids.size() != predictions.size() ||
      (!ratios.empty() && ratios.size() != predictions.size())) {
    throw std::invalid_argument("evaluate_split: length mismatch");
  }
  std::vector<EvalRecord> records;
  records.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    records.push_back(
        evaluate_image(ids[i], predictions[i], gts[i], ratios.empty() ? std::nullopt : ratios[i], foreground));
  }
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.image_id < b.image_id; });
  SummaryRow row = summarize(records, method, split, n_samples);
  return {std::move(records), std::move(row)};
}

SummaryRow summarize(std::vector<EvalRecord> records, const std::string& method, const std::string& split,
                     std::size_t n_samples) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.image_id < b.image_id; });
  std::vector<double> dsc, err, uq, rauc;
  for (const auto& r : records) {
    dsc.push_back(r.dsc);
    err.push_back(r.error);
    uq.push_back(r.uq_sum);
    rauc.push_back(r.r_auc);
  }
  SummaryRow row;
  row.method = method;
  row.split = split;
  row.n_samples = n_samples;
  row.n_images = records.size();
  std::tie(row.dsc_mean, row.dsc_std) = mean_std(dsc);
  std::tie(row.rauc_mean, row.rauc_std) = mean_std(rauc);
  if (records.size() >= 2) row.pearson_r = try_pearson(err, uq);
  return row;
}

OodCorrelation ood_correlation_report(const std::vector<EvalRecord>& in_distribution,
                                      const std::vector<EvalRecord>& out_of_distribution) {
  std::vector<double> ratio, err, uq;
  for (const auto* set : {&in_distribution, &out_of_distribution}) {
    for (const auto& r : *set) {
      if (!r.tumor_ratio) throw std::invalid_argument("ood_correlation_report: record " + r.image_id + " has no tumor ratio");
      ratio.push_back(*r.tumor_ratio);
      err.push_back(r.error);
      uq.push_back(r.uq_sum);
    }
  }
  if (ratio.size() < 3) throw std::invalid_argument("ood_correlation_report: need at least three records");
  OodCorrelation out;
  out.n_records = ratio.size();
  out.ratio_error = try_pearson(ratio, err);
  out.uq_error = try_pearson(uq, err);
  out.uq_ratio = try_pearson(uq, ratio);
  out.n_undefined = !out.ratio_error + !out.uq_error + !out.uq_ratio;
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_records_csv(std::ostream& os, const std::vector<EvalRecord>& records) {
  os << "image_id,dsc,error,uq_sum,r_auc,tumor_ratio\n";
  for (const auto& r : records) {
    os << r.image_id << ',' << format_double(r.dsc) << ',' << format_double(r.error) << ','
       << format_double(r.uq_sum) << ',' << format_double(r.r_auc) << ','
       << (r.tumor_ratio ? format_double(*r.tumor_ratio) : std::string()) << '\n';
  }
}

void write_retention_csv(std::ostream& os, const std::vector<EvalRecord>& records) {
  os << "image_id,fraction,error\n";
  for (const auto& r : records) {
    for (std::size_t k = 0; k < kRetentionPoints; ++k) {
      os << r.image_id << ',' << format_double(r.retention.fractions[k]) << ','
         << format_double(r.retention.errors[k]) << '\n';
    }
  }
}

std::vector<EvalRecord> read_records_csv(std::istream& records, std::istream& retention) {
  std::string line;
  std::vector<EvalRecord> out;
  std::map<std::string, std::size_t> index;
  std::getline(records, line);
  if (line != "image_id,dsc,error,uq_sum,r_auc,tumor_ratio") throw std::invalid_argument("records CSV: bad header");
  while (std::getline(records, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 6) throw std::invalid_argument("records CSV: bad row '" + line + "'");
    EvalRecord r;
    r.image_id = cells[0];
    r.dsc = parse_double(cells[1]);
    r.error = parse_double(cells[2]);
    r.uq_sum = parse_double(cells[3]);
    r.r_auc = parse_double(cells[4]);
    if (!cells[5].empty()) r.tumor_ratio = parse_double(cells[5]);
    index[r.image_id] = out.size();
    out.push_back(std::move(r));
  }
  std::getline(retention, line);
  if (line != "image_id,fraction,error") throw std::invalid_argument("retention CSV: bad header");
  std::map<std::string, std::size_t> filled;
  while (std::getline(retention, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 3) throw std::invalid_argument("retention CSV: bad row '" + line + "'");
    auto it = index.find(cells[0]);
    if (it == index.end()) throw std::invalid_argument("retention CSV: unknown image " + cells[0]);
    std::size_t& k = filled[cells[0]];
    if (k >= kRetentionPoints) throw std::invalid_argument("retention CSV: too many points for " + cells[0]);
    auto& rec = out[it->second];
    rec.retention.fractions[k] = parse_double(cells[1]);
    rec.retention.errors[k] = parse_double(cells[2]);
    ++k;
  }
  for (auto& r : out) {
    if (filled[r.image_id] != kRetentionPoints) throw std::invalid_argument("retention CSV: incomplete curve for " + r.image_id);
    r.retention.r_auc = r.r_auc;
  }
  return out;
}

}  // namespace uqseg::metrics
