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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "uqseg/metrics/metrics.hpp"

using namespace uqseg;
using namespace uqseg::metrics;

namespace {

Tensor labels(std::size_t h, std::size_t w, std::vector<double> v) { return Tensor({h, w}, std::move(v)); }

Tensor random_labels(std::size_t h, std::size_t w, Rng& rng, std::uint64_t classes) {
  std::vector<double> v(h * w);
  for (auto& x : v) x = static_cast<double>(rng.below(classes));
  return Tensor({h, w}, std::move(v));
}

// Rebuilds the prediction from scratch at each fraction and recounts Dice.
std::vector<double> brute_force_retention(const Tensor& pred, const Tensor& gt, const Tensor& unc) {
  const std::size_t v = pred.numel();
  std::vector<std::size_t> idx(v);
  std::iota(idx.begin(), idx.end(), 0);
  // Selection by repeated scan for the largest remaining uncertainty,
  // lowest index first on ties.
  std::vector<std::size_t> order;
  std::vector<bool> used(v, false);
  for (std::size_t n = 0; n < v; ++n) {
    std::size_t best = v;
    for (std::size_t i = 0; i < v; ++i) {
      if (used[i]) continue;
      if (best == v || unc[i] > unc[best]) best = i;
    }
    used[best] = true;
    order.push_back(best);
  }
  std::vector<double> errors;
  for (int k = 0; k <= 100; ++k) {
    std::vector<double> p(pred.data().begin(), pred.data().end());
    const std::size_t m = static_cast<std::size_t>(std::floor(k / 100.0 * static_cast<double>(v) + 1e-9));
    for (std::size_t j = 0; j < m; ++j) p[order[j]] = gt[order[j]];
    double inter = 0, sp = 0, sg = 0;
    for (std::size_t i = 0; i < v; ++i) {
      const bool a = p[i] != 0, b = gt[i] != 0;
      inter += a && b;
      sp += a;
      sg += b;
    }
    errors.push_back(sp + sg == 0 ? 0.0 : 100.0 - 200.0 * inter / (sp + sg));
  }
  return errors;
}

EvalRecord make_record(std::string id, double dsc, double uq, double rauc, std::optional<double> ratio = {}) {
  EvalRecord r;
  r.image_id = std::move(id);
  r.dsc = dsc;
  r.error = 100 - dsc;
  r.uq_sum = uq;
  r.r_auc = rauc;
  r.tumor_ratio = ratio;
  return r;
}

PredictiveResult one_hot_prediction(const Tensor& lab, std::size_t classes, const Tensor& unc) {
  const std::size_t hw = lab.numel();
  std::vector<double> p(classes * hw, 0.0);
  for (std::size_t i = 0; i < hw; ++i) p[static_cast<std::size_t>(lab[i]) * hw + i] = 1.0;
  PredictiveResult r;
  r.mean_probs = Tensor({classes, lab.dim(0), lab.dim(1)}, std::move(p));
  r.uncertainty_map = unc;
  return r;
}

}  // namespace

TEST_CASE("dsc_foreground basic values") {
  const Tensor a = labels(2, 3, {0, 1, 1, 0, 2, 0});
  CHECK(dsc_foreground(a, a) == doctest::Approx(100.0));
  CHECK(dsc_foreground(labels(1, 4, {1, 1, 0, 0}), labels(1, 4, {0, 0, 1, 1})) == 0.0);
  CHECK(dsc_foreground(labels(1, 4, {1, 1, 0, 0}), labels(1, 4, {0, 1, 1, 0})) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(dsc_foreground(labels(1, 3, {0, 0, 0}), labels(1, 3, {0, 0, 0})) == 100.0);
  // organ and tumor count jointly
  CHECK(dsc_foreground(labels(1, 2, {1, 2}), labels(1, 2, {2, 1})) == 100.0);
  CHECK(dsc_foreground(labels(1, 2, {1, 2}), labels(1, 2, {2, 1}), {2}) == 0.0);
  CHECK_THROWS_AS(dsc_foreground(labels(1, 2, {0, 0}), labels(2, 1, {0, 0})), ShapeError);
}

TEST_CASE("dsc_foreground is symmetric and bounded") {
  Rng rng(4, 0);
  for (int t = 0; t < 50; ++t) {
    const Tensor a = random_labels(5, 7, rng, 3), b = random_labels(5, 7, rng, 3);
    const double d = dsc_foreground(a, b);
    CHECK(d == dsc_foreground(b, a));
    CHECK(d >= 0.0);
    CHECK(d <= 100.0);
  }
}

TEST_CASE("pearson_r") {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(2 * x + 3);
  CHECK(std::abs(pearson_r(xs, ys) - 1.0) < 1e-12);
  std::vector<double> neg;
  for (double x : xs) neg.push_back(-x);
  CHECK(pearson_r(xs, neg) == doctest::Approx(-1.0).epsilon(1e-12));

  // covariance / (sigma_x sigma_y) written out for (1,2,3,4) vs (1,3,2,5)
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 5};
  const double cov = ((1 - 2.5) * (1 - 2.75) + (2 - 2.5) * (3 - 2.75) + (3 - 2.5) * (2 - 2.75) + (4 - 2.5) * (5 - 2.75)) / 4;
  const double sa = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 4);
  const double sb = std::sqrt((1.75 * 1.75 + 0.25 * 0.25 + 0.75 * 0.75 + 2.25 * 2.25) / 4);
  CHECK(std::abs(pearson_r(a, b) - cov / (sa * sb)) < 1e-12);

  CHECK_THROWS_AS(pearson_r(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelation);
  CHECK_THROWS_AS(pearson_r(std::vector<double>{1, 2}, std::vector<double>{1}), std::invalid_argument);
  CHECK_THROWS_AS(pearson_r(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("retention curve end points and grid") {
  Rng rng(8, 0);
  const Tensor pred = random_labels(6, 6, rng, 3), gt = random_labels(6, 6, rng, 3);
  const Tensor unc = testing::random_tensor({6, 6}, rng, 0.0, 1.0);
  const auto c = retention_curve(pred, gt, unc);
  CHECK(c.errors[100] == 0.0);
  CHECK(c.errors[0] == doctest::Approx(100.0 - dsc_foreground(pred, gt)));
  for (std::size_t k = 0; k < kRetentionPoints; ++k) CHECK(c.fractions[k] == doctest::Approx(k / 100.0));
  CHECK(c.r_auc == doctest::Approx(trapezoid_auc(c)));
  CHECK_THROWS_AS(retention_curve(pred, gt, mul_scalar(unc, -1.0)), std::invalid_argument);
  CHECK_THROWS_AS(retention_curve(pred, gt, Tensor({3, 12})), ShapeError);
}

TEST_CASE("retention curve matches a brute-force re-simulation") {
  Rng rng(15, 0);
  for (int t = 0; t < 20; ++t) {
    const Tensor pred = random_labels(8, 8, rng, 2), gt = random_labels(8, 8, rng, 2);
    // coarse uncertainties so ties occur
    std::vector<double> u(64);
    for (auto& x : u) x = static_cast<double>(rng.below(5));
    const Tensor unc({8, 8}, u);
    const auto c = retention_curve(pred, gt, unc);
    const auto oracle = brute_force_retention(pred, gt, unc);
    for (std::size_t k = 0; k < kRetentionPoints; ++k) CHECK(c.errors[k] == doctest::Approx(oracle[k]).epsilon(1e-12));
  }
}

TEST_CASE("retention ordering properties") {
  Rng rng(21, 0);
  const Tensor gt = random_labels(10, 10, rng, 2);
  std::vector<double> p(gt.data().begin(), gt.data().end());
  for (std::size_t i = 0; i < p.size(); i += 3) p[i] = 1 - p[i];
  const Tensor pred({10, 10}, p);

  // oracle uncertainty: 1 where wrong
  std::vector<double> wrong(100);
  for (std::size_t i = 0; i < 100; ++i) wrong[i] = pred[i] != gt[i] ? 1.0 : 0.0;
  const auto best = retention_curve(pred, gt, Tensor({10, 10}, wrong));
  for (std::size_t k = 1; k < kRetentionPoints; ++k) CHECK(best.errors[k] <= best.errors[k - 1] + 1e-12);
  for (int t = 0; t < 20; ++t) {
    const Tensor other = testing::random_tensor({10, 10}, rng, 0.0, 1.0);
    CHECK(best.r_auc <= retention_curve(pred, gt, other).r_auc + 1e-12);
  }

  // strictly increasing transform keeps the curve
  const Tensor u = testing::random_tensor({10, 10}, rng, 0.0, 2.0);
  const auto base = retention_curve(pred, gt, u);
  const auto transformed = retention_curve(pred, gt, add_scalar(exp(mul_scalar(u, 3.0)), 1.0));
  for (std::size_t k = 0; k < kRetentionPoints; ++k) CHECK(base.errors[k] == transformed.errors[k]);

  // permuting the map keeps the sum but changes the curve
  std::vector<double> perm(u.data().begin(), u.data().end());
  std::reverse(perm.begin(), perm.end());
  const Tensor up({10, 10}, perm);
  double s1 = 0, s2 = 0;
  for (double x : u.data()) s1 += x;
  for (double x : up.data()) s2 += x;
  CHECK(s1 == doctest::Approx(s2));
  const auto permuted = retention_curve(pred, gt, up);
  bool differs = false;
  for (std::size_t k = 0; k < kRetentionPoints; ++k) differs |= permuted.errors[k] != base.errors[k];
  CHECK(differs);

  // zero error gives zero area, and non-zero error a positive area
  CHECK(retention_curve(gt, gt, u).r_auc == 0.0);
  CHECK(base.r_auc > 0.0);
}

TEST_CASE("evaluate_split") {
  const Tensor gt = labels(2, 2, {0, 1, 1, 0});
  const Tensor unc = labels(2, 2, {0.1, 0.2, 0.3, 0.4});
  SUBCASE("single image has zero spread") {
    const auto [recs, row] = evaluate_split({one_hot_prediction(gt, 2, unc)}, {gt}, {"a"}, {}, "base", "id", 1);
    CHECK(row.dsc_std == 0.0);
    CHECK(row.rauc_std == 0.0);
    CHECK(recs[0].uq_sum == doctest::Approx(1.0));
    CHECK_FALSE(row.pearson_r.has_value());
  }
  SUBCASE("perfect predictions leave correlation undefined") {
    std::vector<PredictiveResult> preds;
    for (int i = 0; i < 3; ++i) preds.push_back(one_hot_prediction(gt, 2, mul_scalar(unc, i + 1.0)));
    const auto [recs, row] = evaluate_split(preds, {gt, gt, gt}, {"c", "a", "b"}, {}, "base", "id", 1);
    CHECK(row.dsc_mean == 100.0);
    CHECK_FALSE(row.pearson_r.has_value());
    CHECK(recs[0].image_id == "a");
  }
  CHECK_THROWS_AS(evaluate_split({}, {}, {}, {}, "m", "s", 1), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_split({one_hot_prediction(gt, 2, unc)}, {gt, gt}, {"a"}, {}, "m", "s", 1),
                  std::invalid_argument);
}

TEST_CASE("summary statistics against a hand-rolled oracle") {
  Rng rng(3, 0);
  std::vector<EvalRecord> recs;
  std::vector<double> dsc, uq, ra;
  for (int i = 0; i < 10; ++i) {
    dsc.push_back(rng.uniform(50, 100));
    uq.push_back(rng.uniform(0, 30));
    ra.push_back(rng.uniform(0, 5));
    recs.push_back(make_record("img" + std::to_string(i), dsc.back(), uq.back(), ra.back()));
  }
  std::reverse(recs.begin(), recs.end());
  const auto row = summarize(recs, "m", "s", 4);
  double m = 0;
  for (double d : dsc) m += d;
  m /= 10;
  double v = 0;
  for (double d : dsc) v += (d - m) * (d - m);
  v /= 10;
  double mr = 0, vr = 0;
  for (double d : ra) mr += d / 10;
  for (double d : ra) vr += (d - mr) * (d - mr) / 10;
  CHECK(std::abs(row.dsc_mean - m) < 1e-12);
  CHECK(std::abs(row.dsc_std - std::sqrt(v)) < 1e-12);
  CHECK(std::abs(row.rauc_mean - mr) < 1e-12);
  CHECK(std::abs(row.rauc_std - std::sqrt(vr)) < 1e-12);
  std::vector<double> err;
  for (double d : dsc) err.push_back(100 - d);
  REQUIRE(row.pearson_r.has_value());
  CHECK(std::abs(*row.pearson_r - pearson_r(err, uq)) < 1e-12);
  CHECK(row.n_images == 10);
}

TEST_CASE("ood correlation report") {
  std::vector<EvalRecord> id, ood;
  for (int i = 0; i < 4; ++i) id.push_back(make_record("i" + std::to_string(i), 100 - i, 5.0, 0, i));
  for (int i = 4; i < 7; ++i) ood.push_back(make_record("o" + std::to_string(i), 100 - i, 5.0, 0, i));
  const auto rep = ood_correlation_report(id, ood);
  REQUIRE(rep.ratio_error.has_value());
  CHECK(*rep.ratio_error == doctest::Approx(1.0));
  CHECK_FALSE(rep.uq_error.has_value());
  CHECK_FALSE(rep.uq_ratio.has_value());
  CHECK(rep.n_undefined == 2);
  CHECK(rep.n_records == 7);

  Rng rng(6, 0);
  std::vector<double> r, e, u;
  for (auto* set : {&id, &ood}) {
    for (auto& rec : *set) {
      rec.uq_sum = rng.uniform(0, 10);
      rec.tumor_ratio = rng.uniform(0, 1);
      rec.error = rng.uniform(0, 50);
      r.push_back(*rec.tumor_ratio);
      e.push_back(rec.error);
      u.push_back(rec.uq_sum);
    }
  }
  const auto full = ood_correlation_report(id, ood);
  CHECK(*full.ratio_error == doctest::Approx(pearson_r(r, e)).epsilon(1e-12));
  CHECK(*full.uq_error == doctest::Approx(pearson_r(u, e)).epsilon(1e-12));
  CHECK(*full.uq_ratio == doctest::Approx(pearson_r(u, r)).epsilon(1e-12));

  id[0].tumor_ratio.reset();
  CHECK_THROWS_AS(ood_correlation_report(id, ood), std::invalid_argument);
  CHECK_THROWS_AS(ood_correlation_report({ood[0]}, {ood[1]}), std::invalid_argument);
}

TEST_CASE("records CSV round trip") {
  Rng rng(12, 0);
  const Tensor gt = random_labels(6, 6, rng, 3);
  const Tensor pred = random_labels(6, 6, rng, 3);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 3; ++i) {
    auto r = evaluate_image("im" + std::to_string(i), one_hot_prediction(pred, 3, testing::random_tensor({6, 6}, rng, 0, 1)),
                            gt, i == 1 ? std::optional<double>() : std::optional<double>(0.1 * i + 1.0 / 3.0));
    recs.push_back(r);
  }
  std::stringstream a, b;
  write_records_csv(a, recs);
  write_retention_csv(b, recs);
  const auto back = read_records_csv(a, b);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].image_id == recs[i].image_id);
    CHECK(back[i].dsc == recs[i].dsc);
    CHECK(back[i].uq_sum == recs[i].uq_sum);
    CHECK(back[i].r_auc == recs[i].r_auc);
    CHECK(back[i].tumor_ratio == recs[i].tumor_ratio);
    CHECK(back[i].retention.errors == recs[i].retention.errors);
  }
}
