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

#include "uqseg/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "uqseg/core/json_keys.hpp"
#include "uqseg/data/io.hpp"

namespace uqseg::data {
namespace {

using nlohmann::json;

constexpr std::uint64_t kSplitStream = 0x5e11;

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("range must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;

  // Normalized radius: 1 on the boundary.
  double radius(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * cos_t + dy * sin_t;
    const double v = -dx * sin_t + dy * cos_t;
    return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
  }
  // Ramp from 0 outside to 1 inside, centered on the boundary.
  double soft(double x, double y, double softness) const {
    const double s = (1.0 - radius(x, y)) * std::sqrt(a * b) / softness;
    return 1.0 / (1.0 + std::exp(-s));
  }
};

Ellipse random_ellipse(Rng& rng, double cx, double cy, Range radius) {
  Ellipse e;
  e.cx = cx;
  e.cy = cy;
  e.a = rng.uniform(radius.lo, radius.hi);
  e.b = rng.uniform(radius.lo, radius.hi);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  e.cos_t = std::cos(theta);
  e.sin_t = std::sin(theta);
  return e;
}

LabeledImage generate_one(const SynthConfig& cfg, Rng rng, std::string id) {
  const std::size_t s = cfg.image_size;
  const double size = static_cast<double>(s);
  const double margin = cfg.organ_radius.hi + 1.0;
  const double cx = rng.uniform(margin, size - margin);
  const double cy = rng.uniform(margin, size - margin);
  const Ellipse organ = random_ellipse(rng, cx, cy, cfg.organ_radius);

  std::optional<Ellipse> tumor;
  if (cfg.tumor_probability > 0.0 && rng.uniform() < cfg.tumor_probability) {
    // Keep at least a one-pixel organ rim around the tumor.
    const double fit = std::min(organ.a, organ.b) - 1.0;
    Range r{std::min(cfg.tumor_radius.lo, fit), std::min(cfg.tumor_radius.hi, fit)};
    Ellipse t = random_ellipse(rng, 0.0, 0.0, r);
    const double slack = std::max(0.0, fit - std::max(t.a, t.b));
    const double rho = slack * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    t.cx = cx + rho * std::cos(phi);
    t.cy = cy + rho * std::sin(phi);
    tumor = t;
  }

  std::vector<Ellipse> blobs;
  for (std::size_t k = 0; k < cfg.distractors; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double m = cfg.distractor_radius.hi + 1.0;
      const double bx = rng.uniform(m, size - m), by = rng.uniform(m, size - m);
      Ellipse e = random_ellipse(rng, bx, by, cfg.distractor_radius);
      const double gap = std::hypot(bx - cx, by - cy) - std::max(organ.a, organ.b) - std::max(e.a, e.b);
      if (gap > 2.0 * cfg.edge_softness + 1.0) {
        blobs.push_back(e);
        break;
      }
    }
  }

  std::vector<double> img(s * s), lab(s * s, 0.0);
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const std::size_t i = y * s + x;
      double v = cfg.background_intensity;
      for (const auto& b : blobs) v += (cfg.organ_intensity - cfg.background_intensity) * b.soft(px, py, cfg.edge_softness);
      v += (cfg.organ_intensity - v) * organ.soft(px, py, cfg.edge_softness);
      const bool in_organ = organ.radius(px, py) <= 1.0;
      if (in_organ) lab[i] = kOrgan;
      if (tumor) {
        v += (cfg.tumor_intensity - v) * tumor->soft(px, py, cfg.edge_softness);
        if (in_organ && tumor->radius(px, py) <= 1.0) lab[i] = kTumor;
      }
      img[i] = v;
    }
  }
  for (auto& v : img) v += cfg.noise_sigma * rng.normal();

  LabeledImage out;
  out.id = std::move(id);
  out.image = normalize_intensity(Tensor({1, s, s}, std::move(img)));
  out.labels = Tensor({s, s}, std::move(lab));
  if (cfg.has_tumor_class()) out.tumor_ratio = tumor_ratio(out.labels);
  return out;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

void check_fractions(const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
}

std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

const LabeledImage& Dataset::by_id(const std::string& id) const {
  for (const auto& im : images) {
    if (im.id == id) return im;
  }
  throw std::out_of_range("no image with id " + id);
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  for (const auto& im : images) out.push_back(im.id);
  return out;
}

std::vector<LabeledImage> Dataset::subset(const std::vector<std::string>& ids) const {
  std::vector<LabeledImage> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(by_id(id));
  return out;
}

void SynthConfig::validate() const {
  if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  if (!(organ_radius.lo > 0) || organ_radius.lo > organ_radius.hi) throw std::invalid_argument("bad organ_radius");
  if (2.0 * (organ_radius.hi + 1.0) >= static_cast<double>(image_size)) {
    throw std::invalid_argument("organ_radius does not fit in the image");
  }
  if (!(tumor_radius.lo > 0) || tumor_radius.lo > tumor_radius.hi) throw std::invalid_argument("bad tumor_radius");
  if (tumor_radius.hi > organ_radius.lo) throw std::invalid_argument("tumor_radius range exceeds organ_radius");
  if (tumor_probability < 0 || tumor_probability > 1) throw std::invalid_argument("tumor_probability must be in [0,1]");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be non-negative");
  if (!(edge_softness > 0)) throw std::invalid_argument("edge_softness must be positive");
  if (distractors > 0 && (!(distractor_radius.lo > 0) || distractor_radius.lo > distractor_radius.hi)) {
    throw std::invalid_argument("bad distractor_radius");
  }
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"image_size", c.image_size},
           {"organ_radius", range_json(c.organ_radius)},
           {"tumor_radius", range_json(c.tumor_radius)},
           {"tumor_probability", c.tumor_probability},
           {"noise_sigma", c.noise_sigma},
           {"background_intensity", c.background_intensity},
           {"organ_intensity", c.organ_intensity},
           {"tumor_intensity", c.tumor_intensity},
           {"edge_softness", c.edge_softness},
           {"distractors", c.distractors},
           {"distractor_radius", range_json(c.distractor_radius)},
           {"three_class", c.three_class}};
}

void from_json(const json& j, SynthConfig& c) {
  check_keys(j,
             {"image_size", "organ_radius", "tumor_radius", "tumor_probability", "noise_sigma", "background_intensity",
              "organ_intensity", "tumor_intensity", "edge_softness", "distractors", "distractor_radius", "three_class"},
             "synthetic config");
  SynthConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.organ_radius = j.contains("organ_radius") ? range_from(j["organ_radius"]) : d.organ_radius;
  c.tumor_radius = j.contains("tumor_radius") ? range_from(j["tumor_radius"]) : d.tumor_radius;
  c.tumor_probability = j.value("tumor_probability", d.tumor_probability);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.background_intensity = j.value("background_intensity", d.background_intensity);
  c.organ_intensity = j.value("organ_intensity", d.organ_intensity);
  c.tumor_intensity = j.value("tumor_intensity", d.tumor_intensity);
  c.edge_softness = j.value("edge_softness", d.edge_softness);
  c.distractors = j.value("distractors", d.distractors);
  c.distractor_radius = j.contains("distractor_radius") ? range_from(j["distractor_radius"]) : d.distractor_radius;
  c.three_class = j.value("three_class", d.three_class);
}

Dataset synth_generate(std::size_t n, const SynthConfig& cfg, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("synth_generate: n must be at least 1");
  cfg.validate();
  const Rng root(seed, 0);
  Dataset ds;
  ds.num_classes = cfg.has_tumor_class() ? 3 : 2;
  ds.images.reserve(n);
  const int width = n > 10000 ? 6 : 4;
  for (std::size_t i = 0; i < n; ++i) {
    std::string num = std::to_string(i);
    std::string id = "img_" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    ds.images.push_back(generate_one(cfg, root.derive(i), std::move(id)));
  }
  return ds;
}

double tumor_ratio(const Tensor& labels) {
  std::size_t organ = 0, tumor = 0;
  for (double v : labels.data()) {
    organ += v == kOrgan;
    tumor += v == kTumor;
  }
  if (organ == 0) throw std::domain_error("tumor_ratio: no organ voxels");
  return static_cast<double>(tumor) / static_cast<double>(organ);
}

Tensor normalize_intensity(const Tensor& volume) {
  const auto v = volume.data();
  std::vector<double> out(v.size(), 0.0);
  if (!v.empty()) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double span = *hi - *lo;
    if (span > 0) {
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / span;
    }
  }
  return Tensor(volume.shape(), std::move(out));
}

std::vector<Patch> sample_patches(const Tensor& image, const Tensor& labels, std::size_t patch_size, Rng& rng,
                                  std::size_t n) {
  if (image.rank() != 3 || labels.rank() != 2 || image.dim(1) != labels.dim(0) || image.dim(2) != labels.dim(1)) {
    throw ShapeError("sample_patches: expected image [C,H,W] and labels [H,W]");
  }
  const std::size_t c = image.dim(0), h = labels.dim(0), w = labels.dim(1);
  if (patch_size == 0 || patch_size > h || patch_size > w) {
    throw std::invalid_argument("sample_patches: patch size " + std::to_string(patch_size) + " does not fit " +
                                to_string(labels.shape()));
  }
  std::vector<Patch> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Patch p;
    p.row = static_cast<std::size_t>(rng.below(h - patch_size + 1));
    p.col = static_cast<std::size_t>(rng.below(w - patch_size + 1));
    std::vector<double> im(c * patch_size * patch_size), lb(patch_size * patch_size);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < patch_size; ++y) {
        for (std::size_t x = 0; x < patch_size; ++x) {
          im[(ch * patch_size + y) * patch_size + x] = image[(ch * h + p.row + y) * w + p.col + x];
        }
      }
    }
    for (std::size_t y = 0; y < patch_size; ++y) {
      for (std::size_t x = 0; x < patch_size; ++x) lb[y * patch_size + x] = labels[(p.row + y) * w + p.col + x];
    }
    p.image = Tensor({c, patch_size, patch_size}, std::move(im));
    p.labels = Tensor({patch_size, patch_size}, std::move(lb));
    out.push_back(std::move(p));
  }
  return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> ood_split(const Dataset& dataset, std::size_t holdout_n) {
  const std::size_t n = dataset.images.size();
  if (holdout_n >= n) throw std::invalid_argument("ood_split: holdout must be smaller than the dataset");
  std::vector<std::pair<double, std::string>> rows;
  for (const auto& im : dataset.images) {
    if (!im.tumor_ratio) throw std::invalid_argument("ood_split: image " + im.id + " has no tumor ratio");
    rows.emplace_back(*im.tumor_ratio, im.id);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> id_set, ood_set;
  for (std::size_t i = 0; i < n; ++i) (i < holdout_n ? ood_set : id_set).push_back(rows[i].second);
  return {sorted(std::move(id_set)), sorted(std::move(ood_set))};
}

SplitPlan kfold_split(const std::vector<std::string>& ids, std::size_t folds, std::uint64_t seed,
                      SplitFractions fractions) {
  check_fractions(fractions);
  const std::size_t n = ids.size();
  if (folds == 0 || n < folds) throw std::invalid_argument("kfold_split: need at least one test id per fold");
  if (std::set<std::string>(ids.begin(), ids.end()).size() != n) throw std::invalid_argument("kfold_split: duplicate ids");
  std::vector<std::string> order = ids;
  Rng rng(seed, kSplitStream);
  rng.shuffle(order.begin(), order.end());

  const std::size_t n_val = round_count(fractions.val, n);
  SplitPlan plan;
  plan.seed = seed;
  std::size_t begin = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t len = n / folds + (f < n % folds ? 1 : 0);
    Fold fold;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < n; ++i) (i >= begin && i < begin + len ? fold.test : rest).push_back(order[i]);
    if (n_val > rest.size()) throw std::invalid_argument("kfold_split: validation set larger than the remainder");
    fold.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    fold.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    fold.train = sorted(std::move(fold.train));
    fold.val = sorted(std::move(fold.val));
    fold.test = sorted(std::move(fold.test));
    plan.folds.push_back(std::move(fold));
    begin += len;
  }
  return plan;
}

Fold holdout_split(const std::vector<std::string>& ids, std::uint64_t seed, SplitFractions fractions) {
  check_fractions(fractions);
  const std::size_t n = ids.size();
  std::vector<std::string> order = ids;
  Rng rng(seed, kSplitStream);
  rng.shuffle(order.begin(), order.end());
  const std::size_t n_test = round_count(fractions.test, n), n_val = round_count(fractions.val, n);
  if (n_test + n_val >= n) throw std::invalid_argument("holdout_split: no training ids left");
  Fold fold;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_test ? fold.test : i < n_test + n_val ? fold.val : fold.train).push_back(order[i]);
  }
  fold.train = sorted(std::move(fold.train));
  fold.val = sorted(std::move(fold.val));
  fold.test = sorted(std::move(fold.test));
  return fold;
}

void to_json(json& j, const SplitPlan& p) {
  j = json{{"seed", p.seed}, {"folds", json::array()}};
  for (const auto& f : p.folds) j["folds"].push_back({{"train", f.train}, {"val", f.val}, {"test", f.test}});
}

void from_json(const json& j, SplitPlan& p) {
  p.seed = j.at("seed").get<std::uint64_t>();
  p.folds.clear();
  for (const auto& f : j.at("folds")) {
    p.folds.push_back({f.at("train").get<std::vector<std::string>>(), f.at("val").get<std::vector<std::string>>(),
                       f.at("test").get<std::vector<std::string>>()});
  }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, const std::string& format) {
  if (format != "uqtn" && format != "nifti") throw std::invalid_argument("unknown dataset format " + format);
  const std::string ext = format == "uqtn" ? ".uqtn" : ".nii.gz";
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  json manifest{{"format", format}, {"num_classes", dataset.num_classes}, {"images", json::array()}};
  for (const auto& im : dataset.images) {
    if (format == "uqtn") {
      write_tensor(dir / "images" / (im.id + ext), im.image);
      write_tensor(dir / "labels" / (im.id + ext), im.labels);
    } else {
      write_nifti(dir / "images" / (im.id + ext), im.image);
      write_nifti(dir / "labels" / (im.id + ext), im.labels, {.type = NiftiType::uint8});
    }
    json entry{{"id", im.id}};
    entry["tumor_ratio"] = im.tumor_ratio ? json(*im.tumor_ratio) : json(nullptr);
    manifest["images"].push_back(entry);
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("no manifest.json in " + dir.string());
  const json manifest = json::parse(is);
  const std::string format = manifest.at("format");
  const std::string ext = format == "uqtn" ? ".uqtn" : ".nii.gz";
  Dataset ds;
  ds.num_classes = manifest.at("num_classes");
  for (const auto& e : manifest.at("images")) {
    LabeledImage im;
    im.id = e.at("id");
    if (format == "uqtn") {
      im.image = read_tensor(dir / "images" / (im.id + ext));
      im.labels = read_tensor(dir / "labels" / (im.id + ext));
    } else {
      im.image = read_nifti(dir / "images" / (im.id + ext)).volume;
      im.labels = read_nifti(dir / "labels" / (im.id + ext)).volume;
      if (im.image.rank() == 2) im.image = Tensor({1, im.image.dim(0), im.image.dim(1)}, im.image.values());
    }
    if (!e.at("tumor_ratio").is_null()) im.tumor_ratio = e.at("tumor_ratio").get<double>();
    ds.images.push_back(std::move(im));
  }
  return ds;
}

}  // namespace uqseg::data
