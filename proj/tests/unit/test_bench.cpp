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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "uqseg/bench/config.hpp"
#include "uqseg/bench/profile.hpp"
#include "uqseg/bench/report.hpp"
#include "uqseg/bench/runner.hpp"
#include "uqseg/model/checkpoint.hpp"
#include "uqseg/uq/rank1.hpp"

using namespace uqseg;
using namespace uqseg::bench;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uqseg_test_bench_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

BenchConfig tiny_config(const fs::path& out) {
  BenchConfig c;
  c.dataset.count = 15;
  c.dataset.seed = 5;
  c.dataset.generator.image_size = 16;
  c.dataset.generator.organ_radius = {3, 6};
  c.dataset.generator.tumor_radius = {1, 2};
  c.folds = 3;
  for (auto tag : {uq::MethodTag::base, uq::MethodTag::mc_dropout}) {
    uq::UQMethodSpec s;
    s.tag = tag;
    c.methods.push_back(s);
  }
  c.sample_budgets = {2, 3};
  c.seeds = {4};
  c.deterministic = true;
  c.output = out;
  c.network.encoder_channels = {4, 8};
  c.network.residual_units_per_level = 1;
  c.training.max_epochs = 2;
  c.training.batch_size = 4;
  return c;
}

/// Minimal XML well-formedness check: balanced, properly nested elements,
/// quoted attributes. Counts elements by name.
bool well_formed(const std::string& xml, std::map<std::string, int>& counts) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while ((i = xml.find('<', i)) != std::string::npos) {
    const std::size_t end = xml.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = xml.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    if (self_closing) tag.pop_back();
    const std::string name = tag.substr(0, tag.find_first_of(" \n\t"));
    if (std::count(tag.begin(), tag.end(), '"') % 2) return false;
    if (stack.empty() && root_seen) return false;
    root_seen = true;
    ++counts[name];
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty();
}

metrics::EvalRecord record(const std::string& id, double dsc, double uq, double slope) {
  metrics::EvalRecord r;
  r.image_id = id;
  r.dsc = dsc;
  r.error = 100 - dsc;
  r.uq_sum = uq;
  for (std::size_t k = 0; k < metrics::kRetentionPoints; ++k) {
    r.retention.fractions[k] = static_cast<double>(k) / 100.0;
    r.retention.errors[k] = r.error * (1 - slope * r.retention.fractions[k]);
  }
  r.r_auc = metrics::trapezoid_auc(r.retention);
  r.retention.r_auc = r.r_auc;
  return r;
}

Report sample_report() {
  Report rep;
  const std::vector<metrics::EvalRecord> a{record("a", 90, 3, 1.0), record("b", 80, 7, 0.9), record("c", 85, 4, 1.0)};
  const std::vector<metrics::EvalRecord> b{record("a", 93, 1, 0.5), record("b", 70, 2, 0.6), record("c", 88, 9, 0.7)};
  rep.records = {{"base", "test", 1, a}, {"swag", "test", 4, b}, {"swag", "test", 30, b}};
  for (const auto& s : rep.records) rep.summaries.push_back(metrics::summarize(s.records, s.method, s.split, s.n_samples));
  rep.summaries[0].pearson_r.reset();
  rep.heatmaps.push_back({"base", "a", Tensor({3, 2}, std::vector<double>{0, 0.1, 0.2, 0.3, 0.4, 0.5})});
  rep.scalability.push_back({"base", 10, 1.5, 0.01, 1000, 0.008, 2.5, 10});
  return rep;
}

}  // namespace

TEST_CASE("bench config") {
  BenchConfig c = tiny_config("out_a");
  const json j = c;
  const BenchConfig back = j.get<BenchConfig>();
  CHECK(json(back) == j);
  CHECK(back.hash() == c.hash());

  BenchConfig moved = c;
  moved.output = "elsewhere";
  CHECK(moved.hash() == c.hash());
  moved.seeds = {5};
  CHECK(moved.hash() != c.hash());

  json bad = j;
  bad["sample_budget"] = {4};
  CHECK_THROWS_AS(bad.get<BenchConfig>(), std::invalid_argument);
  bad = j;
  bad["methods"] = json::array();
  CHECK_THROWS_AS(bad.get<BenchConfig>(), std::invalid_argument);
  bad = j;
  bad["sample_budgets"] = {4, 0};
  CHECK_THROWS_AS(bad.get<BenchConfig>(), std::invalid_argument);
  bad = j;
  bad["methods"].push_back(j["methods"][0]);
  CHECK_THROWS_AS(bad.get<BenchConfig>(), std::invalid_argument);
  bad = j;
  bad["experiment"] = "loo";
  CHECK_THROWS_AS(bad.get<BenchConfig>(), std::invalid_argument);

  // defaults
  const BenchConfig d = json{{"methods", {{{"tag", "base"}}}}}.get<BenchConfig>();
  CHECK(d.sample_budgets == std::vector<std::size_t>{4, 30});
  CHECK(d.folds == 5);
  CHECK(d.dataset.count == 200);
}

TEST_CASE("sample budgets per method") {
  uq::UQMethodSpec s;
  CHECK(budgets_for(s, {4, 30}) == std::vector<std::size_t>{1});
  s.tag = uq::MethodTag::ensemble;
  CHECK(budgets_for(s, {4, 30}) == std::vector<std::size_t>{4});
  s.tag = uq::MethodTag::swa;
  CHECK(budgets_for(s, {4, 30}) == std::vector<std::size_t>{1});
  for (auto tag : {uq::MethodTag::mc_dropout, uq::MethodTag::swag, uq::MethodTag::lp_bnn}) {
    s.tag = tag;
    CHECK(budgets_for(s, {4, 30}) == std::vector<std::size_t>{4, 30});
  }
}

TEST_CASE("ood split on a 281-image manifest") {
  data::Dataset ds;
  ds.num_classes = 3;
  for (int i = 0; i < 281; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%03d", i);
    ds.images.push_back({id, Tensor({1, 2, 2}), Tensor({2, 2}), 0.001 * ((i * 37) % 281)});
  }
  BenchConfig c;
  c.experiment = Experiment::ood;
  c.methods.resize(1);
  CHECK(c.holdout_count(281) == 50);
  const auto plans = plan_splits(c, ds, 3);
  REQUIRE(plans.size() == 1);
  CHECK_FALSE(plans[0].fold);
  REQUIRE(plans[0].eval.size() == 2);
  CHECK(plans[0].eval[0].first == "id");
  CHECK(plans[0].eval[0].second.size() == 46);
  CHECK(plans[0].eval[1].second.size() == 50);
  CHECK(plans[0].data.train.size() == 162);
  CHECK(plans[0].data.val.size() == 23);
  // held-out instances have the largest ratios
  double min_ood = 1e9, max_id = -1;
  for (const auto& id : plans[0].eval[1].second) min_ood = std::min(min_ood, *ds.by_id(id).tumor_ratio);
  for (const auto& im : plans[0].data.train) max_id = std::max(max_id, *im.tumor_ratio);
  CHECK(min_ood > max_id);
}

TEST_CASE("kfold splits partition the dataset") {
  const BenchConfig c = tiny_config("unused");
  const auto ds = c.dataset.load();
  const auto plans = plan_splits(c, ds, 1);
  REQUIRE(plans.size() == 3);
  std::multiset<std::string> tested;
  for (const auto& p : plans) {
    for (const auto& id : p.eval[0].second) tested.insert(id);
    std::set<std::string> train;
    for (const auto& im : p.data.train) train.insert(im.id);
    for (const auto& id : p.eval[0].second) CHECK(train.count(id) == 0);
  }
  CHECK(tested.size() == 15);
  CHECK(std::set<std::string>(tested.begin(), tested.end()).size() == 15);
}

TEST_CASE("parameter accounting") {
  model::UNetConfig cfg;  // the default network
  const auto capture = [](const model::SegNet& n) { return model::Checkpoint::capture(n); };
  model::SegNet base_net(cfg, 1);
  const std::size_t base = base_net.params().parameter_count();

  uq::MethodArtifacts a;
  a.members = {capture(base_net)};
  CHECK(count_parameters(a) == base);

  a.spec.tag = uq::MethodTag::mc_dropout;
  model::SegNet mc(cfg, 1, 0.1);
  a.members = {capture(mc)};
  CHECK(count_parameters(a) == base);

  a.spec.tag = uq::MethodTag::ensemble;
  a.members.clear();
  for (int i = 0; i < 4; ++i) a.members.push_back(capture(model::SegNet(cfg, 10 + i)));
  CHECK(count_parameters(a) == 4 * base);

  a.spec.tag = uq::MethodTag::batch_ensemble;
  a.members = {capture(model::SegNet(cfg, 1, 0.0, std::make_unique<uq::BatchEnsemble>(4)))};
  const double ratio = static_cast<double>(count_parameters(a)) / static_cast<double>(base);
  CHECK(ratio > 1.0);
  CHECK(ratio < 1.05);

  a.spec.tag = uq::MethodTag::swag;
  a.members = {capture(base_net)};
  uq::SwagStats stats(base, 3);
  uq::WeightVector w(base, 0.0);
  for (int k = 0; k < 5; ++k) {
    w[0] = k;
    stats.update(w);
  }
  a.swag = {stats};
  CHECK(count_parameters(a) == 5 * base);
}

TEST_CASE("pass size") {
  model::UNetConfig cfg;
  cfg.encoder_channels = {4, 8};
  cfg.residual_units_per_level = 1;
  Rng rng(1, 0);
  const Tensor img = testing::random_tensor({1, 16, 16}, rng, 0, 1);
  model::SegNet base(cfg, 1);
  const std::size_t b = pass_bytes(base, img);
  CHECK(b > base.params().parameter_count() * sizeof(double));
  CHECK(pass_bytes(base, img) == b);
  model::SegNet be(cfg, 1, 0.0, std::make_unique<uq::BatchEnsemble>(4));
  const std::size_t m = pass_bytes(be, img);
  CHECK(m > 4 * b);  // the batch is tiled once per member, plus the scaled copies
  CHECK_THROWS_AS(pass_bytes(base, Tensor({1, 1, 16, 16})), ShapeError);
}

TEST_CASE("report emission") {
  const Report rep = sample_report();
  const fs::path dir = scratch("report");

  SUBCASE("empty method set writes nothing") {
    Report empty;
    CHECK_THROWS_AS(emit_report(empty, dir, ReportFormat::csv), std::invalid_argument);
    CHECK_FALSE(fs::exists(dir));
    CHECK_THROWS_AS(parse_report_format("pdf"), std::invalid_argument);
  }
  SUBCASE("csv round trip") {
    emit_report(rep, dir, ReportFormat::csv);
    std::ifstream in(dir / "summary.csv");
    const auto rows = read_summary_csv(in);
    REQUIRE(rows.size() == rep.summaries.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& a = rows[i];
      const auto& b = rep.summaries[i];
      CHECK(a.method == b.method);
      CHECK(a.split == b.split);
      CHECK(a.n_samples == b.n_samples);
      CHECK(std::abs(a.dsc_mean - b.dsc_mean) <= 1e-9);
      CHECK(std::abs(a.dsc_std - b.dsc_std) <= 1e-9);
      CHECK(std::abs(a.rauc_mean - b.rauc_mean) <= 1e-9);
      CHECK(std::abs(a.rauc_std - b.rauc_std) <= 1e-9);
      REQUIRE(a.pearson_r.has_value() == b.pearson_r.has_value());
      if (a.pearson_r) CHECK(std::abs(*a.pearson_r - *b.pearson_r) <= 1e-9);
    }
    const std::string scal = slurp(dir / "scalability.csv");
    CHECK(scal.rfind("method,train_epochs,train_seconds,inference_seconds,total_params,params_size_mb,pass_size_mb", 0) == 0);
  }
  SUBCASE("svg structure") {
    const auto files = emit_report(rep, dir, ReportFormat::svg);
    CHECK(files.size() == 2);
    std::map<std::string, int> counts;
    const std::string svg = slurp(dir / "retention_test.svg");
    REQUIRE(well_formed(svg, counts));
    CHECK(counts["svg"] == 1);
    CHECK(counts["polyline"] == 2);  // one per method, largest budget only
    CHECK(svg.find("swag (T=30)") != std::string::npos);
    CHECK(svg.find(">fraction<") != std::string::npos);
    CHECK(svg.find(">error<") != std::string::npos);
    std::map<std::string, int> heat;
    REQUIRE(well_formed(slurp(dir / "heatmap_base_a.svg"), heat));
    CHECK(heat["rect"] == 6);
  }
  SUBCASE("json") {
    emit_report(rep, dir, ReportFormat::json);
    const json j = json::parse(slurp(dir / "report.json"));
    CHECK(j.at("summaries").size() == 3);
    CHECK(j.at("summaries")[0].at("pearson_r").is_null());
    CHECK(j.at("scalability")[0].get<ScalabilityRow>().total_params == 1000);
  }
  fs::remove_all(dir);
}

TEST_CASE("kfold run") {
  const fs::path out = scratch("run");
  BenchConfig c = tiny_config(out);
  const auto first = run(c);
  CHECK(first.ok());
  CHECK(first.jobs_run == 6);

  // every image evaluated exactly once per method and budget
  const auto& rep = first.report;
  CHECK(rep.summaries.size() == 3);  // base at 1, mc_dropout at 2 and 3
  for (const auto& s : rep.records) {
    std::set<std::string> ids;
    for (const auto& r : s.records) ids.insert(r.image_id);
    CHECK(s.records.size() == 15);
    CHECK(ids.size() == 15);
  }
  REQUIRE(rep.scalability.size() == 2);
  for (const auto& row : rep.scalability) {
    CHECK(row.train_epochs > 0);
    CHECK(row.total_params > 0);
    CHECK(row.params_size_mb == doctest::Approx(row.total_params * 8 / 1e6));
    CHECK(row.pass_size_mb > 0);
    CHECK(row.train_seconds == 0.0);  // canonical mode
  }
  CHECK(rep.scalability[0].total_params == rep.scalability[1].total_params);

  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("config_hash") == c.hash());
  CHECK(manifest.at("software").at("version") == kSoftwareVersion);
  CHECK(manifest.at("jobs").size() == 6);

  std::map<std::string, std::string> reports;
  for (const auto& e : fs::directory_iterator(out / "report")) reports[e.path().filename().string()] = slurp(e.path());
  CHECK(reports.count("summary.csv"));
  CHECK(reports.count("report.json"));
  CHECK(reports.count("retention_test.svg"));

  SUBCASE("resume skips finished jobs") {
    const auto again = run(c);
    CHECK(again.jobs_skipped == 6);
    CHECK(again.jobs_run == 0);
    for (const auto& [name, text] : reports) CHECK(slurp(out / "report" / name) == text);
  }
  SUBCASE("a fresh run is byte-identical") {
    const fs::path out2 = scratch("run2");
    BenchConfig c2 = c;
    c2.output = out2;
    run(c2);
    for (const auto& [name, text] : reports) CHECK_MESSAGE(slurp(out2 / "report" / name) == text, name);
    fs::remove_all(out2);
  }
  SUBCASE("a different config is refused") {
    BenchConfig other = c;
    other.seeds = {9};
    CHECK_THROWS_AS(run(other), std::invalid_argument);
  }
  SUBCASE("report rebuilt from disk") {
    const BenchConfig stored = config_from_output(out);
    CHECK(stored.hash() == c.hash());
    const Report r = collect_report(stored);
    std::ostringstream a, b;
    write_summary_csv(a, r.summaries);
    write_summary_csv(b, rep.summaries);
    CHECK(a.str() == b.str());
  }
  fs::remove_all(out);
}

TEST_CASE("failing method does not stop the others") {
  const fs::path out = scratch("fail");
  BenchConfig c = tiny_config(out);
  uq::UQMethodSpec bad;
  bad.tag = uq::MethodTag::swa;
  bad.swag.collect_epochs = 2;
  bad.swag.learning_rate = 1e12;  // diverges in the SGD phase
  c.methods.push_back(bad);
  const auto outcome = run(c);
  CHECK_FALSE(outcome.ok());
  CHECK(outcome.jobs_failed == 3);
  CHECK(outcome.jobs_run == 6);
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("failures").size() == 3);
  for (const auto& s : outcome.report.summaries) CHECK(s.method != "swa");
  CHECK(outcome.report.summaries.size() == 3);
  fs::remove_all(out);
}

TEST_CASE("ood run") {
  const fs::path out = scratch("ood");
  BenchConfig c = tiny_config(out);
  c.experiment = Experiment::ood;
  c.dataset.count = 24;
  c.dataset.generator.tumor_probability = 1.0;
  c.dataset.generator.organ_radius = {3, 5};
  const auto outcome = run(c);
  REQUIRE(outcome.ok());
  CHECK(c.holdout_count(24) == 4);
  std::map<std::string, std::size_t> sizes;
  for (const auto& s : outcome.report.summaries) sizes[s.split] = s.n_images;
  CHECK(sizes["ood"] == 4);
  CHECK(sizes["id"] == 4);  // round(0.2 * 20)
  CHECK(outcome.report.ood.size() == 3);
  for (const auto& o : outcome.report.ood) CHECK(o.correlation.n_records == 8);
  CHECK(fs::exists(out / "report" / "ood_correlation.csv"));
  fs::remove_all(out);
}
