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

#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "uqseg/core/grad_check.hpp"
#include "uqseg/data/dataset.hpp"
#include "uqseg/model/loss.hpp"
#include "uqseg/uq/aggregate.hpp"
#include "uqseg/uq/concrete.hpp"
#include "uqseg/uq/lpbnn.hpp"
#include "uqseg/uq/methods.hpp"
#include "uqseg/uq/rank1.hpp"
#include "uqseg/uq/swag.hpp"

using namespace uqseg;
using namespace uqseg::uq;
using model::ForwardContext;
using model::SegNet;

namespace {

model::UNetConfig tiny_config() {
  model::UNetConfig c;
  c.encoder_channels = {4, 8};
  c.residual_units_per_level = 1;
  return c;
}

model::SplitDataset tiny_split(std::uint64_t seed = 1) {
  data::SynthConfig sc;
  sc.image_size = 16;
  sc.organ_radius = {3, 6};
  sc.tumor_radius = {1, 2};
  const auto ds = data::synth_generate(8, sc, seed);
  model::SplitDataset s;
  for (std::size_t i = 0; i < 8; ++i) (i < 6 ? s.train : s.val).push_back(ds.images[i]);
  return s;
}

model::TrainConfig quick_train() {
  model::TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 3;
  return tc;
}

/// Two-class probability map [2, 1, n] with foreground probabilities `fg`.
Tensor two_class(const std::vector<double>& fg) {
  std::vector<double> v;
  for (double f : fg) v.push_back(1.0 - f);
  v.insert(v.end(), fg.begin(), fg.end());
  return Tensor({2, 1, fg.size()}, std::move(v));
}

Tensor random_probs(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> v(c * h * w);
  for (auto& x : v) x = rng.uniform(0.05, 1.0);
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += v[k * h * w + i];
    for (std::size_t k = 0; k < c; ++k) v[k * h * w + i] /= s;
  }
  return Tensor({c, h, w}, std::move(v));
}

UQMethodSpec small_spec(MethodTag tag) {
  UQMethodSpec s;
  s.tag = tag;
  s.num_samples = 3;
  s.num_members = 2;
  s.lpbnn.latent_dim = 2;
  s.lpbnn.hidden = 8;
  s.swag.collect_epochs = 3;
  s.swag.max_rank = 2;
  return s;
}

void check_result_invariants(const PredictiveResult& r) {
  const std::size_t c = r.mean_probs.dim(0), plane = r.mean_probs.dim(1) * r.mean_probs.dim(2);
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += r.mean_probs[k * plane + i];
    REQUIRE(std::abs(s - 1.0) <= 1e-6);
    REQUIRE(r.uncertainty_map[i] >= 0.0);
  }
  if (r.samples.empty()) return;
  for (std::size_t i = 0; i < c * plane; ++i) {
    double m = 0;
    for (const auto& s : r.samples) m += s[i];
    REQUIRE(std::abs(m / static_cast<double>(r.samples.size()) - r.mean_probs[i]) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("base_uq") {
  const Tensor u = base_uq(two_class({0.5, 0.0, 0.2}));
  CHECK(u[0] == 0.5);
  CHECK(u[1] == 0.0);
  CHECK(u[2] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(base_uq(Tensor({2, 3})), ShapeError);
}

TEST_CASE("aggregate_samples") {
  SUBCASE("identical samples have no spread") {
    Rng rng(1, 0);
    const Tensor p = random_probs(3, 4, 5, rng);
    const auto a = aggregate_samples({p, p.clone(), p.clone()});
    for (double v : a.uncertainty.data()) CHECK(v <= 1e-15);
    CHECK(testing::max_abs_diff(a.mean_probs.data(), p.data()) <= 1e-15);
  }
  SUBCASE("two opposite samples") {
    const auto a = aggregate_samples({two_class({0.0, 0.3}), two_class({1.0, 0.3})});
    CHECK(a.uncertainty[0] == 0.5);
    CHECK(a.uncertainty[1] == 0.0);
    CHECK(a.mean_probs[2] == 0.5);
  }
  SUBCASE("matches a two-pass oracle") {
    Rng rng(2, 0);
    std::vector<Tensor> s;
    for (int t = 0; t < 5; ++t) s.push_back(random_probs(3, 4, 6, rng));
    const auto a = aggregate_samples(s);
    const auto e = aggregate_samples(s, UncertaintyMode::entropy);
    const std::size_t plane = 24;
    for (std::size_t i = 0; i < plane; ++i) {
      double mean_fg = 0;
      for (const auto& x : s) mean_fg += 1.0 - x[i];
      mean_fg /= 5;
      double var = 0;
      for (const auto& x : s) var += (1.0 - x[i] - mean_fg) * (1.0 - x[i] - mean_fg);
      CHECK(std::abs(a.uncertainty[i] - std::sqrt(var / 5)) < 1e-12);

      double h = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        double m = 0;
        for (const auto& x : s) m += x[k * plane + i];
        m /= 5;
        CHECK(std::abs(a.mean_probs[k * plane + i] - m) < 1e-12);
        h -= m * std::log(m);
      }
      CHECK(std::abs(e.uncertainty[i] - h) < 1e-12);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(aggregate_samples({}), std::invalid_argument);
    Rng rng(3, 0);
    CHECK_THROWS_AS(aggregate_samples({random_probs(2, 2, 2, rng), random_probs(2, 2, 3, rng)}), ShapeError);
    CHECK_THROWS_AS(parse_uncertainty_mode("variance"), std::invalid_argument);
  }
}

TEST_CASE("method spec") {
  UQMethodSpec s;
  s.tag = MethodTag::ensemble;
  s.num_members = 1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.num_members = 4;
  s.dropout_p = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.dropout_p = 0.1;
  s.num_samples = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.num_samples = 30;
  s.validate();

  for (MethodTag tag : all_method_tags()) {
    UQMethodSpec t = small_spec(tag);
    t.uncertainty = UncertaintyMode::entropy;
    const nlohmann::json j = t;
    const nlohmann::json back = j.get<UQMethodSpec>();
    CHECK(back == j);
    CHECK(parse_method_tag(to_string(tag)) == tag);
  }
  CHECK_THROWS_AS(nlohmann::json({{"tag", "swag"}, {"swag", {{"rank", 3}}}}).get<UQMethodSpec>(), std::invalid_argument);
  CHECK_THROWS_AS(parse_method_tag("mcmc"), std::invalid_argument);
  CHECK(nlohmann::json({{"tag", "concrete_dropout"}}).get<UQMethodSpec>().concrete.temperature == 0.1);
}

TEST_CASE("MC dropout") {
  SegNet net(tiny_config(), 3);
  Rng img_rng(5, 0);
  const Tensor img = testing::random_tensor({1, 16, 16}, img_rng, 0, 1);
  MethodArtifacts a;
  a.spec.tag = MethodTag::mc_dropout;
  a.spec.num_samples = 4;
  a.members.push_back(model::Checkpoint::capture(net));

  SUBCASE("p = 0 reproduces the deterministic forward") {
    a.spec.dropout_p = 0.0;
    Rng rng(1, 0);
    const auto r = predict(a, img, rng);
    const Tensor det = net.predict_probs(img, {});
    REQUIRE(r.samples.size() == 4);
    for (const auto& s : r.samples) CHECK(s.values() == det.values());
    for (double v : r.uncertainty_map.data()) CHECK(v == 0.0);
  }
  SUBCASE("one sample has zero spread") {
    a.spec.num_samples = 1;
    Rng rng(1, 0);
    const auto r = predict(a, img, rng);
    for (double v : r.uncertainty_map.data()) CHECK(v == 0.0);
  }
  SUBCASE("fixed seed reproduces the result") {
    Rng r1(9, 2), r2(9, 2), r3(10, 2);
    const auto x = predict(a, img, r1), y = predict(a, img, r2), z = predict(a, img, r3);
    CHECK(x.mean_probs.values() == y.mean_probs.values());
    CHECK(x.uncertainty_map.values() == y.uncertainty_map.values());
    CHECK(x.mean_probs.values() != z.mean_probs.values());
    check_result_invariants(x);
    bool spread = false;
    for (double v : x.uncertainty_map.data()) spread |= v > 0;
    CHECK(spread);
  }
  SUBCASE("p >= 1 is rejected") {
    Rng rng(1, 0);
    CHECK_THROWS_AS(model::dropout(img, 1.0, rng), std::invalid_argument);
  }
}

TEST_CASE("concrete relaxation") {
  CHECK(concrete_relaxation(0.0, 0.5, 0.1) == 0.5);
  for (double u : {0.0011, 0.1, 0.5, 0.9, 0.9989}) CHECK(concrete_relaxation(-20.0, u, 0.1) > 1.0 - 1e-12);

  // p = 0.3, t = 0.1: the mean keep value approaches 1 - p
  Rng rng(7, 0);
  const double logit = std::log(0.3 / 0.7);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += concrete_relaxation(logit, rng.uniform(), 0.1);
  CHECK(std::abs(sum / 100000 - 0.700) < 0.01);
}

TEST_CASE("concrete dropout op") {
  Rng data_rng(3, 0);
  const Tensor x = testing::random_tensor({2, 3, 4, 4}, data_rng);
  const Tensor logit({1}, std::log(0.2 / 0.8));
  const double err = grad_check(
      [](const std::vector<Tensor>& in) {
        Rng rng(11, 0);  // same masks on every evaluation
        return testing::weighted_sum(concrete_dropout(in[0], in[1], 0.1, rng));
      },
      {x, logit});
  CHECK(err < 1e-4);

  // the mask values match the scalar relaxation on the same uniforms
  Rng a(4, 0), b(4, 0);
  const Tensor y = concrete_dropout(Tensor({1, 1, 2, 3}, 1.0), Tensor({1}, 0.4), 0.1, a);
  const double scale = 1 + std::exp(0.4);
  for (std::size_t i = 0; i < 6; ++i) CHECK(y[i] == doctest::Approx(concrete_relaxation(0.4, b.uniform(), 0.1) * scale));
}

TEST_CASE("concrete regularizer") {
  const std::size_t n = 50;
  ConcreteLayer zero{Tensor({3, 2, 3, 3}), Tensor({1}, 0.0), 2};
  const double value = concrete_regularizer({zero}, 1e-2, n).item();
  CHECK(value == doctest::Approx(2 * -std::log(2.0) / n).epsilon(1e-14));
  CHECK(value < 0);

  Rng rng(2, 0);
  ConcreteLayer a{testing::random_tensor({3, 2, 3, 3}, rng), Tensor({1}, -1.3), 2};
  ConcreteLayer b{testing::random_tensor({4, 3, 1, 1}, rng), Tensor({1}, 0.7), 3};
  // with W = 0 only the entropy term remains: K/N (p ln p + (1-p) ln(1-p))
  const double p = 1 / (1 + std::exp(1.3));
  const double expected = 0.5 * 0.5 * (1 - p) / (2.0 * n) * std::inner_product(a.weight.data().begin(), a.weight.data().end(), a.weight.data().begin(), 0.0) +
                          2.0 / n * (p * std::log(p) + (1 - p) * std::log(1 - p));
  CHECK(concrete_regularizer({a}, 0.5, n).item() == doctest::Approx(expected).epsilon(1e-12));
  const double err = grad_check(
      [&](const std::vector<Tensor>& in) {
        return concrete_regularizer({{in[0], in[1], 2}, {in[2], in[3], 3}}, 0.5, n);
      },
      {a.weight, a.p_logit, b.weight, b.p_logit});
  CHECK(err < 1e-4);
}

TEST_CASE("concrete dropout network") {
  const auto split = tiny_split();
  SegNet net(tiny_config(), 2, 0.0, std::make_unique<ConcreteDropout>(ConcreteSpec{}));
  auto* ext = dynamic_cast<ConcreteDropout*>(net.extension());
  REQUIRE(ext);
  CHECK(ext->dropout_probabilities().size() == net.unet().unit_sites().size());
  for (const auto& [name, p] : ext->dropout_probabilities()) CHECK(p == doctest::Approx(0.1));

  model::TrainConfig tc = quick_train();
  tc.max_epochs = 4;
  tc.learning_rate = 0.05;  // large steps move the logits quickly
  model::train(net, split, tc);
  bool moved = false;
  for (const auto& [name, p] : ext->dropout_probabilities()) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    moved |= std::abs(p - 0.1) > 1e-3;
  }
  CHECK(moved);

  // deterministic passes do not drop anything
  Rng rng(1, 0);
  const Tensor img = split.val[0].image;
  CHECK(net.predict_probs(img, {}).values() == net.predict_mean_probs(img).values());
}

TEST_CASE("deep ensemble") {
  const auto split = tiny_split();
  const auto tc = quick_train();
  const auto one = train_ensemble(tiny_config(), split, tc, 1, 40);
  const auto base = train_method(small_spec(MethodTag::base), tiny_config(), split, tc, 40);
  CHECK(one.front().best.serialize() == base.members.front().serialize());

  UQMethodSpec spec = small_spec(MethodTag::ensemble);
  spec.num_members = 3;
  TrainCache cache;
  const auto ens = train_method(spec, tiny_config(), split, tc, 40, &cache);
  REQUIRE(ens.members.size() == 3);
  CHECK(ens.member_seeds == std::vector<std::uint64_t>{40, 41, 42});
  CHECK(ens.members[0].serialize() == base.members[0].serialize());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) CHECK(ens.members[i].serialize() != ens.members[j].serialize());
  CHECK(cache.size() == 3);

  std::size_t total = 0;
  for (const auto& c : ens.members) total += model::load_segnet(c, nullptr)->params().parameter_count();
  CHECK(total == 3 * SegNet(tiny_config(), 0).params().parameter_count());

  // the cache hands back the same runs
  const auto again = train_method(spec, tiny_config(), split, tc, 40, &cache);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again.members[i].serialize() == ens.members[i].serialize());
}

TEST_CASE("batch ensemble") {
  const auto cfg = tiny_config();
  Rng rng(6, 0);
  const Tensor x = testing::random_tensor({3, 1, 8, 8}, rng);

  SUBCASE("unit fast weights reproduce the shared network") {
    SegNet plain(cfg, 12);
    SegNet be(cfg, 12, 0.0, std::make_unique<BatchEnsemble>(4));
    for (auto& e : be.params().entries()) {
      if (e.name.rfind("batch_ensemble.", 0) == 0) {
        for (auto& v : Tensor(e.tensor).mutable_data()) v = 1.0;
      }
    }
    NoGradGuard ng;
    for (bool training : {false, true}) {
      ForwardContext c;
      c.training = training;
      ForwardContext cm = c;
      cm.members = {3, 0, 2};
      const Tensor a = plain.forward(x, c);
      const Tensor b = be.forward(x, cm);
      CHECK(testing::max_abs_diff(a.data(), b.data()) <= 1e-6);
    }
  }
  SUBCASE("scaling r doubles a linear layer") {
    SegNet be(cfg, 12, 0.0, std::make_unique<BatchEnsemble>(2));
    auto* ext = dynamic_cast<BatchEnsemble*>(be.extension());
    const std::size_t head = be.unet().conv_layers().size() - 1;
    REQUIRE(be.unet().conv_layers()[head].name == "head");
    const Tensor bias = be.params().get("head.bias");
    ForwardContext ctx;
    ctx.members = {1, 1, 1};
    NoGradGuard ng;
    const Tensor before = be.forward(x, ctx);
    Tensor r = ext->r(head);
    for (std::size_t c = 0; c < r.dim(1); ++c) r.mutable_data()[r.dim(1) + c] *= 2.0;
    const Tensor after = be.forward(x, ctx);
    const std::size_t plane = 64;
    for (std::size_t i = 0; i < after.numel(); ++i) {
      const double b = bias[(i / plane) % 2];
      CHECK(after[i] - b == doctest::Approx(2.0 * (before[i] - b)).epsilon(1e-12));
    }
  }
  SUBCASE("member index out of range") {
    SegNet be(cfg, 12, 0.0, std::make_unique<BatchEnsemble>(2));
    ForwardContext ctx;
    ctx.members = {0, 2, 1};
    CHECK_THROWS_AS(be.forward(x, ctx), std::out_of_range);
  }
  SUBCASE("parameter overhead stays small") {
    const std::size_t base = SegNet(model::UNetConfig{}, 0).params().parameter_count();
    const std::size_t with = SegNet(model::UNetConfig{}, 0, 0.0, std::make_unique<BatchEnsemble>(4)).params().parameter_count();
    CHECK(static_cast<double>(with) / static_cast<double>(base) < 1.05);
    CHECK(with > base);
  }
}

TEST_CASE("Gaussian KL") {
  CHECK(gaussian_kl(Tensor({2, 3}, 1.0), Tensor({2, 3}, std::log(0.1)), 1.0, 0.1).item() == 0.0);
  CHECK(gaussian_kl(Tensor({1}, 0.0), Tensor({1}, 0.0), 1.0, 1.0).item() == 0.5);

  Rng rng(3, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor m = testing::random_tensor({2, 2}, rng, -1, 3);
    const Tensor s = testing::random_tensor({2, 2}, rng, -3, 1);
    CHECK(gaussian_kl(m, s, 1.0, 0.1).item() >= 0.0);
  }

  // Monte-Carlo estimate of E_q[ln q - ln p]
  const double mu = 0.7, sigma = 0.3, mu0 = 1.0, sigma0 = 0.5;
  Rng mc(8, 1);
  double acc = 0;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) {
    const double w = mc.normal(mu, sigma);
    const double lq = -std::log(sigma) - 0.5 * std::pow((w - mu) / sigma, 2);
    const double lp = -std::log(sigma0) - 0.5 * std::pow((w - mu0) / sigma0, 2);
    acc += lq - lp;
  }
  const double kl = gaussian_kl(Tensor({1}, mu), Tensor({1}, std::log(sigma)), mu0, sigma0).item();
  CHECK(std::abs(acc / draws - kl) < 0.01 * kl);
}

TEST_CASE("rank-1 BNN") {
  const auto cfg = tiny_config();
  Rank1Spec prior;
  SegNet net(cfg, 5, 0.0, std::make_unique<Rank1Bnn>(2, prior));
  auto* ext = dynamic_cast<Rank1Bnn*>(net.extension());
  REQUIRE(ext);
  CHECK(ext->kl().item() > 0.0);

  Rng rng(2, 0);
  const Tensor x = testing::random_tensor({2, 1, 4, 4}, rng);
  std::vector<double> lab(32);
  for (auto& v : lab) v = static_cast<double>(rng.below(2));
  const Tensor labels({2, 4, 4}, lab);
  const std::size_t n_train = 7;
  const auto objective = [&] {
    Rng noise(17, 3);  // identical weight noise on every evaluation
    const auto t = rank1_elbo_terms(net, x, labels, noise);
    return t.nll + t.kl * (1.0 / n_train);
  };
  for (const char* name : {"rank1.enc1.down.conv.r.mean", "rank1.enc1.down.conv.r.logstd", "rank1.head.s.logstd",
                           "rank1.dec0.up.conv.s.mean", "enc0.unit0.a.conv.weight"}) {
    const Tensor p = net.params().get(name);
    CHECK_MESSAGE(testing::param_fd_check(objective, p, 1 + p.numel() / 6) < 1e-4, name);
  }

  // posterior at the prior: zero KL
  for (auto& e : net.params().entries()) {
    Tensor t = e.tensor;
    if (e.name.find(".mean") != std::string::npos && e.name.rfind("rank1.", 0) == 0)
      for (auto& v : t.mutable_data()) v = prior.prior_mean;
    if (e.name.find(".logstd") != std::string::npos)
      for (auto& v : t.mutable_data()) v = std::log(prior.prior_std);
  }
  CHECK(ext->kl().item() == 0.0);

  // deterministic passes use the means; stochastic passes differ
  Rng ra(1, 0), rb(1, 0);
  ForwardContext st;
  st.stochastic = true;
  st.rng = &ra;
  const Tensor img = x.detach();
  const Tensor probe = reshape(img, {2, 1, 4, 4});
  NoGradGuard ng;
  const Tensor det1 = net.forward(probe, {});
  const Tensor det2 = net.forward(probe, {});
  CHECK(det1.values() == det2.values());
  CHECK(net.forward(probe, st).values() != det1.values());
}

TEST_CASE("layer VAE") {
  LpbnnSpec spec;
  spec.latent_dim = 2;
  spec.hidden = 16;
  spec.kl_weight = 1e-3;
  model::ParameterStore store;
  Rng rng(4, 0);
  CHECK_THROWS_AS(LayerVae("bad", 2, spec, store, rng), std::invalid_argument);

  LayerVae vae("vae", 6, spec, store, rng);
  const Tensor toy({2, 6}, std::vector<double>{1.2, 0.8, 1.0, 0.6, 1.4, 1.1, 0.7, 1.3, 0.9, 1.5, 0.5, 1.0});
  for (int i = 0; i < 10; ++i) CHECK(vae.loss(toy, rng).kl.item() >= 0.0);
  fit_layer_vae(vae, toy, 3000, 1e-2, rng);
  NoGradGuard ng;
  const Tensor recon = vae.decode(vae.encode(toy).mean);
  double mse = 0;
  for (std::size_t i = 0; i < 12; ++i) mse += std::pow(recon[i] - toy[i], 2);
  CHECK(mse / 12 < 1e-2);
  for (int i = 0; i < 10; ++i) CHECK(vae.loss(toy, rng).kl.item() >= 0.0);

  const Tensor z = testing::random_tensor({3, 2}, rng);
  CHECK(vae.decode(z).values() == vae.decode(z.clone()).values());
  const Tensor s1 = vae.sample(toy, rng), s2 = vae.sample(toy, rng);
  CHECK(s1.shape() == Shape{2, 6});
  CHECK(s1.values() != s2.values());
}

TEST_CASE("LP-BNN network") {
  const auto split = tiny_split();
  LpbnnSpec spec;
  spec.latent_dim = 3;
  spec.hidden = 8;
  SegNet net(tiny_config(), 8, 0.0, std::make_unique<LpBnn>(2, spec));
  auto* ext = dynamic_cast<LpBnn*>(net.extension());
  REQUIRE(ext);
  std::size_t with_vae = 0;
  for (std::size_t i = 0; i < net.unet().conv_layers().size(); ++i) {
    const auto& info = net.unet().conv_layers()[i];
    CHECK((ext->vae(i) != nullptr) == (info.out_channels > 3));
    with_vae += ext->vae(i) != nullptr;
  }
  CHECK(with_vae > 0);
  for (const auto& t : net.network_parameters()) CHECK(t.numel() > 0);
  for (const auto& e : net.params().entries()) {
    CHECK(ext->is_network_parameter(e.name) == (e.name.find(".vae.") == std::string::npos));
  }

  // VAE weights move only through their own optimizer
  const Tensor vae_w = net.params().get("lp_bnn.enc1.unit0.b.conv.vae.dec_out.weight");
  const auto before = vae_w.values();
  auto tc = quick_train();
  tc.max_epochs = 1;
  tc.batch_size = 6;  // one network step, one VAE step
  model::train(net, split, tc);
  CHECK(vae_w.values() != before);
  CHECK(std::isfinite(ext->last_vae_loss()));
}

TEST_CASE("SWA running mean") {
  SwagStats s(3, 4);
  CHECK_THROWS_AS(s.swa_mean(), std::logic_error);
  CHECK_THROWS_AS(s.update({1, 2}), std::invalid_argument);
  const WeightVector w{0.3, -1.7, 2.9};
  for (int i = 0; i < 5; ++i) s.update(w);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s.swa_mean()[i] - w[i]) <= 1e-12);

  SwagStats t(3, 4);
  t.update(w);
  t.update({-0.3, 1.7, -2.9});
  for (double v : t.swa_mean()) CHECK(v == 0.0);

  Rng rng(2, 0);
  SwagStats u(4, 3);
  std::vector<WeightVector> snaps;
  for (int k = 0; k < 7; ++k) {
    WeightVector v(4);
    for (auto& x : v) x = rng.uniform(-5, 5);
    snaps.push_back(v);
    u.update(v);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0;
    for (const auto& v : snaps) sum += v[i];
    CHECK(std::abs(u.swa_mean()[i] - sum / 7) <= 1e-12);
  }
  CHECK(u.deviations().size() == 3);
  CHECK(u.count() == 7);

  const auto back = SwagStats::from_checkpoint(model::Checkpoint::deserialize(u.to_checkpoint().serialize()));
  CHECK(back.mean() == u.mean());
  CHECK(back.second_moment() == u.second_moment());
  CHECK(back.deviations() == u.deviations());
  CHECK(back.count() == 7);
}

TEST_CASE("SWAG posterior") {
  SUBCASE("degenerate cases") {
    SwagStats one(2, 3);
    one.update({1, 2});
    CHECK_THROWS_AS(SwagPosterior::fit(one), std::logic_error);

    SwagStats flat(3, 3);
    for (int i = 0; i < 4; ++i) flat.update({1.5, -2.0, 0.25});
    const auto p = SwagPosterior::fit(flat);
    for (double v : flat.diag_variance()) CHECK(v == 0.0);
    for (const auto& col : flat.deviations())
      for (double v : col) CHECK(v == 0.0);
    Rng rng(1, 0);
    const auto w = p.sample(1.0, rng);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(w[i] - p.mean()[i]) <= 1e-12);
  }
  SUBCASE("scale zero returns the mean") {
    Rng rng(3, 0);
    SwagStats s(5, 3);
    for (int k = 0; k < 6; ++k) {
      WeightVector v(5);
      for (auto& x : v) x = rng.normal();
      s.update(v);
    }
    CHECK(SwagPosterior::fit(s).sample(0.0, rng) == s.swa_mean());
  }
  SUBCASE("sample moments match the closed form") {
    Rng rng(4, 0);
    SwagStats s(6, 4);
    for (int k = 0; k < 9; ++k) {
      WeightVector v(6);
      for (std::size_t i = 0; i < 6; ++i) v[i] = rng.normal(static_cast<double>(i), 0.5 + 0.2 * static_cast<double>(i));
      s.update(v);
    }
    const auto p = SwagPosterior::fit(s);
    const auto var = p.marginal_variance();
    std::vector<double> m1(6, 0), m2(6, 0);
    const int n = 10000;
    Rng draw(5, 0);
    for (int t = 0; t < n; ++t) {
      const auto w = p.sample(1.0, draw);
      for (std::size_t i = 0; i < 6; ++i) {
        m1[i] += w[i];
        m2[i] += w[i] * w[i];
      }
    }
    for (std::size_t i = 0; i < 6; ++i) {
      const double mean = m1[i] / n, v = m2[i] / n - mean * mean;
      CHECK(std::abs(mean - p.mean()[i]) <= 0.05 * std::max(std::abs(p.mean()[i]), std::sqrt(var[i])));
      CHECK(std::abs(v - var[i]) <= 0.05 * var[i]);
    }
  }
}

TEST_CASE("SWAG covariance") {
  // strongly correlated snapshots: w = a * (1, 2, -1) + small noise
  Rng rng(6, 0);
  SwagStats s(3, 5);
  std::vector<WeightVector> snaps;
  for (int k = 0; k < 12; ++k) {
    const double a = rng.normal();
    WeightVector v{a + 0.1 * rng.normal(), 2 * a + 0.1 * rng.normal(), -a + 0.1 * rng.normal()};
    snaps.push_back(v);
    s.update(v);
  }
  const auto p = SwagPosterior::fit(s);

  // oracle rebuilt from the raw snapshots: diagonal from the full history,
  // low-rank part from the last five snapshots minus the running mean
  std::vector<double> mean(3, 0), sq(3, 0);
  std::vector<std::vector<double>> dev;
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    for (std::size_t i = 0; i < 3; ++i) {
      mean[i] += (snaps[k][i] - mean[i]) / static_cast<double>(k + 1);
      sq[i] += (snaps[k][i] * snaps[k][i] - sq[i]) / static_cast<double>(k + 1);
    }
    if (k >= snaps.size() - 5) dev.push_back({snaps[k][0] - mean[0], snaps[k][1] - mean[1], snaps[k][2] - mean[2]});
  }
  std::vector<double> oracle(9, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    oracle[i * 3 + i] += 0.5 * (sq[i] - mean[i] * mean[i]);
    for (std::size_t j = 0; j < 3; ++j)
      for (const auto& d : dev) oracle[i * 3 + j] += d[i] * d[j] / (2.0 * 4);
  }
  const auto cov = p.covariance();
  for (std::size_t i = 0; i < 9; ++i) CHECK(cov[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
  CHECK(oracle[1] / std::sqrt(oracle[0] * oracle[4]) > 0.3);  // the diagonal half dilutes it

  const int n = 100000;
  std::vector<double> m(3, 0), c(9, 0);
  Rng draw(7, 0);
  std::vector<WeightVector> ws;
  for (int t = 0; t < n; ++t) ws.push_back(p.sample(1.0, draw));
  for (const auto& w : ws)
    for (std::size_t i = 0; i < 3; ++i) m[i] += w[i] / n;
  for (const auto& w : ws)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) c[i * 3 + j] += (w[i] - m[i]) * (w[j] - m[j]) / n;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::abs(c[i * 3 + j] - oracle[i * 3 + j]) <= 0.05 * std::sqrt(oracle[i * 3 + i] * oracle[j * 3 + j]));
}

TEST_CASE("SWAG collection schedule") {
  const auto split = tiny_split();
  auto tc = quick_train();
  const auto first = model::train(*std::make_unique<SegNet>(tiny_config(), 1), split, tc);
  SwagSpec spec;
  spec.collect_epochs = 5;
  spec.start_epoch = 1;
  spec.interval = 2;
  spec.max_rank = 2;
  auto net = model::load_segnet(first.best, nullptr);
  const auto run = collect_swag(*net, first.best, split, tc, spec);
  CHECK(run.history.epochs.size() == 5);
  CHECK(run.stats.count() == 2);  // epochs 1 and 3
  CHECK(run.stats.dim() == net->params().parameter_count());
  CHECK_FALSE(run.history.early_stopped);
}

TEST_CASE("every method trains, predicts and round-trips") {
  const auto split = tiny_split(3);
  const auto tc = quick_train();
  const Tensor img = split.val[0].image;
  TrainCache cache;
  const auto dir = std::filesystem::temp_directory_path() / "uqseg_test_methods";
  std::filesystem::remove_all(dir);

  for (MethodTag tag : all_method_tags()) {
    CAPTURE(to_string(tag));
    const UQMethodSpec spec = small_spec(tag);
    const auto art = train_method(spec, tiny_config(), split, tc, 70, &cache);
    std::vector<std::string> before;
    for (const auto& c : art.members) before.push_back(c.serialize());

    Predictor p1(art, split.train), p2(art, split.train);
    Rng r1(5, 1), r2(5, 1);
    const auto a = p1.predict(img, r1);
    const auto b = p2.predict(img, r2);
    check_result_invariants(a);
    CHECK(a.method == to_string(tag));
    CHECK(a.mean_probs.values() == b.mean_probs.values());
    CHECK(a.uncertainty_map.values() == b.uncertainty_map.values());
    CHECK(a.samples.size() == (tag == MethodTag::base || tag == MethodTag::swa ? 0 : p1.passes()));
    CHECK(a.inference_seconds >= 0.0);
    for (std::size_t i = 0; i < art.members.size(); ++i) CHECK(art.members[i].serialize() == before[i]);

    const auto sub = dir / to_string(tag);
    art.save(sub);
    const auto loaded = MethodArtifacts::load(sub);
    CHECK(loaded.manifest().dump() == art.manifest().dump());
    for (std::size_t i = 0; i < art.members.size(); ++i) CHECK(loaded.members[i].serialize() == before[i]);
    Predictor p3(loaded, split.train);
    Rng r3(5, 1);
    CHECK(p3.predict(img, r3).mean_probs.values() == a.mean_probs.values());

    if (tag == MethodTag::lp_bnn) CHECK(std::filesystem::exists(sub / "vae_layer_enc0.unit0.a.conv.ckpt"));
    if (tag == MethodTag::swag) CHECK(std::filesystem::exists(sub / "swag_stats.bin"));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("prediction bookkeeping") {
  const auto split = tiny_split(4);
  const auto tc = quick_train();
  const Tensor img = split.val[0].image;
  TrainCache cache;

  SUBCASE("base uses the confidence map") {
    const auto art = train_method(small_spec(MethodTag::base), tiny_config(), split, tc, 3, &cache);
    Rng rng(1, 0);
    const auto r = predict(art, img, rng);
    CHECK(r.samples.empty());
    CHECK(r.uncertainty_map.values() == base_uq(r.mean_probs).values());
  }
  SUBCASE("ensemble of four gives four samples") {
    UQMethodSpec spec = small_spec(MethodTag::ensemble);
    spec.num_members = 4;
    const auto art = train_method(spec, tiny_config(), split, tc, 3, &cache);
    Rng rng(1, 0);
    CHECK(predict(art, img, rng).samples.size() == 4);
  }
  SUBCASE("Multi-SWAG pools ceil(T / M) samples per member") {
    UQMethodSpec spec = small_spec(MethodTag::multi_swag);
    spec.num_members = 2;
    spec.num_samples = 5;
    const auto art = train_method(spec, tiny_config(), split, tc, 3, &cache);
    Predictor p(art, split.train);
    CHECK(p.passes() == 6);

    // a single member reproduces SWAG with the same seed
    UQMethodSpec swag_spec = spec;
    swag_spec.tag = MethodTag::swag;
    const auto swag = train_method(swag_spec, tiny_config(), split, tc, 3, &cache);
    MethodArtifacts single = art;
    single.spec.num_members = 1;
    single.members.resize(1);
    single.swag.resize(1, art.swag[0]);
    single.spec.num_samples = 5;
    Predictor ps(swag, split.train), pm(single, split.train);
    Rng r1(2, 0), r2(2, 0);
    const auto a = ps.predict(img, r1), b = pm.predict(img, r2);
    CHECK(a.samples.size() == 5);
    CHECK(a.mean_probs.values() == b.mean_probs.values());

    // identical posteriors at scale 0: every sample is the SWA mean
    MethodArtifacts same = art;
    same.members = {art.members[0], art.members[0]};
    same.swag = {art.swag[0], art.swag[0]};
    same.spec.swag.scale = 0.0;
    MethodArtifacts swa = swag;
    swa.spec.tag = MethodTag::swa;
    Predictor pz(same, split.train), pa(swa, split.train);
    Rng r3(2, 0), r4(2, 0);
    const auto z = pz.predict(img, r3);
    const auto mean = pa.predict(img, r4);
    for (const auto& s : z.samples) CHECK(testing::max_abs_diff(s.data(), mean.mean_probs.data()) <= 1e-12);
  }
  SUBCASE("artifacts must fit the method") {
    auto art = train_method(small_spec(MethodTag::base), tiny_config(), split, tc, 3, &cache);
    art.spec.tag = MethodTag::batch_ensemble;
    CHECK_THROWS_AS(Predictor(art, split.train).predict(img, *std::make_unique<Rng>(1, 0)), std::invalid_argument);
    art.spec.tag = MethodTag::swag;
    CHECK_THROWS_AS(Predictor(art, split.train), std::invalid_argument);
  }
}
