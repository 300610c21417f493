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

#include "uqseg/uq/method.hpp"

#include <array>
#include <stdexcept>

#include "uqseg/core/json_keys.hpp"

namespace uqseg::uq {
namespace {

using nlohmann::json;

constexpr std::array<std::pair<MethodTag, const char*>, 10> kTags{{
    {MethodTag::base, "base"},
    {MethodTag::mc_dropout, "mc_dropout"},
    {MethodTag::concrete_dropout, "concrete_dropout"},
    {MethodTag::ensemble, "ensemble"},
    {MethodTag::batch_ensemble, "batch_ensemble"},
    {MethodTag::rank1_bnn, "rank1_bnn"},
    {MethodTag::lp_bnn, "lp_bnn"},
    {MethodTag::swa, "swa"},
    {MethodTag::swag, "swag"},
    {MethodTag::multi_swag, "multi_swag"},
}};

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

MethodTag parse_method_tag(const std::string& tag) {
  for (const auto& [t, name] : kTags)
    if (tag == name) return t;
  throw std::invalid_argument("unknown method tag '" + tag + "'");
}

std::string to_string(MethodTag tag) {
  for (const auto& [t, name] : kTags)
    if (t == tag) return name;
  throw std::logic_error("unnamed method tag");
}

const std::vector<MethodTag>& all_method_tags() {
  static const std::vector<MethodTag> tags = [] {
    std::vector<MethodTag> v;
    for (const auto& [t, _] : kTags) v.push_back(t);
    return v;
  }();
  return tags;
}

bool is_ensemble_family(MethodTag tag) {
  return tag == MethodTag::ensemble || tag == MethodTag::batch_ensemble || tag == MethodTag::rank1_bnn ||
         tag == MethodTag::lp_bnn || tag == MethodTag::multi_swag;
}

void UQMethodSpec::validate() const {
  if (num_samples < 1) throw std::invalid_argument("num_samples must be at least 1");
  if (is_ensemble_family(tag) && num_members < 2) {
    throw std::invalid_argument(to_string(tag) + " needs at least 2 members");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("dropout_p must be in [0, 1)");
  if (!(concrete.temperature > 0.0)) throw std::invalid_argument("concrete temperature must be positive");
  if (!(concrete.lengthscale >= 0.0)) throw std::invalid_argument("concrete lengthscale must be non-negative");
  if (!(concrete.init_p > 0.0 && concrete.init_p < 1.0)) throw std::invalid_argument("concrete init_p must be in (0, 1)");
  if (!(rank1.prior_std > 0.0)) throw std::invalid_argument("rank1 prior_std must be positive");
  if (lpbnn.latent_dim < 1 || lpbnn.hidden < 1) throw std::invalid_argument("lp_bnn sizes must be positive");
  if (!(lpbnn.kl_weight >= 0.0) || !(lpbnn.learning_rate > 0.0)) throw std::invalid_argument("bad lp_bnn optimizer settings");
  if (swag.interval < 1) throw std::invalid_argument("swag interval must be at least 1");
  if (swag.max_rank < 2) throw std::invalid_argument("swag max_rank must be at least 2");
  if (!(swag.scale >= 0.0)) throw std::invalid_argument("swag scale must be non-negative");
  if (!(swag.learning_rate > 0.0)) throw std::invalid_argument("swag learning_rate must be positive");
  const bool swag_family = tag == MethodTag::swa || tag == MethodTag::swag || tag == MethodTag::multi_swag;
  if (swag_family) {
    const std::size_t collected =
        swag.collect_epochs > swag.start_epoch ? (swag.collect_epochs - swag.start_epoch + swag.interval - 1) / swag.interval : 0;
    if (collected < (tag == MethodTag::swa ? 1u : 2u)) {
      throw std::invalid_argument("swag schedule collects " + std::to_string(collected) + " snapshots, too few");
    }
  }
}

void to_json(json& j, const UQMethodSpec& s) {
  j = json{{"tag", to_string(s.tag)},
           {"num_samples", s.num_samples},
           {"num_members", s.num_members},
           {"dropout_p", s.dropout_p},
           {"uncertainty", to_string(s.uncertainty)},
           {"concrete",
            {{"temperature", s.concrete.temperature},
             {"lengthscale", s.concrete.lengthscale},
             {"init_p", s.concrete.init_p}}},
           {"rank1", {{"prior_mean", s.rank1.prior_mean}, {"prior_std", s.rank1.prior_std}}},
           {"lpbnn",
            {{"latent_dim", s.lpbnn.latent_dim},
             {"hidden", s.lpbnn.hidden},
             {"kl_weight", s.lpbnn.kl_weight},
             {"learning_rate", s.lpbnn.learning_rate}}},
           {"swag",
            {{"start_epoch", s.swag.start_epoch},
             {"interval", s.swag.interval},
             {"collect_epochs", s.swag.collect_epochs},
             {"max_rank", s.swag.max_rank},
             {"scale", s.swag.scale},
             {"learning_rate", s.swag.learning_rate},
             {"momentum", s.swag.momentum}}}};
}

void from_json(const json& j, UQMethodSpec& s) {
  check_keys(j, {"tag", "num_samples", "num_members", "dropout_p", "uncertainty", "concrete", "rank1", "lpbnn", "swag"},
             "method spec");
  s = UQMethodSpec{};
  s.tag = parse_method_tag(j.at("tag").get<std::string>());
  read(j, "num_samples", s.num_samples);
  read(j, "num_members", s.num_members);
  read(j, "dropout_p", s.dropout_p);
  if (j.contains("uncertainty")) s.uncertainty = parse_uncertainty_mode(j.at("uncertainty").get<std::string>());
  if (j.contains("concrete")) {
    const auto& c = j.at("concrete");
    check_keys(c, {"temperature", "lengthscale", "init_p"}, "concrete spec");
    read(c, "temperature", s.concrete.temperature);
    read(c, "lengthscale", s.concrete.lengthscale);
    read(c, "init_p", s.concrete.init_p);
  }
  if (j.contains("rank1")) {
    const auto& r = j.at("rank1");
    check_keys(r, {"prior_mean", "prior_std"}, "rank1 spec");
    read(r, "prior_mean", s.rank1.prior_mean);
    read(r, "prior_std", s.rank1.prior_std);
  }
  if (j.contains("lpbnn")) {
    const auto& l = j.at("lpbnn");
    check_keys(l, {"latent_dim", "hidden", "kl_weight", "learning_rate"}, "lpbnn spec");
    read(l, "latent_dim", s.lpbnn.latent_dim);
    read(l, "hidden", s.lpbnn.hidden);
    read(l, "kl_weight", s.lpbnn.kl_weight);
    read(l, "learning_rate", s.lpbnn.learning_rate);
  }
  if (j.contains("swag")) {
    const auto& w = j.at("swag");
    check_keys(w, {"start_epoch", "interval", "collect_epochs", "max_rank", "scale", "learning_rate", "momentum"},
               "swag spec");
    read(w, "start_epoch", s.swag.start_epoch);
    read(w, "interval", s.swag.interval);
    read(w, "collect_epochs", s.swag.collect_epochs);
    read(w, "max_rank", s.swag.max_rank);
    read(w, "scale", s.swag.scale);
    read(w, "learning_rate", s.swag.learning_rate);
    read(w, "momentum", s.swag.momentum);
  }
  s.validate();
}

}  // namespace uqseg::uq
