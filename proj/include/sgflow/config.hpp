// Copyright 2026 The sgflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SGFLOW_CONFIG_HPP
#define SGFLOW_CONFIG_HPP

// Experiment configuration. Parsing is strict: unknown keys and wrongly
// typed values are rejected. The matching JSON schema lives in
// schema/experiment_config.schema.json.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgflow/common.hpp"
#include "sgflow/trainer.hpp"

namespace sgflow {

using json = nlohmann::json;

inline constexpr int kConfigVersion = 1;

struct DisorderSpec {
  int n_spins = 32;
  double scale = 1.0;
  std::uint64_t seed = 0;
  double epsilon = 0.01;
};

struct LadderSpec {
  double t_min = 0.2;
  double t_max = 5.0;
  int replicas = 20;
  std::vector<double> temperatures;  // explicit ladder, overrides the geometric one when nonempty
};

struct PtSpec {
  long burn_in = -1;  // negative selects 10 * N
  long samples = 100000;
  std::uint64_t seed = 0;
  bool emit_x = false;
};

struct AnalysisSpec {
  int bins = 81;
  long pairs = 100000;
  long triples = 20000;
  double tolerance = 0.02;
  long samples = 10000;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  DisorderSpec disorder;
  LadderSpec ladder;
  PtSpec pt;
  TrainConfig train;
  int flow_layers = 4;
  AnalysisSpec analysis;
  std::string output_dir = ".";

  void validate() const {
    require(version == kConfigVersion, "config: unsupported version");
    require(disorder.n_spins >= 2, "config: disorder.n_spins must be >= 2");
    require(disorder.scale > 0 && disorder.epsilon > 0, "config: disorder.scale and disorder.epsilon must be positive");
    if (ladder.temperatures.empty()) {
      require(ladder.replicas >= 2, "config: ladder.replicas must be >= 2");
      require(ladder.t_min > 0 && ladder.t_max > ladder.t_min, "config: ladder requires 0 < t_min < t_max");
    } else {
      require(ladder.temperatures.size() >= 2, "config: explicit ladder needs two or more temperatures");
    }
    require(pt.samples >= 1, "config: pt.samples must be >= 1");
    require(flow_layers >= 2 && flow_layers % 2 == 0, "config: flow_layers must be even and >= 2");
    train.validate();
    require(analysis.bins >= 2 && analysis.pairs >= 1 && analysis.triples >= 1 && analysis.samples >= 3,
            "config: invalid analysis sizes");
    require(analysis.tolerance >= 0, "config: analysis.tolerance must be >= 0");
  }
};

namespace detail {

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw InvalidArgument("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw InvalidArgument("config: unknown key '" + where + (where.empty() ? "" : ".") + k + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config: bad value for '" + where + "." + key + "'");
  }
}

}  // namespace detail

inline json to_json(const TrainConfig& c) {
  return {{"loss", to_string(c.loss_kind)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"n_updates", c.n_updates},
          {"beta", c.beta},
          {"symmetrize", c.symmetrize},
          {"seed", c.seed},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"clip_norm", c.clip_norm},
          {"eval_every", c.eval_every},
          {"eval_batch", c.eval_batch},
          {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const json& j) {
  detail::reject_unknown(j, "train",
                         {"loss", "learning_rate", "batch_size", "n_updates", "beta", "symmetrize", "seed", "adam",
                          "clip_norm", "eval_every", "eval_batch", "checkpoint_every"});
  TrainConfig c;
  std::string loss = to_string(c.loss_kind);
  detail::read_opt(j, "loss", loss, "train");
  c.loss_kind = loss_kind_from_string(loss);
  detail::read_opt(j, "learning_rate", c.learning_rate, "train");
  detail::read_opt(j, "batch_size", c.batch_size, "train");
  detail::read_opt(j, "n_updates", c.n_updates, "train");
  detail::read_opt(j, "beta", c.beta, "train");
  detail::read_opt(j, "symmetrize", c.symmetrize, "train");
  detail::read_opt(j, "seed", c.seed, "train");
  if (j.contains("adam")) {
    const json& a = j["adam"];
    detail::reject_unknown(a, "train.adam", {"beta1", "beta2", "eps"});
    detail::read_opt(a, "beta1", c.adam.beta1, "train.adam");
    detail::read_opt(a, "beta2", c.adam.beta2, "train.adam");
    detail::read_opt(a, "eps", c.adam.eps, "train.adam");
  }
  detail::read_opt(j, "clip_norm", c.clip_norm, "train");
  detail::read_opt(j, "eval_every", c.eval_every, "train");
  detail::read_opt(j, "eval_batch", c.eval_batch, "train");
  detail::read_opt(j, "checkpoint_every", c.checkpoint_every, "train");
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  return {{"version", c.version},
          {"disorder",
           {{"n_spins", c.disorder.n_spins},
            {"scale", c.disorder.scale},
            {"seed", c.disorder.seed},
            {"epsilon", c.disorder.epsilon}}},
          {"ladder",
           {{"t_min", c.ladder.t_min},
            {"t_max", c.ladder.t_max},
            {"replicas", c.ladder.replicas},
            {"temperatures", c.ladder.temperatures}}},
          {"pt",
           {{"burn_in", c.pt.burn_in}, {"samples", c.pt.samples}, {"seed", c.pt.seed}, {"emit_x", c.pt.emit_x}}},
          {"train", to_json(c.train)},
          {"flow_layers", c.flow_layers},
          {"analysis",
           {{"bins", c.analysis.bins},
            {"pairs", c.analysis.pairs},
            {"triples", c.analysis.triples},
            {"tolerance", c.analysis.tolerance},
            {"samples", c.analysis.samples},
            {"seed", c.analysis.seed}}},
          {"output_dir", c.output_dir}};
}

/// Missing keys keep their defaults; unknown keys throw InvalidArgument.
inline ExperimentConfig experiment_config_from_json(const json& j) {
  // a top-level "$comment" is allowed and ignored (license headers, notes)
  detail::reject_unknown(j, "",
                         {"$comment", "version", "disorder", "ladder", "pt", "train", "flow_layers", "analysis", "output_dir"});
  ExperimentConfig c;
  detail::read_opt(j, "version", c.version, "");
  if (j.contains("disorder")) {
    const json& d = j["disorder"];
    detail::reject_unknown(d, "disorder", {"n_spins", "scale", "seed", "epsilon"});
    detail::read_opt(d, "n_spins", c.disorder.n_spins, "disorder");
    detail::read_opt(d, "scale", c.disorder.scale, "disorder");
    detail::read_opt(d, "seed", c.disorder.seed, "disorder");
    detail::read_opt(d, "epsilon", c.disorder.epsilon, "disorder");
  }
  if (j.contains("ladder")) {
    const json& l = j["ladder"];
    detail::reject_unknown(l, "ladder", {"t_min", "t_max", "replicas", "temperatures"});
    detail::read_opt(l, "t_min", c.ladder.t_min, "ladder");
    detail::read_opt(l, "t_max", c.ladder.t_max, "ladder");
    detail::read_opt(l, "replicas", c.ladder.replicas, "ladder");
    detail::read_opt(l, "temperatures", c.ladder.temperatures, "ladder");
  }
  if (j.contains("pt")) {
    const json& p = j["pt"];
    detail::reject_unknown(p, "pt", {"burn_in", "samples", "seed", "emit_x"});
    detail::read_opt(p, "burn_in", c.pt.burn_in, "pt");
    detail::read_opt(p, "samples", c.pt.samples, "pt");
    detail::read_opt(p, "seed", c.pt.seed, "pt");
    detail::read_opt(p, "emit_x", c.pt.emit_x, "pt");
  }
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  detail::read_opt(j, "flow_layers", c.flow_layers, "");
  if (j.contains("analysis")) {
    const json& a = j["analysis"];
    detail::reject_unknown(a, "analysis", {"bins", "pairs", "triples", "tolerance", "samples", "seed"});
    detail::read_opt(a, "bins", c.analysis.bins, "analysis");
    detail::read_opt(a, "pairs", c.analysis.pairs, "analysis");
    detail::read_opt(a, "triples", c.analysis.triples, "analysis");
    detail::read_opt(a, "tolerance", c.analysis.tolerance, "analysis");
    detail::read_opt(a, "samples", c.analysis.samples, "analysis");
    detail::read_opt(a, "seed", c.analysis.seed, "analysis");
  }
  detail::read_opt(j, "output_dir", c.output_dir, "");
  c.validate();
  return c;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: malformed JSON: ") + e.what());
  }
  return experiment_config_from_json(j);
}

}  // namespace sgflow

#endif  // SGFLOW_CONFIG_HPP
