// Copyright 2026 The prefillsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration: one JSON document, unknown keys rejected.
//
// {
//   "model":     {"preset": "qwen3-235b-a22b", <ModelConfig field overrides>},
//   "cluster":   {"preset": "h100-fp8", "gpu_flops", "hbm_bytes", "nvlink_bw", "pcie_bw",
//                 "latency_s", "gamma", "chunk_tokens",
//                 "curve": {"eta_max", "tau_sat", "eta_min"}},
//   "strategies": ["dp_ep", "dp_asyncep", ...],
//   "gpus":      [1, 2, 4, 8],
//   "asyncep":   {"offload": true, "window": 2, "kv_free": true},
//   "skew":      {"kind": "zipf", "ratio": 16},
//   "workload":  exactly one of
//                {"trace": "path"}
//                {"synthetic": {"regime": "short" | {"label","seq_len","count"},
//                               "prefix_share", "group_size"}}
//                {"mixture": {"preset": "aggregated"} |
//                            {"components": [{"label","min_len","max_len",
//                                             "prefix_share","group_size","weight"}],
//                             "total_tokens"}}
//                plus optional "arrival_rate",
//   "scheduler": {"block_size": 16, "n_ref": 16384, "decay": "prorated" | "literal_ftok",
//                 "threshold": "calibrated" | "fallback", "manual_threshold": <FLOPs>},
//   "seed":      42,
//   "output":    {"path": "report.csv", "format": "csv" | "jsonl"}
// }

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "prefillsim/cluster.hpp"
#include "prefillsim/comm_model.hpp"
#include "prefillsim/cost_model.hpp"
#include "prefillsim/presets.hpp"
#include "prefillsim/router.hpp"
#include "prefillsim/skew.hpp"
#include "prefillsim/workload.hpp"

namespace prefillsim {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& msg)
      : std::runtime_error(field + ": " + msg), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class WorkloadKind { trace, synthetic, mixture };
enum class ThresholdMode { calibrated, fallback };

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::synthetic;
  std::string trace_path;
  Regime regime{"short", 256, 40960};
  double prefix_share = 0.0;
  std::uint64_t group_size = 4;
  std::vector<MixtureComponent> components;
  std::uint64_t total_tokens = 0;
  double arrival_rate = 0.0;
};

struct SchedulerConfig {
  std::uint64_t block_size = 16;
  std::uint64_t n_ref = 16384;
  DecayMode decay = DecayMode::prorated;
  ThresholdMode threshold = ThresholdMode::calibrated;
  std::optional<double> manual_threshold;
};

struct ExperimentConfig {
  ModelConfig model;
  ClusterConfig cluster;  // `devices` is overridden per sweep cell
  std::vector<Strategy> strategies;
  std::vector<std::uint32_t> gpus;
  bool kv_free = false;  // applies to dp_asyncep cells
  SkewModel skew;
  WorkloadSpec workload;
  SchedulerConfig scheduler;
  std::uint64_t seed = 0;
  std::string output_path;
  std::string output_format = "csv";
};

namespace detail {

// Field reader that remembers which keys were consumed.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(at(key), "missing required field");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key) {
    const nlohmann::json& v = raw(key);
    return convert<T>(v, at(key));
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    const nlohmann::json& v = raw(key);
    if (v.is_null()) return std::nullopt;
    return convert<T>(v, at(key));
  }

  Section child(const std::string& key) { return Section(raw(key), at(key)); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(at(k), "unknown key");
    }
  }

  template <typename T>
  static T convert(const nlohmann::json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where, "expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() && !(v.is_number_float() && v.get<double>() == std::floor(v.get<double>()))) {
        throw ConfigError(where, "expected an integer");
      }
      if (v.is_number_float() ? v.get<double>() < 0 : (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(where, "expected a non-negative integer");
      }
      if (v.is_number_float()) return static_cast<T>(v.get<double>());
    }
    return v.get<T>();
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void field_guard(const std::string& where, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where, e.what());
  }
}

inline ModelConfig parse_model(Section s) {
  ModelConfig m;
  if (auto p = s.opt<std::string>("preset")) {
    auto found = presets::model_by_name(*p);
    if (!found) throw ConfigError(s.at("preset"), "unknown model preset '" + *p + "'");
    m = *found;
  }
  auto u = [&](const char* k, std::uint64_t& dst) {
    if (auto v = s.opt<std::uint64_t>(k)) dst = *v;
  };
  u("layers", m.layers);
  u("moe_layers", m.moe_layers);
  u("hidden", m.hidden);
  u("kv_heads", m.kv_heads);
  u("head_dim", m.head_dim);
  u("expert_intermediate", m.expert_intermediate);
  u("experts", m.experts);
  u("top_k", m.top_k);
  u("bytes_per_element", m.bytes_per_element);
  u("active_params", m.active_params);
  u("total_params", m.total_params);
  u("attn_params_per_layer", m.attn_params_per_layer);
  s.finish();
  field_guard(s.path(), [&] { validate(m); });
  return m;
}

inline ClusterConfig parse_cluster(Section s) {
  ClusterConfig c;
  if (auto p = s.opt<std::string>("preset")) {
    auto found = presets::cluster_by_name(*p);
    if (!found) throw ConfigError(s.at("preset"), "unknown cluster preset '" + *p + "'");
    c = *found;
  }
  if (auto v = s.opt<double>("gpu_flops")) c.peak_flops = *v;
  if (auto v = s.opt<std::uint64_t>("hbm_bytes")) c.hbm_bytes = *v;
  if (auto v = s.opt<double>("nvlink_bw")) c.link.nvlink_bw = *v;
  if (auto v = s.opt<double>("pcie_bw")) c.link.pcie_bw = *v;
  if (auto v = s.opt<double>("latency_s")) c.link.latency_floor = *v;
  if (auto v = s.opt<double>("gamma")) c.gamma = *v;
  if (auto v = s.opt<std::uint64_t>("chunk_tokens")) c.chunk_tokens = *v;
  if (s.has("curve")) {
    Section cv = s.child("curve");
    if (auto v = cv.opt<double>("eta_max")) c.curve.eta_max = *v;
    if (auto v = cv.opt<double>("tau_sat")) c.curve.tau_sat = *v;
    if (auto v = cv.opt<double>("eta_min")) c.curve.eta_min = *v;
    cv.finish();
  }
  s.finish();
  field_guard("cluster", [&] { validate(c); });
  return c;
}

inline SourceSpec parse_source(Section& s) {
  SourceSpec src;
  src.label = s.opt<std::string>("label").value_or("source");
  src.min_len = s.get<std::uint64_t>("min_len");
  src.max_len = s.get<std::uint64_t>("max_len");
  src.prefix_share = s.opt<double>("prefix_share").value_or(0.0);
  src.group_size = s.opt<std::uint64_t>("group_size").value_or(4);
  return src;
}

inline WorkloadSpec parse_workload(Section s) {
  WorkloadSpec w;
  int kinds = 0;
  if (s.has("trace")) {
    ++kinds;
    w.kind = WorkloadKind::trace;
    w.trace_path = s.get<std::string>("trace");
  }
  if (s.has("synthetic")) {
    ++kinds;
    w.kind = WorkloadKind::synthetic;
    Section syn = s.child("synthetic");
    const nlohmann::json& r = syn.raw("regime");
    if (r.is_string()) {
      auto found = find_regime(r.get<std::string>());
      if (!found) throw ConfigError(syn.at("regime"), "unknown regime '" + r.get<std::string>() + "'");
      w.regime = *found;
    } else {
      Section rs(r, syn.at("regime"));
      w.regime.label = rs.opt<std::string>("label").value_or("custom");
      w.regime.seq_len = rs.get<std::uint64_t>("seq_len");
      w.regime.count = rs.get<std::uint64_t>("count");
      rs.finish();
    }
    w.prefix_share = syn.opt<double>("prefix_share").value_or(0.0);
    w.group_size = syn.opt<std::uint64_t>("group_size").value_or(4);
    syn.finish();
  }
  if (s.has("mixture")) {
    ++kinds;
    w.kind = WorkloadKind::mixture;
    Section mix = s.child("mixture");
    if (auto p = mix.opt<std::string>("preset")) {
      if (*p != "aggregated") throw ConfigError(mix.at("preset"), "unknown mixture preset '" + *p + "'");
      w.components = aggregated_mixture();
      w.total_tokens = kAggregatedTokens;
    }
    if (mix.has("components")) {
      const nlohmann::json& arr = mix.raw("components");
      if (!arr.is_array()) throw ConfigError(mix.at("components"), "expected an array");
      w.components.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Section cs(arr[i], mix.at("components") + "[" + std::to_string(i) + "]");
        MixtureComponent c;
        c.source = parse_source(cs);
        c.weight = cs.opt<double>("weight").value_or(1.0);
        cs.finish();
        w.components.push_back(c);
      }
    }
    if (auto t = mix.opt<std::uint64_t>("total_tokens")) w.total_tokens = *t;
    mix.finish();
    if (w.components.empty()) throw ConfigError(s.at("mixture"), "needs a preset or components");
    if (w.total_tokens == 0) throw ConfigError(s.at("mixture.total_tokens"), "must be positive");
  }
  if (kinds != 1) {
    throw ConfigError(s.path(),
                      "exactly one of trace, synthetic, mixture is required");
  }
  w.arrival_rate = s.opt<double>("arrival_rate").value_or(0.0);
  if (w.arrival_rate < 0.0) throw ConfigError(s.at("arrival_rate"), "must be >= 0");
  s.finish();
  return w;
}

}  // namespace detail

/// Parses a configuration document. Relative trace paths resolve against
/// `base_dir` when given.
inline ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = "") {
  using detail::Section;
  Section root(doc, "");
  ExperimentConfig c;
  c.model = detail::parse_model(root.child("model"));
  c.cluster = detail::parse_cluster(root.child("cluster"));

  {
    const nlohmann::json& arr = root.raw("strategies");
    if (!arr.is_array() || arr.empty()) throw ConfigError("strategies", "expected a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "strategies[" + std::to_string(i) + "]";
      const auto name = Section::convert<std::string>(arr[i], where);
      auto k = parse_strategy_kind(name);
      if (!k) throw ConfigError(where, "unknown strategy '" + name + "'");
      c.strategies.push_back(Strategy{*k, false, 2});
    }
  }
  {
    const nlohmann::json& arr = root.raw("gpus");
    if (!arr.is_array() || arr.empty()) throw ConfigError("gpus", "expected a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "gpus[" + std::to_string(i) + "]";
      const auto p = Section::convert<std::uint32_t>(arr[i], where);
      if (p < 1) throw ConfigError(where, "must be >= 1");
      c.gpus.push_back(p);
    }
    std::sort(c.gpus.begin(), c.gpus.end());
    c.gpus.erase(std::unique(c.gpus.begin(), c.gpus.end()), c.gpus.end());
  }

  bool offload = false;
  std::uint32_t window = 2;
  if (root.has("asyncep")) {
    Section a = root.child("asyncep");
    offload = a.opt<bool>("offload").value_or(false);
    window = a.opt<std::uint32_t>("window").value_or(2);
    c.kv_free = a.opt<bool>("kv_free").value_or(false);
    a.finish();
    if (offload && window < 1) throw ConfigError("asyncep.window", "must be >= 1 with offload");
  }
  for (Strategy& s : c.strategies) {
    if (s.kind == StrategyKind::dp_asyncep) {
      s.offload = offload;
      s.window = window;
    }
  }

  c.seed = root.opt<std::uint64_t>("seed").value_or(0);
  c.skew = SkewModel{SkewKind::uniform, 1.0, 0};
  if (root.has("skew")) {
    Section sk = root.child("skew");
    const auto kind = sk.opt<std::string>("kind").value_or("uniform");
    auto k = parse_skew_kind(kind);
    if (!k) throw ConfigError(sk.at("kind"), "unknown skew kind '" + kind + "'");
    c.skew.kind = *k;
    c.skew.ratio = sk.opt<double>("ratio").value_or(1.0);
    sk.finish();
    detail::field_guard("skew", [&] { validate(c.skew); });
  }
  c.skew.seed = detail::derive_seed(c.seed, 0x5CE3ULL);

  c.workload = detail::parse_workload(root.child("workload"));
  if (c.workload.kind == WorkloadKind::trace && !base_dir.empty() &&
      std::filesystem::path(c.workload.trace_path).is_relative()) {
    c.workload.trace_path = (std::filesystem::path(base_dir) / c.workload.trace_path).string();
  }
  if (c.workload.kind == WorkloadKind::trace && !std::filesystem::exists(c.workload.trace_path)) {
    throw ConfigError("workload.trace", "file '" + c.workload.trace_path + "' does not exist");
  }

  if (root.has("scheduler")) {
    Section sc = root.child("scheduler");
    c.scheduler.block_size = sc.opt<std::uint64_t>("block_size").value_or(16);
    if (c.scheduler.block_size < 1) throw ConfigError(sc.at("block_size"), "must be >= 1");
    c.scheduler.n_ref = sc.opt<std::uint64_t>("n_ref").value_or(16384);
    if (c.scheduler.n_ref < 1) throw ConfigError(sc.at("n_ref"), "must be >= 1");
    const auto decay = sc.opt<std::string>("decay").value_or("prorated");
    if (decay == "prorated") {
      c.scheduler.decay = DecayMode::prorated;
    } else if (decay == "literal_ftok") {
      c.scheduler.decay = DecayMode::literal_ftok;
    } else {
      throw ConfigError(sc.at("decay"), "expected 'prorated' or 'literal_ftok'");
    }
    const auto th = sc.opt<std::string>("threshold").value_or("calibrated");
    if (th == "calibrated") {
      c.scheduler.threshold = ThresholdMode::calibrated;
    } else if (th == "fallback") {
      c.scheduler.threshold = ThresholdMode::fallback;
    } else {
      throw ConfigError(sc.at("threshold"), "expected 'calibrated' or 'fallback'");
    }
    c.scheduler.manual_threshold = sc.opt<double>("manual_threshold");
    if (c.scheduler.manual_threshold && !(*c.scheduler.manual_threshold > 0.0)) {
      throw ConfigError(sc.at("manual_threshold"), "must be positive");
    }
    sc.finish();
  }

  if (root.has("output")) {
    Section o = root.child("output");
    c.output_path = o.opt<std::string>("path").value_or("");
    c.output_format = o.opt<std::string>("format").value_or("csv");
    if (c.output_format == "json-lines") c.output_format = "jsonl";
    if (c.output_format != "csv" && c.output_format != "jsonl") {
      throw ConfigError(o.at("format"), "expected 'csv' or 'jsonl'");
    }
    o.finish();
  }
  root.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc, std::filesystem::path(path).parent_path().string());
}

}  // namespace prefillsim
