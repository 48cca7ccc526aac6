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

// Per-device HBM accounting: weights + KV + activations against capacity.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "prefillsim/cluster.hpp"
#include "prefillsim/comm_model.hpp"
#include "prefillsim/cost_model.hpp"

namespace prefillsim {

/// B requests of S tokens each, as seen by one engine.
struct BatchShape {
  std::uint64_t batch = 0;
  std::uint64_t seq = 0;
};

struct FeasibilityBreakdown {
  Bytes weights_bytes = 0;
  Bytes kv_bytes = 0;
  Bytes act_bytes = 0;
  Bytes headroom = 0;  // hbm - required when feasible, else 0

  Bytes required() const { return weights_bytes + kv_bytes + act_bytes; }
};

struct FeasibilityReport {
  bool feasible = false;
  FeasibilityBreakdown breakdown;
  std::string reason;
};

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline Bytes ceil_div(Bytes a, Bytes b) { return a / b + (a % b != 0 ? 1 : 0); }
}  // namespace detail

/// Factor by which an engine's batch state (KV, activations) is split across
/// devices: 1 when each device owns its requests, P when one engine spans all.
inline std::uint32_t batch_shard(StrategyKind kind, std::uint32_t devices) {
  return has_dp_attention(kind) ? 1 : devices;
}

/// Resident weight bytes on the most loaded device.
///
/// AsyncEP keeps attention replicated and streams experts through a
/// double-buffered staging area (the layer being computed plus the layer
/// being gathered). Without offload every device keeps layer 0 whole and a
/// 1/P shard of every other MoE layer; with offload only `window` layers of
/// shards are resident, refilled from host memory.
inline Bytes per_device_weight_bytes(const Strategy& s, std::uint32_t devices,
                                     const ModelConfig& cfg) {
  validate(s);
  if (devices < 1) throw std::invalid_argument("per_device_weight_bytes: P must be >= 1");
  const WeightBytes w = weight_bytes(cfg);
  const Bytes p = devices;
  switch (s.kind) {
    case StrategyKind::dp_dp:
      return w.total();
    case StrategyKind::dp_tp:
    case StrategyKind::dp_ep:
    case StrategyKind::sp_tp:
    case StrategyKind::sp_ep:
      return w.attn_total + detail::ceil_div(w.expert_total, p);
    case StrategyKind::tp_tp:
    case StrategyKind::tp_ep:
      return detail::ceil_div(w.attn_total, p) + detail::ceil_div(w.expert_total, p);
    case StrategyKind::pp_pp:
      return detail::ceil_div(w.total(), p);
    case StrategyKind::dp_asyncep: {
      const Bytes staging = 2 * w.expert_per_layer;
      if (s.offload) {
        const Bytes window = static_cast<Bytes>(s.window) * w.expert_per_layer;
        return w.attn_total + detail::ceil_div(window, p) + staging;
      }
      if (devices == 1) return w.total();
      const Bytes rest = w.expert_total - w.expert_per_layer;
      return w.attn_total + w.expert_per_layer + detail::ceil_div(rest, p) + staging;
    }
  }
  return 0;
}

/// C1 check for one engine batch of the given shape.
inline FeasibilityReport feasibility_check(const Strategy& s, std::uint32_t devices,
                                           BatchShape shape, const ModelConfig& cfg,
                                           const ClusterConfig& cluster, bool kv_free) {
  FeasibilityReport r;
  FeasibilityBreakdown& b = r.breakdown;
  b.weights_bytes = per_device_weight_bytes(s, devices, cfg);
  const Bytes shard = batch_shard(s.kind, devices);
  b.kv_bytes = kv_free ? 0 : detail::ceil_div(kv_bytes(shape.batch, shape.seq, cfg), shard);
  b.act_bytes = detail::ceil_div(activation_bytes(shape.batch, shape.seq, cfg), shard);
  const detail::u128 need =
      static_cast<detail::u128>(b.weights_bytes) + b.kv_bytes + b.act_bytes;
  r.feasible = need <= cluster.hbm_bytes;
  if (r.feasible) {
    b.headroom = cluster.hbm_bytes - static_cast<Bytes>(need);
  } else {
    r.reason = std::string(to_string(s.kind)) + " at P=" + std::to_string(devices) + " needs " +
               std::to_string(static_cast<Bytes>(need)) + " bytes per device, HBM holds " +
               std::to_string(cluster.hbm_bytes);
  }
  return r;
}

}  // namespace prefillsim
