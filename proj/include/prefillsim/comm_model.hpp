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

// Per-device, per-layer communication volumes of the attention x expert
// parallel strategy grid (ring-style collectives, routing imbalance ignored),
// plus the background weight traffic of asynchronous expert parallelism.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "prefillsim/cost_model.hpp"

namespace prefillsim {

enum class StrategyKind {
  dp_dp,
  dp_tp,
  dp_ep,
  tp_tp,
  tp_ep,
  pp_pp,
  sp_tp,
  sp_ep,
  dp_asyncep,
};

inline constexpr std::array<StrategyKind, 9> kAllStrategyKinds = {
    StrategyKind::dp_dp, StrategyKind::dp_tp, StrategyKind::dp_ep,
    StrategyKind::tp_tp, StrategyKind::tp_ep, StrategyKind::pp_pp,
    StrategyKind::sp_tp, StrategyKind::sp_ep, StrategyKind::dp_asyncep,
};

inline constexpr std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::dp_dp: return "dp_dp";
    case StrategyKind::dp_tp: return "dp_tp";
    case StrategyKind::dp_ep: return "dp_ep";
    case StrategyKind::tp_tp: return "tp_tp";
    case StrategyKind::tp_ep: return "tp_ep";
    case StrategyKind::pp_pp: return "pp_pp";
    case StrategyKind::sp_tp: return "sp_tp";
    case StrategyKind::sp_ep: return "sp_ep";
    case StrategyKind::dp_asyncep: return "dp_asyncep";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy_kind(std::string_view name) {
  for (StrategyKind k : kAllStrategyKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

/// A parallel strategy. Offload and window only apply to dp_asyncep.
struct Strategy {
  StrategyKind kind = StrategyKind::dp_dp;
  bool offload = false;
  std::uint32_t window = 2;  // prefetch depth in layers

  friend bool operator==(const Strategy&, const Strategy&) = default;
};

inline void validate(const Strategy& s) {
  if (s.offload && s.kind != StrategyKind::dp_asyncep) {
    throw std::invalid_argument("Strategy: offload is only defined for dp_asyncep");
  }
  if (s.offload && s.window < 1) {
    throw std::invalid_argument("Strategy: prefetch window must be >= 1 with offload");
  }
}

inline bool is_asyncep(StrategyKind k) { return k == StrategyKind::dp_asyncep; }

/// Attention is data parallel: each device owns its own requests.
inline bool has_dp_attention(StrategyKind k) {
  return k == StrategyKind::dp_dp || k == StrategyKind::dp_tp || k == StrategyKind::dp_ep ||
         k == StrategyKind::dp_asyncep;
}

/// Experts are statically sharded by expert index, with synchronous dispatch.
inline bool has_sync_ep(StrategyKind k) {
  return k == StrategyKind::dp_ep || k == StrategyKind::tp_ep || k == StrategyKind::sp_ep;
}

/// Number of independent request queues (engines) a P-device deployment exposes.
inline std::uint32_t engine_count(StrategyKind k, std::uint32_t devices) {
  return has_dp_attention(k) ? devices : 1;
}

struct LinkModel {
  double nvlink_bw = 0.0;      // bytes/s, effective unidirectional
  double pcie_bw = 0.0;        // bytes/s, effective
  double latency_floor = 0.0;  // seconds per transfer

  friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

inline void validate(const LinkModel& l) {
  if (!(l.nvlink_bw > 0.0 && l.pcie_bw > 0.0)) {
    throw std::invalid_argument("LinkModel: bandwidths must be positive");
  }
  if (!(l.latency_floor >= 0.0)) {
    throw std::invalid_argument("LinkModel: latency_floor must be >= 0");
  }
}

/// On-path bytes one device moves per layer for a batch of B x S tokens.
/// Terms with a (P-1)/P factor are evaluated as floor(coef * (P-1) * ... / P).
inline Bytes per_layer_comm_bytes(StrategyKind kind, std::uint32_t parallel, std::uint64_t batch,
                                  std::uint64_t seq, const ModelConfig& cfg) {
  if (parallel < 1) throw std::invalid_argument("per_layer_comm_bytes: P must be >= 1");
  using detail::u128;
  const u128 p = parallel;
  const u128 tokens = static_cast<u128>(batch) * seq;
  const u128 H = cfg.hidden;
  const u128 b = cfg.bytes_per_element;
  const u128 k = cfg.top_k;
  const u128 kv_width = static_cast<u128>(cfg.kv_heads) * cfg.head_dim;

  // coefficient per token (in elements), scaled by (P-1)/P
  auto ring = [&](u128 per_token_elems) -> Bytes {
    const u128 num = per_token_elems * (p - 1) * tokens * b;
    return detail::narrow_u64(num / p, "per_layer_comm_bytes");
  };

  switch (kind) {
    case StrategyKind::dp_dp: return 0;
    case StrategyKind::dp_tp: return ring(4 * H);
    case StrategyKind::dp_ep: return ring(4 * k * H);
    case StrategyKind::tp_tp: return ring(4 * H);
    case StrategyKind::tp_ep: return ring((2 + 4 * k) * H);
    case StrategyKind::pp_pp:
      return detail::narrow_u64(2 * tokens * H * b, "per_layer_comm_bytes");
    case StrategyKind::sp_tp: return ring(2 * kv_width + 4 * H);
    case StrategyKind::sp_ep: return ring(2 * kv_width + 4 * k * H);
    case StrategyKind::dp_asyncep: return 0;
  }
  return 0;
}

/// Background NVLink bytes each device receives to assemble one layer's
/// complete expert set from 1/P shards.
inline Bytes asyncep_gather_bytes(std::uint32_t parallel, const ModelConfig& cfg) {
  if (parallel < 1) throw std::invalid_argument("asyncep_gather_bytes: P must be >= 1");
  const detail::u128 per_layer = weight_bytes(cfg).expert_per_layer;
  return detail::narrow_u64(per_layer * (parallel - 1) / parallel, "asyncep_gather_bytes");
}

/// PCIe bytes `device` prefetches per layer when expert weights are offloaded.
/// Shards differ by at most one byte; device 0 holds the largest one.
inline Bytes offload_h2d_bytes(std::uint32_t parallel, const ModelConfig& cfg,
                               std::uint32_t device = 0) {
  if (parallel < 1) throw std::invalid_argument("offload_h2d_bytes: P must be >= 1");
  if (device >= parallel) throw std::invalid_argument("offload_h2d_bytes: device out of range");
  const Bytes per_layer = weight_bytes(cfg).expert_per_layer;
  return per_layer / parallel + (device < per_layer % parallel ? 1 : 0);
}

inline double transfer_time(Bytes bytes, double link_bw, double latency_floor) {
  return latency_floor + static_cast<double>(bytes) / link_bw;
}

}  // namespace prefillsim
