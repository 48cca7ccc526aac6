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

// Analytical FLOPs and HBM footprint formulas for MoE prefill.
//
// Byte quantities are exact 64-bit integers (they feed feasibility checks);
// FLOP quantities are doubles (they feed timing estimates). Every function
// here is pure.

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "prefillsim/detail/checked.hpp"

namespace prefillsim {

using Bytes = std::uint64_t;
using Flops = double;

/// Transformer / MoE shape parameters.
struct ModelConfig {
  std::uint64_t layers = 0;              // L
  std::uint64_t moe_layers = 0;          // L_moe <= L
  std::uint64_t hidden = 0;              // H
  std::uint64_t kv_heads = 0;            // N_kv
  std::uint64_t head_dim = 0;            // d_h
  std::uint64_t expert_intermediate = 0; // h
  std::uint64_t experts = 0;             // E per MoE layer
  std::uint64_t top_k = 0;               // k
  std::uint64_t bytes_per_element = 2;   // b, 1 (FP8) or 2 (BF16)
  std::uint64_t active_params = 0;
  std::uint64_t total_params = 0;
  std::uint64_t attn_params_per_layer = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& cfg) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("ModelConfig: ") + msg);
  };
  require(cfg.layers > 0, "layers must be positive");
  require(cfg.moe_layers > 0 && cfg.moe_layers <= cfg.layers,
          "moe_layers must be in [1, layers]");
  require(cfg.hidden > 0, "hidden must be positive");
  require(cfg.kv_heads > 0, "kv_heads must be positive");
  require(cfg.head_dim > 0, "head_dim must be positive");
  require(cfg.expert_intermediate > 0, "expert_intermediate must be positive");
  require(cfg.experts > 0, "experts must be positive");
  require(cfg.top_k > 0 && cfg.top_k <= cfg.experts, "top_k must be in [1, experts]");
  require(cfg.bytes_per_element == 1 || cfg.bytes_per_element == 2,
          "bytes_per_element must be 1 or 2");
  require(cfg.active_params > 0, "active_params must be positive");
  require(cfg.total_params >= cfg.active_params, "total_params must be >= active_params");
  require(cfg.attn_params_per_layer > 0, "attn_params_per_layer must be positive");
}

/// GEMM-saturation curve: efficiency rises linearly with the per-kernel token
/// batch until tau_sat, floored at eta_min.
struct EfficiencyCurve {
  double eta_max = 1.0;
  double tau_sat = 1.0;
  double eta_min = 1.0;

  friend bool operator==(const EfficiencyCurve&, const EfficiencyCurve&) = default;
};

inline void validate(const EfficiencyCurve& c) {
  if (!(c.eta_min > 0.0 && c.eta_min <= c.eta_max && c.eta_max <= 1.0)) {
    throw std::invalid_argument("EfficiencyCurve: need 0 < eta_min <= eta_max <= 1");
  }
  if (!(c.tau_sat > 0.0)) {
    throw std::invalid_argument("EfficiencyCurve: tau_sat must be positive");
  }
}

struct CostBreakdown {
  Flops prefix_flops = 0.0;
  Flops ffn_flops = 0.0;
  Flops self_attn_flops = 0.0;
  Flops cross_attn_flops = 0.0;
  Flops total_flops = 0.0;
};

// ---------------------------------------------------------------------------
// Memory
// ---------------------------------------------------------------------------

/// KV cache bytes: 2 * L * B * S * N_kv * d_h * b.
inline Bytes kv_bytes(std::uint64_t batch, std::uint64_t seq, const ModelConfig& cfg) {
  return detail::checked_product(
      {2, cfg.layers, batch, seq, cfg.kv_heads, cfg.head_dim, cfg.bytes_per_element},
      "kv_bytes");
}

/// Peak activation bytes, taken as the two largest MLP intermediates:
/// 2 * B * S * k * h * b.
inline Bytes activation_bytes(std::uint64_t batch, std::uint64_t seq, const ModelConfig& cfg) {
  return detail::checked_product(
      {2, batch, seq, cfg.top_k, cfg.expert_intermediate, cfg.bytes_per_element},
      "activation_bytes");
}

struct WeightBytes {
  Bytes attn_total = 0;
  Bytes expert_total = 0;
  Bytes expert_per_layer = 0;
  Bytes expert_per_expert = 0;

  Bytes total() const { return attn_total + expert_total; }
};

/// Weight footprint. Experts are gated MLPs (3 * H * h parameters each);
/// attention parameters per layer come straight from the config.
inline WeightBytes weight_bytes(const ModelConfig& cfg) {
  WeightBytes w;
  w.expert_per_expert = detail::checked_product(
      {3, cfg.hidden, cfg.expert_intermediate, cfg.bytes_per_element}, "weight_bytes");
  w.expert_per_layer = detail::checked_product({cfg.experts, w.expert_per_expert}, "weight_bytes");
  w.expert_total = detail::checked_product({cfg.moe_layers, w.expert_per_layer}, "weight_bytes");
  w.attn_total = detail::checked_product(
      {cfg.layers, cfg.attn_params_per_layer, cfg.bytes_per_element}, "weight_bytes");
  return w;
}

// ---------------------------------------------------------------------------
// FLOPs
// ---------------------------------------------------------------------------

/// Per-token forward FLOPs, 2 * n_active. Linear terms only.
inline Flops f_tok(const ModelConfig& cfg) {
  return 2.0 * static_cast<double>(cfg.active_params);
}

namespace detail {
inline double attn_scale(const ModelConfig& cfg) {
  return static_cast<double>(cfg.hidden) * static_cast<double>(cfg.layers);
}
}  // namespace detail

/// Cost of computing `tokens` uncached prefix tokens: linear part plus the
/// causal self-attention term 2 * n^2 * H * L.
inline Flops cost_prefix(std::uint64_t tokens, const ModelConfig& cfg) {
  if (tokens == 0) return 0.0;
  const double n = static_cast<double>(tokens);
  return n * f_tok(cfg) + 2.0 * n * n * detail::attn_scale(cfg);
}

/// Suffix cost against a prefix of `prefix_tokens` already in KV.
inline CostBreakdown cost_suffix(std::uint64_t suffix_tokens, std::uint64_t prefix_tokens,
                                 const ModelConfig& cfg) {
  CostBreakdown c;
  if (suffix_tokens == 0) return c;
  const double s = static_cast<double>(suffix_tokens);
  const double p = static_cast<double>(prefix_tokens);
  c.ffn_flops = s * f_tok(cfg);
  c.self_attn_flops = 2.0 * s * s * detail::attn_scale(cfg);
  c.cross_attn_flops = 4.0 * s * p * detail::attn_scale(cfg);
  c.total_flops = c.ffn_flops + c.self_attn_flops + c.cross_attn_flops;
  return c;
}

/// Load increment for one request: C_pfx(P - M) + C_sfx(S, P).
inline Flops cost_delta(std::uint64_t prefix_len, std::uint64_t matched, std::uint64_t suffix_len,
                        const ModelConfig& cfg) {
  if (matched > prefix_len) {
    throw std::invalid_argument("cost_delta: matched prefix tokens exceed prefix length");
  }
  return cost_prefix(prefix_len - matched, cfg) + cost_suffix(suffix_len, prefix_len, cfg).total_flops;
}

/// Itemized version of cost_delta.
inline CostBreakdown cost_breakdown(std::uint64_t prefix_len, std::uint64_t matched,
                                    std::uint64_t suffix_len, const ModelConfig& cfg) {
  CostBreakdown c = cost_suffix(suffix_len, prefix_len, cfg);
  if (matched > prefix_len) {
    throw std::invalid_argument("cost_breakdown: matched prefix tokens exceed prefix length");
  }
  c.prefix_flops = cost_prefix(prefix_len - matched, cfg);
  c.total_flops = c.prefix_flops + c.total_flops;
  return c;
}

inline double gemm_efficiency(double tokens, const EfficiencyCurve& curve) {
  const double ramp = curve.eta_max * std::min(1.0, std::max(0.0, tokens) / curve.tau_sat);
  return std::max(curve.eta_min, ramp);
}

/// Expert-GEMM FLOPs per token per MoE layer (k gated experts), capped so the
/// expert share never exceeds f_tok.
inline Flops expert_flops_per_token_layer(const ModelConfig& cfg) {
  const double gated = 6.0 * static_cast<double>(cfg.hidden) *
                       static_cast<double>(cfg.expert_intermediate) *
                       static_cast<double>(cfg.top_k);
  return std::min(gated, f_tok(cfg) / static_cast<double>(cfg.moe_layers));
}

}  // namespace prefillsim
