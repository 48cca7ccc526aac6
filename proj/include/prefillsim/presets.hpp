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

// Named model and cluster shapes.

#pragma once

#include <optional>
#include <string_view>

#include "prefillsim/cluster.hpp"
#include "prefillsim/cost_model.hpp"
#include "prefillsim/skew.hpp"

namespace prefillsim::presets {

/// Qwen3-235B-A22B: 94 layers, all MoE, 128 experts top-8, GQA with 4 KV
/// heads of 128. Attention per layer: q (64 heads x 128) and o projections
/// plus k/v (4 heads x 128) and the q/k norms.
inline ModelConfig qwen3_235b_a22b(std::uint64_t bytes_per_element = 1) {
  ModelConfig m;
  m.layers = 94;
  m.moe_layers = 94;
  m.hidden = 4096;
  m.kv_heads = 4;
  m.head_dim = 128;
  m.expert_intermediate = 1536;
  m.experts = 128;
  m.top_k = 8;
  m.bytes_per_element = bytes_per_element;
  m.active_params = 22'000'000'000ULL;
  m.total_params = 235'000'000'000ULL;
  m.attn_params_per_layer = 71'835'904ULL;
  return m;
}

/// Qwen3-30B-A3B: 48 layers, 128 experts top-8, 4 KV heads of 128.
inline ModelConfig qwen3_30b_a3b(std::uint64_t bytes_per_element = 2) {
  ModelConfig m;
  m.layers = 48;
  m.moe_layers = 48;
  m.hidden = 2048;
  m.kv_heads = 4;
  m.head_dim = 128;
  m.expert_intermediate = 768;
  m.experts = 128;
  m.top_k = 8;
  m.bytes_per_element = bytes_per_element;
  m.active_params = 3'300'000'000ULL;
  m.total_params = 30'500'000'000ULL;
  m.attn_params_per_layer = 18'874'368ULL;
  return m;
}

/// H100 SXM at FP8: 1979 TFLOP/s dense peak, 80 GB HBM, NVLink and PCIe Gen5
/// effective bandwidths.
inline ClusterConfig h100_fp8(std::uint32_t devices = 8) {
  ClusterConfig c;
  c.devices = devices;
  c.peak_flops = 1.979e15;
  c.hbm_bytes = 80'000'000'000ULL;
  c.link = LinkModel{450e9, 50e9, 10e-6};
  c.gamma = 1.2;
  c.curve = EfficiencyCurve{0.36, 16384.0, 0.05};
  return c;
}

/// H100 SXM at BF16 (989 TFLOP/s dense peak).
inline ClusterConfig h100_bf16(std::uint32_t devices = 8) {
  ClusterConfig c = h100_fp8(devices);
  c.peak_flops = 0.989e15;
  return c;
}

/// Zipf-like expert popularity with a 16x max/min load ratio.
inline SkewModel measured_skew(std::uint64_t seed = 0) {
  return SkewModel{SkewKind::zipf, 16.0, seed};
}

inline std::optional<ModelConfig> model_by_name(std::string_view name) {
  if (name == "qwen3-235b-a22b") return qwen3_235b_a22b(1);
  if (name == "qwen3-235b-a22b-bf16") return qwen3_235b_a22b(2);
  if (name == "qwen3-30b-a3b") return qwen3_30b_a3b(2);
  return std::nullopt;
}

inline std::optional<ClusterConfig> cluster_by_name(std::string_view name) {
  if (name == "h100-fp8") return h100_fp8();
  if (name == "h100-bf16") return h100_bf16();
  return std::nullopt;
}

}  // namespace prefillsim::presets
