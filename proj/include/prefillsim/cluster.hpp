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

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "prefillsim/comm_model.hpp"
#include "prefillsim/cost_model.hpp"

namespace prefillsim {

struct ClusterConfig {
  std::uint32_t devices = 1;       // P
  double peak_flops = 0.0;         // per device, at the deployed precision
  Bytes hbm_bytes = 0;             // per device
  LinkModel link;
  double gamma = 1.2;              // jitter margin
  EfficiencyCurve curve;
  std::optional<std::uint64_t> chunk_tokens;  // chunked-prefill cap per kernel

  friend bool operator==(const ClusterConfig&, const ClusterConfig&) = default;
};

inline void validate(const ClusterConfig& c) {
  if (c.devices < 1) throw std::invalid_argument("ClusterConfig: devices must be >= 1");
  if (!(c.peak_flops > 0.0)) throw std::invalid_argument("ClusterConfig: peak_flops must be positive");
  if (!(c.gamma >= 1.0)) throw std::invalid_argument("ClusterConfig: gamma must be >= 1");
  if (c.chunk_tokens && *c.chunk_tokens == 0) {
    throw std::invalid_argument("ClusterConfig: chunk_tokens must be positive when set");
  }
  validate(c.link);
  validate(c.curve);
}

/// Token count fed to the efficiency curve, after the chunked-prefill cap.
inline double kernel_tokens(double tokens, const ClusterConfig& c) {
  if (c.chunk_tokens) return std::min(tokens, static_cast<double>(*c.chunk_tokens));
  return tokens;
}

inline double efficiency(double tokens, const ClusterConfig& c) {
  return gemm_efficiency(kernel_tokens(tokens, c), c.curve);
}

/// One request's share of work inside a device batch.
struct WorkItem {
  std::uint64_t request_id = 0;
  std::uint64_t prefix_len = 0;
  std::uint64_t cached_tokens = 0;  // prefix tokens already resident in KV
  std::uint64_t suffix_len = 0;

  std::uint64_t executed_tokens() const { return prefix_len - cached_tokens + suffix_len; }
  std::uint64_t context_tokens() const { return prefix_len + suffix_len; }
  Flops flops(const ModelConfig& cfg) const {
    return cost_delta(prefix_len, cached_tokens, suffix_len, cfg);
  }
};

using DeviceBatch = std::vector<WorkItem>;

struct BatchTotals {
  std::uint64_t executed_tokens = 0;
  std::uint64_t context_tokens = 0;
  Flops flops = 0.0;
};

inline BatchTotals totals(const DeviceBatch& batch, const ModelConfig& cfg) {
  BatchTotals t;
  for (const WorkItem& w : batch) {
    t.executed_tokens += w.executed_tokens();
    t.context_tokens += w.context_tokens();
    t.flops += w.flops(cfg);
  }
  return t;
}

}  // namespace prefillsim
