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

// Saturation threshold T: the per-device FLOPs a scheduling round must reach
// before background weight traffic is hidden behind compute.

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "prefillsim/cluster.hpp"
#include "prefillsim/simulator.hpp"

namespace prefillsim {

struct ThresholdCalibration {
  double threshold = 0.0;  // T, FLOPs
  double t_c = 0.0;        // layer-0 compute wall, seconds
  double t_e = 0.0;        // slowest later-layer wall, seconds
  double c_dummy = 0.0;    // FLOPs of the profile batch
};

/// T = gamma * max(1, t_e / t_c) * C_dummy.
inline double calibrated_threshold(double gamma, double t_c, double t_e, double c_dummy) {
  const double ratio = (t_c > 0.0 && t_e > t_c) ? t_e / t_c : 1.0;
  return gamma * ratio * c_dummy;
}

/// Threshold in force before any calibration arrives: gamma * f_tok * n_ref.
inline double fallback_threshold(double gamma, const ModelConfig& cfg, std::uint64_t n_ref) {
  return calibrated_threshold(gamma, 1.0, 1.0, f_tok(cfg) * static_cast<double>(n_ref));
}

/// Literal per-layer form: T = t_EP * F_GPU * gamma.
inline double eq1_threshold(double t_ep, const ClusterConfig& cluster) {
  if (!(t_ep >= 0.0)) throw std::invalid_argument("eq1_threshold: t_EP must be >= 0");
  return t_ep * cluster.peak_flops * cluster.gamma;
}

/// Profiles one forward pass of n_ref tokens (linear FLOPs only, spread evenly
/// over layers) on device 0, which carries the largest prefetch shard.
/// Strategies without background transfers always collapse to gamma * C_dummy.
inline ThresholdCalibration calibrate_threshold(const Strategy& s, const ClusterConfig& cluster,
                                                const ModelConfig& cfg, std::uint64_t n_ref) {
  if (n_ref == 0) throw std::invalid_argument("calibrate_threshold: n_ref must be positive");
  validate(s);
  validate(cluster);
  validate(cfg);
  ThresholdCalibration cal;
  cal.c_dummy = f_tok(cfg) * static_cast<double>(n_ref);
  const double per_layer = detail::seconds(cal.c_dummy / static_cast<double>(cfg.layers),
                                           static_cast<double>(n_ref), cluster);
  cal.t_c = per_layer;
  cal.t_e = per_layer;
  if (is_asyncep(s.kind)) {
    std::vector<double> c(cfg.layers, per_layer);
    Timeline t;
    detail::run_async_pipeline(s, cluster.devices, cfg, cluster, c, t, false);
    cal.t_c = t.layers[0].compute_s + t.layers[0].stall_s;
    cal.t_e = 0.0;
    for (std::size_t l = 1; l < t.layers.size(); ++l) {
      cal.t_e = std::max(cal.t_e, t.layers[l].compute_s + t.layers[l].stall_s);
    }
  }
  cal.threshold = calibrated_threshold(cluster.gamma, cal.t_c, cal.t_e, cal.c_dummy);
  return cal;
}

}  // namespace prefillsim
