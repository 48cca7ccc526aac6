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

// Strategy x parallel-degree sweep: route a trace round by round, simulate
// every round, and summarize throughput and MFU per cell.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefillsim/config.hpp"
#include "prefillsim/engine_events.hpp"
#include "prefillsim/feasibility.hpp"
#include "prefillsim/router.hpp"
#include "prefillsim/simulator.hpp"
#include "prefillsim/threshold.hpp"
#include "prefillsim/trace_io.hpp"
#include "prefillsim/workload.hpp"

namespace prefillsim {

struct MetricsRow {
  std::string strategy;
  std::uint32_t gpus = 0;
  bool feasible = false;
  std::optional<double> throughput_tokens_per_s;
  std::optional<double> mfu;
  std::optional<double> elapsed_s;
  std::optional<double> stall_s;
  Bytes peak_hbm_bytes = 0;
  std::string note;  // infeasibility reason or cell error

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Extra per-cell detail, useful for inspection and tests.
struct CellStats {
  std::uint64_t rounds = 0;
  std::uint64_t prompt_tokens = 0;    // every token of every request
  std::uint64_t executed_tokens = 0;  // after prefix-cache credit
  double achieved_flops = 0.0;
  double threshold = 0.0;             // per engine, FLOPs
  ThresholdCalibration calibration;
};

/// Materializes the workload of a configuration.
inline Trace build_trace(const ExperimentConfig& c) {
  GenOptions opts;
  opts.block_size = c.scheduler.block_size;
  opts.arrival_rate = c.workload.arrival_rate;
  const std::uint64_t seed = detail::derive_seed(c.seed, 0x7ACEULL);
  switch (c.workload.kind) {
    case WorkloadKind::trace: {
      Trace t = read_trace(c.workload.trace_path);
      if (t.block_size != c.scheduler.block_size) {
        throw ConfigError("scheduler.block_size", "trace was written with block_size " +
                                                      std::to_string(t.block_size));
      }
      return t;
    }
    case WorkloadKind::synthetic:
      return gen_synthetic(c.workload.regime, c.workload.prefix_share, c.workload.group_size, seed,
                           opts);
    case WorkloadKind::mixture:
      return gen_mixture(c.workload.components, c.workload.total_tokens, seed, opts);
  }
  return {};
}

namespace detail {

inline std::uint64_t max_request_tokens(const Trace& t) {
  std::uint64_t m = 0;
  for (const Request& r : t.requests) m = std::max(m, r.total_tokens());
  return m;
}

}  // namespace detail

/// Runs one (strategy, P) cell over `trace`.
inline MetricsRow run_cell(const ExperimentConfig& c, const Strategy& s, std::uint32_t devices,
                           const Trace& trace, CellStats* stats = nullptr) {
  MetricsRow row;
  row.strategy = std::string(to_string(s.kind));
  row.gpus = devices;
  CellStats local;
  CellStats& st = stats ? *stats : local;
  st = CellStats{};

  ClusterConfig cluster = c.cluster;
  cluster.devices = devices;
  const bool kv_free = c.kv_free && is_asyncep(s.kind);
  const ModelConfig& cfg = c.model;

  const std::uint64_t s_max = detail::max_request_tokens(trace);
  const FeasibilityReport fr =
      feasibility_check(s, devices, BatchShape{1, s_max}, cfg, cluster, kv_free);
  row.peak_hbm_bytes = fr.breakdown.required();
  if (!fr.feasible) {
    row.note = fr.reason;
    return row;
  }
  if (trace.requests.empty()) {
    row.note = "empty trace";
    return row;
  }

  // Router setup: one engine per device under DP attention, otherwise one
  // engine spanning all devices with a P-fold budget.
  const std::uint32_t engines = engine_count(s.kind, devices);
  const Bytes shard = batch_shard(s.kind, devices);
  RouterConfig rc;
  rc.engines = engines;
  rc.block_size = c.scheduler.block_size;
  rc.block_cost_bytes = kv_bytes(1, rc.block_size, cfg);
  rc.cache_budget_bytes = kv_free ? 0 : fr.breakdown.headroom * shard;
  rc.gamma = cluster.gamma;
  rc.n_ref = c.scheduler.n_ref;
  rc.threshold_scale = static_cast<double>(devices) / engines;
  rc.decay = c.scheduler.decay;
  rc.manual_threshold = c.scheduler.manual_threshold;
  RouterState router(cfg, rc);

  EventChannel channel;
  st.calibration = calibrate_threshold(s, cluster, cfg, c.scheduler.n_ref);
  if (c.scheduler.threshold == ThresholdMode::calibrated) {
    channel.push(ThresholdUpdate{st.calibration.t_c, st.calibration.t_e, st.calibration.c_dummy});
  }

  SimOptions opt;
  opt.kv_free = kv_free;
  opt.record_events = false;

  double elapsed = 0.0, stall = 0.0;
  Bytes peak = row.peak_hbm_bytes;
  std::vector<DeviceBatch> batches(engines);
  const std::span<const Request> queue(trace.requests);
  std::size_t pos = 0;
  try {
    while (pos < queue.size()) {
      router.drain(channel);
      st.threshold = router.threshold();
      const auto assigned = router.schedule_round(queue.subspan(pos));
      if (assigned.empty()) throw std::logic_error("router made no progress");

      for (auto& b : batches) b.clear();
      for (std::size_t i = 0; i < assigned.size(); ++i) {
        const Assignment& a = assigned[i];
        const Request& r = queue[pos + i];
        batches[a.engine].push_back(WorkItem{r.id, r.prefix_len, a.matched_tokens, r.suffix_len});
        st.executed_tokens += a.executed_tokens;
        st.prompt_tokens += r.total_tokens();
      }

      for (const DeviceBatch& b : batches) {
        if (b.empty()) continue;
        const BatchTotals bt = totals(b, cfg);
        const FeasibilityReport rr =
            feasibility_check(s, devices, BatchShape{1, bt.context_tokens}, cfg, cluster, kv_free);
        if (!rr.feasible) throw InfeasibleError("round " + std::to_string(st.rounds) + ": " + rr.reason);
        peak = std::max(peak, rr.breakdown.required());
      }

      opt.skew_stream = st.rounds * cfg.layers;
      const auto tls = simulate_batch(s, batches, cluster, cfg, c.skew, opt);
      elapsed += tls.front().elapsed_s;
      for (const Timeline& t : tls) {
        stall += t.stall_s;
        st.achieved_flops += t.achieved_flops;
      }

      // Engines report completion in execution order.
      for (std::size_t i = 0; i < assigned.size(); ++i) {
        const Assignment& a = assigned[i];
        const Request& r = queue[pos + i];
        channel.push(Progress{a.engine, r.id, a.executed_tokens});
        const std::size_t from = std::min<std::size_t>(a.matched_blocks, r.prefix_blocks.size());
        std::vector<BlockHash> fresh(r.prefix_blocks.begin() + static_cast<std::ptrdiff_t>(from),
                                     r.prefix_blocks.end());
        if (fresh.empty()) continue;
        if (kv_free) {
          channel.push(BlocksStored{a.engine, fresh});
          channel.push(BlocksEvicted{a.engine, std::move(fresh)});
        } else {
          channel.push(BlocksStored{a.engine, std::move(fresh)});
        }
      }
      pos += assigned.size();
      ++st.rounds;
    }
    router.drain(channel);
  } catch (const InfeasibleError& e) {
    row.note = e.what();
    return row;
  }

  row.feasible = true;
  row.elapsed_s = elapsed;
  row.stall_s = stall;
  row.throughput_tokens_per_s = static_cast<double>(st.prompt_tokens) / elapsed;
  row.mfu = st.achieved_flops / (elapsed * static_cast<double>(devices) * cluster.peak_flops);
  row.peak_hbm_bytes = peak;
  return row;
}

/// Every cell of the sweep, ordered by strategy (config order) then P.
/// Errors inside a cell are recorded in its row and do not stop the sweep.
inline std::vector<MetricsRow> run_experiment(const ExperimentConfig& c, const Trace& trace) {
  std::vector<MetricsRow> rows;
  for (const Strategy& s : c.strategies) {
    for (std::uint32_t p : c.gpus) {
      try {
        rows.push_back(run_cell(c, s, p, trace));
      } catch (const std::exception& e) {
        MetricsRow r;
        r.strategy = std::string(to_string(s.kind));
        r.gpus = p;
        r.note = std::string("error: ") + e.what();
        rows.push_back(r);
      }
    }
  }
  return rows;
}

inline std::vector<MetricsRow> run_experiment(const ExperimentConfig& c) {
  return run_experiment(c, build_trace(c));
}

}  // namespace prefillsim
