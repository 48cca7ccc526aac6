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

// Layer-level timing of one scheduled batch under a parallel strategy.
//
// Work model. A batch's cost-model FLOPs are split into three per-layer
// streams: expert GEMMs (on MoE layers only, fixed FLOPs per token), the
// remaining linear work spread evenly over all layers, and the quadratic
// attention term spread evenly over all layers. Compute time for a slice of
// work is flops / (peak * gemm_efficiency(tokens)).
//
// Synchronous strategies end every layer with a barrier followed by their
// on-path collective. AsyncEP devices run independently; each layer's expert
// weights arrive through a background pipeline (PCIe prefetch of a 1/P shard,
// then an NVLink gather into a double-buffered staging area).

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefillsim/cluster.hpp"
#include "prefillsim/comm_model.hpp"
#include "prefillsim/cost_model.hpp"
#include "prefillsim/feasibility.hpp"
#include "prefillsim/skew.hpp"
#include "prefillsim/timeline.hpp"

namespace prefillsim {

struct SimOptions {
  bool kv_free = false;
  bool record_events = true;
  bool check_feasibility = true;
  std::uint64_t skew_stream = 0;  // base stream id; layer l draws from skew_stream + l
};

namespace detail {

struct WorkSplit {
  double tokens = 0.0;
  double flops = 0.0;           // exact cost-model total
  double shared_per_layer = 0.0;  // non-expert linear + attention, every layer
  double expert_per_layer = 0.0;  // MoE layers only
};

inline WorkSplit split_work(const BatchTotals& t, const ModelConfig& cfg) {
  WorkSplit w;
  w.tokens = static_cast<double>(t.executed_tokens);
  w.flops = t.flops;
  const double linear = w.tokens * f_tok(cfg);
  const double quad = std::max(0.0, t.flops - linear);
  w.expert_per_layer = w.tokens * expert_flops_per_token_layer(cfg);
  const double expert_total = w.expert_per_layer * static_cast<double>(cfg.moe_layers);
  const double dense = std::max(0.0, linear - expert_total);
  w.shared_per_layer = (dense + quad) / static_cast<double>(cfg.layers);
  return w;
}

inline double seconds(double flops, double tokens, const ClusterConfig& c) {
  if (flops <= 0.0) return 0.0;
  return flops / (c.peak_flops * efficiency(tokens, c));
}

class EventSink {
 public:
  EventSink(Timeline& t, bool on) : t_(t), on_(on) {}
  void add(std::uint32_t layer, EventKind kind, double start, double end) {
    if (on_ && end > start) t_.events.push_back({t_.device, layer, kind, start, end});
  }

 private:
  Timeline& t_;
  bool on_;
};

// Half-open expert range [lo, hi) owned by `device` under contiguous placement.
inline std::pair<std::uint64_t, std::uint64_t> expert_block(std::uint64_t experts,
                                                             std::uint32_t devices,
                                                             std::uint32_t device) {
  return {experts * device / devices, experts * (device + 1) / devices};
}

// Dense (non-MoE) layers have no expert dispatch; an EP strategy falls back to
// its non-EP sibling's collective there.
inline StrategyKind dense_layer_kind(StrategyKind k) {
  switch (k) {
    case StrategyKind::dp_ep: return StrategyKind::dp_dp;
    case StrategyKind::tp_ep: return StrategyKind::tp_tp;
    case StrategyKind::sp_ep: return StrategyKind::sp_tp;
    default: return k;
  }
}

inline double collective_seconds(StrategyKind k, std::uint32_t devices, std::uint64_t tokens,
                                 const ModelConfig& cfg, const LinkModel& link) {
  const Bytes bytes = per_layer_comm_bytes(k, devices, 1, tokens, cfg);
  return bytes > 0 ? transfer_time(bytes, link.nvlink_bw, link.latency_floor) : 0.0;
}

// Routed token-expert pairs landing on each device for one MoE layer.
inline std::vector<std::uint64_t> device_expert_loads(std::uint64_t tokens, std::uint32_t devices,
                                                      const ModelConfig& cfg,
                                                      const SkewModel& skew,
                                                      std::uint64_t stream) {
  const auto loads = draw_expert_loads(tokens, cfg.experts, cfg.top_k, skew, stream);
  std::vector<std::uint64_t> per_device(devices, 0);
  for (std::uint32_t d = 0; d < devices; ++d) {
    const auto [lo, hi] = expert_block(cfg.experts, devices, d);
    for (std::uint64_t e = lo; e < hi; ++e) per_device[d] += loads[e];
  }
  return per_device;
}

// Background expert pipeline of one AsyncEP device. `compute_s[l]` is the
// layer's pure compute time. Fills layer records and returns the finish time.
inline double run_async_pipeline(const Strategy& s, std::uint32_t devices, const ModelConfig& cfg,
                                 const ClusterConfig& cluster, std::span<const double> compute_s,
                                 Timeline& out, bool record) {
  const std::size_t L = compute_s.size();
  const std::size_t Lm = std::min<std::size_t>(cfg.moe_layers, L);
  const double g = devices > 1 ? transfer_time(asyncep_gather_bytes(devices, cfg),
                                               cluster.link.nvlink_bw, cluster.link.latency_floor)
                               : 0.0;
  const double h = s.offload ? transfer_time(offload_h2d_bytes(devices, cfg, out.device),
                                             cluster.link.pcie_bw, cluster.link.latency_floor)
                             : 0.0;
  const std::size_t w = s.window;
  EventSink sink(out, record);

  std::vector<double> gather_done(Lm, 0.0), h2d_done(Lm, 0.0);
  std::vector<double> gather_len(Lm, 0.0), h2d_len(Lm, 0.0);
  double nv_free = 0.0, pcie_free = 0.0;
  // Layers 1..w arrive primed from the previous forward pass.
  std::size_t next_h2d = s.offload ? std::min(w, Lm == 0 ? 0 : Lm - 1) + 1 : Lm;

  auto issue_h2d_through = [&](std::size_t j) {
    for (; next_h2d <= j && next_h2d < Lm; ++next_h2d) {
      const std::size_t jj = next_h2d;
      const double slot_free = jj > w ? gather_done[jj - w] : 0.0;
      const double start = std::max(pcie_free, slot_free);
      h2d_done[jj] = start + h;
      h2d_len[jj] = h;
      pcie_free = h2d_done[jj];
      sink.add(static_cast<std::uint32_t>(jj), EventKind::h2d, start, h2d_done[jj]);
    }
  };

  out.layers.assign(L, LayerRecord{});
  double prev_end = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double ready = (l >= 1 && l < Lm) ? gather_done[l] : 0.0;
    const double start = std::max(prev_end, ready);
    const double end = start + compute_s[l];
    LayerRecord& rec = out.layers[l];
    rec.layer = static_cast<std::uint32_t>(l);
    rec.start_s = start;
    rec.end_s = end;
    rec.compute_s = compute_s[l];
    rec.stall_s = start - prev_end;
    sink.add(rec.layer, EventKind::stall, prev_end, start);
    sink.add(rec.layer, EventKind::compute, start, end);

    if (l + 1 < Lm) {
      const std::size_t j = l + 1;
      if (s.offload) issue_h2d_through(j);
      // The staging buffer for j frees once layer j-2 finished, i.e. at start.
      const double gs = std::max({start, nv_free, h2d_done[j]});
      gather_done[j] = gs + g;
      gather_len[j] = g;
      nv_free = gather_done[j];
      sink.add(static_cast<std::uint32_t>(j), EventKind::gather, gs, gather_done[j]);
    }
    prev_end = end;
  }
  for (std::size_t l = 0; l < Lm; ++l) {
    out.layers[l].gather_s = gather_len[l];
    out.layers[l].h2d_s = h2d_len[l];
  }
  return prev_end;
}

inline std::vector<Timeline> make_timelines(std::uint32_t devices) {
  std::vector<Timeline> out(devices);
  for (std::uint32_t d = 0; d < devices; ++d) out[d].device = d;
  return out;
}

inline void finalize(std::vector<Timeline>& tls, bool record) {
  double makespan = 0.0;
  for (const Timeline& t : tls) makespan = std::max(makespan, t.busy_until_s);
  for (Timeline& t : tls) {
    t.compute_s = t.onpath_comm_s = t.stall_s = t.idle_s = 0.0;
    for (const LayerRecord& r : t.layers) {
      t.compute_s += r.compute_s;
      t.onpath_comm_s += r.onpath_comm_s;
      t.stall_s += r.stall_s;
      t.idle_s += r.idle_s;
    }
    t.elapsed_s = makespan;
    t.idle_s += makespan - t.busy_until_s;
    if (record && makespan > t.busy_until_s) {
      const std::uint32_t last = t.layers.empty() ? 0 : t.layers.back().layer;
      t.events.push_back({t.device, last, EventKind::idle, t.busy_until_s, makespan});
    }
  }
}

// DP attention with per-device batches: dp_dp, dp_tp, dp_ep, dp_asyncep.
inline std::vector<Timeline> simulate_dp(const Strategy& s, std::span<const DeviceBatch> batches,
                                         const ClusterConfig& cluster, const ModelConfig& cfg,
                                         const SkewModel& skew, const SimOptions& opt) {
  const std::uint32_t P = cluster.devices;
  const std::size_t L = cfg.layers;
  auto tls = make_timelines(P);
  std::vector<WorkSplit> work(P);
  std::uint64_t global_tokens = 0;
  std::uint64_t max_tokens = 0;
  for (std::uint32_t d = 0; d < P; ++d) {
    const BatchTotals bt = totals(batches[d], cfg);
    work[d] = split_work(bt, cfg);
    tls[d].achieved_flops = bt.flops;
    global_tokens += bt.executed_tokens;
    max_tokens = std::max(max_tokens, bt.executed_tokens);
  }

  if (s.kind == StrategyKind::dp_dp || s.kind == StrategyKind::dp_asyncep) {
    for (std::uint32_t d = 0; d < P; ++d) {
      std::vector<double> c(L, 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        const double f = work[d].shared_per_layer + (l < cfg.moe_layers ? work[d].expert_per_layer : 0.0);
        c[l] = seconds(f, work[d].tokens, cluster);
      }
      if (s.kind == StrategyKind::dp_asyncep) {
        tls[d].busy_until_s = run_async_pipeline(s, P, cfg, cluster, c, tls[d], opt.record_events);
      } else {
        EventSink sink(tls[d], opt.record_events);
        tls[d].layers.resize(L);
        double t = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
          LayerRecord& r = tls[d].layers[l];
          r.layer = static_cast<std::uint32_t>(l);
          r.start_s = t;
          r.compute_s = c[l];
          r.end_s = t + c[l];
          sink.add(r.layer, EventKind::compute, t, r.end_s);
          t = r.end_s;
        }
        tls[d].busy_until_s = t;
      }
    }
    finalize(tls, opt.record_events);
    return tls;
  }

  // dp_tp / dp_ep: per-layer barrier then collective.
  const double comm_moe = collective_seconds(s.kind, P, max_tokens, cfg, cluster.link);
  const double comm_dense =
      collective_seconds(dense_layer_kind(s.kind), P, max_tokens, cfg, cluster.link);
  const double pair_flops = expert_flops_per_token_layer(cfg) / static_cast<double>(cfg.top_k);
  const double tp_tokens = static_cast<double>(global_tokens) / P;
  double expert_sum = 0.0;
  for (const WorkSplit& w : work) expert_sum += w.expert_per_layer;

  for (Timeline& t : tls) t.layers.resize(L);
  double t0 = 0.0;
  std::vector<double> c(P);
  for (std::size_t l = 0; l < L; ++l) {
    const bool moe = l < cfg.moe_layers;
    const double comm = moe ? comm_moe : comm_dense;
    std::vector<std::uint64_t> pairs;
    if (moe && s.kind == StrategyKind::dp_ep) {
      pairs = device_expert_loads(global_tokens, P, cfg, skew, opt.skew_stream + l);
    }
    double slowest = 0.0;
    for (std::uint32_t d = 0; d < P; ++d) {
      c[d] = seconds(work[d].shared_per_layer, work[d].tokens, cluster);
      if (moe) {
        if (s.kind == StrategyKind::dp_ep) {
          c[d] += seconds(static_cast<double>(pairs[d]) * pair_flops, work[d].tokens, cluster);
        } else {
          c[d] += seconds(expert_sum / P, tp_tokens, cluster);
        }
      }
      slowest = std::max(slowest, c[d]);
    }
    for (std::uint32_t d = 0; d < P; ++d) {
      LayerRecord& r = tls[d].layers[l];
      r.layer = static_cast<std::uint32_t>(l);
      r.start_s = t0;
      r.end_s = t0 + slowest + comm;
      r.compute_s = c[d];
      r.idle_s = slowest - c[d];
      r.onpath_comm_s = comm;
      EventSink sink(tls[d], opt.record_events);
      sink.add(r.layer, EventKind::compute, t0, t0 + c[d]);
      sink.add(r.layer, EventKind::idle, t0 + c[d], t0 + slowest);
      sink.add(r.layer, EventKind::onpath_comm, t0 + slowest, r.end_s);
    }
    t0 += slowest + comm;
  }
  for (Timeline& t : tls) t.busy_until_s = t0;
  finalize(tls, opt.record_events);
  return tls;
}

// One engine spanning all devices: tp_tp, tp_ep, sp_tp, sp_ep.
inline std::vector<Timeline> simulate_group(const Strategy& s, const DeviceBatch& batch,
                                            const ClusterConfig& cluster, const ModelConfig& cfg,
                                            const SkewModel& skew, const SimOptions& opt) {
  const std::uint32_t P = cluster.devices;
  const std::size_t L = cfg.layers;
  auto tls = make_timelines(P);
  const BatchTotals bt = totals(batch, cfg);
  const WorkSplit w = split_work(bt, cfg);
  const double shard_tokens = w.tokens / P;
  for (Timeline& t : tls) {
    t.achieved_flops = bt.flops / P;
    t.layers.resize(L);
  }
  const double comm_moe = collective_seconds(s.kind, P, bt.executed_tokens, cfg, cluster.link);
  const double comm_dense =
      collective_seconds(dense_layer_kind(s.kind), P, bt.executed_tokens, cfg, cluster.link);
  const bool ep = has_sync_ep(s.kind);
  const double pair_flops = expert_flops_per_token_layer(cfg) / static_cast<double>(cfg.top_k);

  double t0 = 0.0;
  std::vector<double> c(P);
  for (std::size_t l = 0; l < L; ++l) {
    const bool moe = l < cfg.moe_layers;
    const double comm = moe ? comm_moe : comm_dense;
    std::vector<std::uint64_t> pairs;
    if (moe && ep) pairs = device_expert_loads(bt.executed_tokens, P, cfg, skew, opt.skew_stream + l);
    double slowest = 0.0;
    for (std::uint32_t d = 0; d < P; ++d) {
      double f = w.shared_per_layer / P;
      double expert = 0.0;
      if (moe) expert = ep ? static_cast<double>(pairs[d]) * pair_flops : w.expert_per_layer / P;
      c[d] = seconds(f + expert, shard_tokens, cluster);
      slowest = std::max(slowest, c[d]);
    }
    for (std::uint32_t d = 0; d < P; ++d) {
      LayerRecord& r = tls[d].layers[l];
      r.layer = static_cast<std::uint32_t>(l);
      r.start_s = t0;
      r.end_s = t0 + slowest + comm;
      r.compute_s = c[d];
      r.idle_s = slowest - c[d];
      r.onpath_comm_s = comm;
      EventSink sink(tls[d], opt.record_events);
      sink.add(r.layer, EventKind::compute, t0, t0 + c[d]);
      sink.add(r.layer, EventKind::idle, t0 + c[d], t0 + slowest);
      sink.add(r.layer, EventKind::onpath_comm, t0 + slowest, r.end_s);
    }
    t0 += slowest + comm;
  }
  for (Timeline& t : tls) t.busy_until_s = t0;
  finalize(tls, opt.record_events);
  return tls;
}

// Pipeline parallelism: P stages of contiguous layers, P equal microbatches.
// Later stages see a larger share of the quadratic attention work (weight
// 2s+1 out of P^2), standing in for the position-dependent imbalance of
// long-context pipelines.
inline std::vector<Timeline> simulate_pipeline(const DeviceBatch& batch,
                                               const ClusterConfig& cluster,
                                               const ModelConfig& cfg, const SimOptions& opt) {
  const std::uint32_t P = cluster.devices;
  const std::uint32_t m = P;
  auto tls = make_timelines(P);
  const BatchTotals bt = totals(batch, cfg);
  const double tokens = static_cast<double>(bt.executed_tokens);
  const double linear = tokens * f_tok(cfg);
  const double quad = std::max(0.0, bt.flops - linear);
  const double expert_layer = tokens * expert_flops_per_token_layer(cfg);
  const double dense_layer =
      std::max(0.0, linear - expert_layer * static_cast<double>(cfg.moe_layers)) /
      static_cast<double>(cfg.layers);
  const double mb_tokens = tokens / m;
  const std::uint64_t mb_tokens_ceil = (bt.executed_tokens + m - 1) / m;
  const Bytes send_bytes = P > 1 ? per_layer_comm_bytes(StrategyKind::pp_pp, P, 1, mb_tokens_ceil, cfg) : 0;
  const double send = send_bytes > 0 ? transfer_time(send_bytes, cluster.link.nvlink_bw,
                                                     cluster.link.latency_floor)
                                     : 0.0;

  std::vector<std::uint64_t> lo(P), hi(P);
  std::vector<double> stage_flops(P), compute(P), comm(P), occupancy(P);
  for (std::uint32_t s = 0; s < P; ++s) {
    lo[s] = cfg.layers * s / P;
    hi[s] = cfg.layers * (s + 1) / P;
    const double n_layers = static_cast<double>(hi[s] - lo[s]);
    const std::uint64_t moe_lo = std::min(lo[s], cfg.moe_layers);
    const std::uint64_t moe_hi = std::min(hi[s], cfg.moe_layers);
    const double n_moe = static_cast<double>(moe_hi - moe_lo);
    const double attn_share = static_cast<double>(2 * s + 1) / (static_cast<double>(P) * P);
    stage_flops[s] = dense_layer * n_layers + expert_layer * n_moe + quad * attn_share;
    compute[s] = seconds(stage_flops[s] / m, mb_tokens, cluster);
    comm[s] = s + 1 < P ? send : 0.0;
    occupancy[s] = compute[s] + comm[s];
    tls[s].achieved_flops = stage_flops[s];
  }

  // Permutation flow shop: finish[j][s] = max(finish[j-1][s], finish[j][s-1]) + occupancy[s].
  std::vector<std::vector<double>> finish(m, std::vector<double>(P, 0.0));
  for (std::uint32_t j = 0; j < m; ++j) {
    for (std::uint32_t s = 0; s < P; ++s) {
      const double a = j > 0 ? finish[j - 1][s] : 0.0;
      const double b = s > 0 ? finish[j][s - 1] : 0.0;
      finish[j][s] = std::max(a, b) + occupancy[s];
    }
  }

  for (std::uint32_t s = 0; s < P; ++s) {
    Timeline& t = tls[s];
    EventSink sink(t, opt.record_events);
    const std::uint64_t n = hi[s] - lo[s];
    const double per_layer = n > 0 ? compute[s] / static_cast<double>(n) : 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      LayerRecord r;
      r.layer = static_cast<std::uint32_t>(lo[s] + i);
      r.compute_s = per_layer * m;
      r.start_s = finish[0][s] - occupancy[s] + per_layer * static_cast<double>(i);
      r.end_s = finish[m - 1][s] - occupancy[s] + per_layer * static_cast<double>(i + 1);
      if (i + 1 == n) {
        r.onpath_comm_s = comm[s] * m;
        r.end_s += comm[s];
      }
      t.layers.push_back(r);
    }
    if (opt.record_events) {
      for (std::uint32_t j = 0; j < m; ++j) {
        const double st = finish[j][s] - occupancy[s];
        for (std::uint64_t i = 0; i < n; ++i) {
          const double a = st + per_layer * static_cast<double>(i);
          sink.add(static_cast<std::uint32_t>(lo[s] + i), EventKind::compute, a, a + per_layer);
        }
        if (n > 0) {
          sink.add(static_cast<std::uint32_t>(hi[s] - 1), EventKind::onpath_comm,
                   st + compute[s], finish[j][s]);
        }
      }
    }
    // Pipeline bubbles are idle time on the stage's own layers.
    const double busy = occupancy[s] * m;
    const double span = finish[m - 1][P - 1];
    if (!t.layers.empty()) t.layers.front().idle_s = span - busy;
    t.busy_until_s = span;
  }
  finalize(tls, opt.record_events);
  return tls;
}

}  // namespace detail

/// Simulates one scheduling round. `engine_batches` holds one batch per
/// engine (P for DP-attention strategies, otherwise 1); the result holds one
/// timeline per device. Throws InfeasibleError when an engine batch does not
/// fit in HBM and std::invalid_argument when every batch is empty.
inline std::vector<Timeline> simulate_batch(const Strategy& s,
                                            std::span<const DeviceBatch> engine_batches,
                                            const ClusterConfig& cluster, const ModelConfig& cfg,
                                            const SkewModel& skew, const SimOptions& opt = {}) {
  validate(s);
  validate(cluster);
  validate(cfg);
  validate(skew);
  const std::uint32_t P = cluster.devices;
  if (engine_batches.size() != engine_count(s.kind, P)) {
    throw std::invalid_argument("simulate_batch: expected " +
                                std::to_string(engine_count(s.kind, P)) + " engine batches for " +
                                std::string(to_string(s.kind)) + ", got " +
                                std::to_string(engine_batches.size()));
  }
  bool any = false;
  for (const DeviceBatch& b : engine_batches) {
    for (const WorkItem& w : b) {
      if (w.cached_tokens > w.prefix_len) {
        throw std::invalid_argument("simulate_batch: cached tokens exceed prefix length");
      }
      any = any || w.executed_tokens() > 0;
    }
  }
  if (!any) throw std::invalid_argument("simulate_batch: empty batch");

  if (opt.check_feasibility) {
    for (const DeviceBatch& b : engine_batches) {
      const BatchTotals bt = totals(b, cfg);
      const FeasibilityReport rep =
          feasibility_check(s, P, BatchShape{1, bt.context_tokens}, cfg, cluster, opt.kv_free);
      if (!rep.feasible) throw InfeasibleError(rep.reason);
    }
  }

  if (has_dp_attention(s.kind)) {
    return detail::simulate_dp(s, engine_batches, cluster, cfg, skew, opt);
  }
  if (s.kind == StrategyKind::pp_pp) {
    return detail::simulate_pipeline(engine_batches[0], cluster, cfg, opt);
  }
  return detail::simulate_group(s, engine_batches[0], cluster, cfg, skew, opt);
}

/// Background transfer time per layer that compute must cover for AsyncEP to
/// run stall-free: the gather alone without offload; with offload the slower
/// of the two channels when the window allows them to overlap (w >= 2), their
/// sum when it does not (w = 1).
inline double asyncep_transfer_budget(const Strategy& s, std::uint32_t devices,
                                      const ModelConfig& cfg, const LinkModel& link) {
  const double g = devices > 1 ? transfer_time(asyncep_gather_bytes(devices, cfg), link.nvlink_bw,
                                               link.latency_floor)
                               : 0.0;
  if (!s.offload) return g;
  const double h = transfer_time(offload_h2d_bytes(devices, cfg, 0), link.pcie_bw, link.latency_floor);
  return s.window >= 2 ? std::max(g, h) : g + h;
}

}  // namespace prefillsim
