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

// Saturation-based, prefix-aware router.
//
// Loads are integer FLOP counters: each assignment adds round(cost_delta) and
// every discharge subtracts an integer amount, so the sum of loads equals
// enqueued minus discharged work exactly at all times.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "absl/container/flat_hash_map.h"
#include "prefillsim/block_table.hpp"
#include "prefillsim/cost_model.hpp"
#include "prefillsim/detail/checked.hpp"
#include "prefillsim/engine_events.hpp"
#include "prefillsim/request.hpp"
#include "prefillsim/threshold.hpp"

namespace prefillsim {

/// How progress events discharge load. `prorated` subtracts the executed
/// fraction of the request's recorded increment; `literal_ftok` subtracts
/// tokens * f_tok floored at zero.
enum class DecayMode { prorated, literal_ftok };

enum class ThresholdSource { fallback, calibration, manual };

struct RouterConfig {
  std::uint32_t engines = 1;
  std::uint64_t block_size = 16;
  Bytes cache_budget_bytes = 0;  // committed-table budget per engine
  Bytes block_cost_bytes = 0;    // KV bytes of one block
  double gamma = 1.2;
  std::uint64_t n_ref = 16384;
  double threshold_scale = 1.0;  // an engine spanning P devices saturates at P * T
  DecayMode decay = DecayMode::prorated;
  std::optional<double> manual_threshold;
};

struct Assignment {
  std::uint64_t request_id = 0;
  std::uint32_t engine = 0;
  std::uint64_t matched_blocks = 0;
  std::uint64_t matched_tokens = 0;  // M, capped at the prefix length
  std::uint64_t delta = 0;           // load increment, FLOPs
  std::uint64_t executed_tokens = 0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

class RouterState {
 public:
  RouterState(const ModelConfig& cfg, RouterConfig rc) : cfg_(cfg), rc_(rc) {
    validate(cfg_);
    if (rc_.engines < 1) throw std::invalid_argument("RouterState: need at least one engine");
    if (rc_.block_size < 1) throw std::invalid_argument("RouterState: block_size must be >= 1");
    if (!(rc_.threshold_scale > 0.0)) {
      throw std::invalid_argument("RouterState: threshold_scale must be positive");
    }
    f_tok_ = f_tok(cfg_);
    loads_.assign(rc_.engines, 0);
    tables_.assign(rc_.engines, BlockTable(rc_.cache_budget_bytes, rc_.block_cost_bytes));
    threshold_ = fallback_threshold(rc_.gamma, cfg_, rc_.n_ref);
    if (rc_.manual_threshold) pin_threshold(*rc_.manual_threshold);
  }

  // -- threshold -----------------------------------------------------------

  /// Per-engine saturation point in FLOPs (base threshold times scale).
  double threshold() const { return threshold_ * rc_.threshold_scale; }
  double base_threshold() const { return threshold_; }
  ThresholdSource threshold_source() const { return source_; }

  void pin_threshold(double t) {
    if (!(t > 0.0)) throw std::invalid_argument("RouterState: threshold must be positive");
    threshold_ = t;
    source_ = ThresholdSource::manual;
  }

  /// Installs a calibration payload unless the operator pinned a value.
  void install_calibration(const ThresholdUpdate& u) {
    const double t = calibrated_threshold(rc_.gamma, u.t_c, u.t_e, u.c_dummy);
    if (!(t > 0.0)) throw std::invalid_argument("RouterState: calibrated threshold must be positive");
    if (source_ == ThresholdSource::manual) return;
    threshold_ = t;
    source_ = ThresholdSource::calibration;
  }

  // -- state ---------------------------------------------------------------

  std::uint32_t engines() const { return rc_.engines; }
  const std::vector<std::uint64_t>& loads() const { return loads_; }
  std::uint64_t load(std::uint32_t engine) const { return loads_.at(engine); }
  const BlockTable& table(std::uint32_t engine) const { return tables_.at(engine); }
  bool saturated(std::uint32_t engine) const {
    return static_cast<double>(loads_.at(engine)) >= threshold();
  }
  const RouterConfig& config() const { return rc_; }

  detail::u128 enqueued_total() const { return enqueued_; }
  detail::u128 discharged_total() const { return discharged_; }
  detail::u128 load_total() const {
    detail::u128 s = 0;
    for (std::uint64_t l : loads_) s += l;
    return s;
  }
  std::size_t outstanding_requests() const { return outstanding_.size(); }

  // -- routing -------------------------------------------------------------

  /// One saturation round over `queue` in order. Stops when every engine is
  /// saturated or the queue is exhausted; the assigned requests are always a
  /// prefix of the queue.
  std::vector<Assignment> schedule_round(std::span<const Request> queue) {
    std::vector<Assignment> out;
    std::vector<std::uint32_t> active;
    for (std::uint32_t i = 0; i < rc_.engines; ++i) {
      if (!saturated(i)) active.push_back(i);
    }
    for (const Request& r : queue) {
      if (active.empty()) break;
      validate_chain(r, rc_.block_size);
      if (outstanding_.count(r.id) != 0) {
        throw std::invalid_argument("RouterState: request " + std::to_string(r.id) +
                                    " is already in flight");
      }
      std::uint32_t best = active.front();
      std::size_t best_m = 0;
      bool first = true;
      for (std::uint32_t i : active) {
        const std::size_t m = tables_[i].longest_match(r.prefix_blocks);
        if (first || m > best_m || (m == best_m && loads_[i] < loads_[best])) {
          best = i;
          best_m = m;
          first = false;
        }
      }
      out.push_back(assign(r, best, best_m));
      if (saturated(best)) std::erase(active, best);
    }
    return out;
  }

  /// Applies a routing decision made elsewhere (or replays one).
  Assignment assign(const Request& r, std::uint32_t engine, std::size_t matched_blocks) {
    if (engine >= rc_.engines) throw std::out_of_range("RouterState: engine out of range");
    validate_chain(r, rc_.block_size);
    Assignment a;
    a.request_id = r.id;
    a.engine = engine;
    a.matched_blocks = matched_blocks;
    a.matched_tokens = std::min<std::uint64_t>(matched_blocks * rc_.block_size, r.prefix_len);
    const double d = cost_delta(r.prefix_len, a.matched_tokens, r.suffix_len, cfg_);
    a.delta = static_cast<std::uint64_t>(std::llround(d));
    a.executed_tokens = r.prefix_len - a.matched_tokens + r.suffix_len;

    loads_[engine] += a.delta;
    enqueued_ += a.delta;
    const std::span<const BlockHash> chain(r.prefix_blocks);
    tables_[engine].add_pending(chain.subspan(std::min(matched_blocks, chain.size())), r.id);
    outstanding_[r.id] = Outstanding{engine, a.delta, a.executed_tokens, 0, 0};
    return a;
  }

  // -- engine events -------------------------------------------------------

  void on_engine_event(const EngineEvent& ev) {
    std::visit([this](const auto& e) { handle(e); }, ev);
  }

  /// Applies every queued event in order.
  void drain(EventChannel& ch) {
    while (auto ev = ch.pop()) on_engine_event(*ev);
  }

 private:
  struct Outstanding {
    std::uint32_t engine;
    std::uint64_t delta;
    std::uint64_t executed_tokens;
    std::uint64_t progressed_tokens;
    std::uint64_t discharged;
  };

  void check_engine(std::uint32_t e) const {
    if (e >= rc_.engines) throw std::out_of_range("RouterState: event for unknown engine");
  }

  std::uint64_t discharge(std::uint32_t engine, std::uint64_t amount) {
    amount = std::min(amount, loads_[engine]);
    loads_[engine] -= amount;
    discharged_ += amount;
    return amount;
  }

  void handle(const BlocksStored& e) {
    check_engine(e.engine);
    tables_[e.engine].store(e.hashes);
  }

  void handle(const BlocksEvicted& e) {
    check_engine(e.engine);
    tables_[e.engine].evict(e.hashes);
  }

  void handle(const ThresholdUpdate& e) { install_calibration(e); }

  void handle(const Progress& e) {
    check_engine(e.engine);
    auto it = outstanding_.find(e.request_id);
    const auto literal = [&] {
      const double f = static_cast<double>(e.tokens) * f_tok_;
      return static_cast<std::uint64_t>(std::llround(std::min(f, 1.8e19)));
    };
    if (it == outstanding_.end() || it->second.engine != e.engine) {
      discharge(e.engine, literal());
      return;
    }
    Outstanding& o = it->second;
    o.progressed_tokens = std::min(o.executed_tokens, o.progressed_tokens + e.tokens);
    const bool done = o.progressed_tokens >= o.executed_tokens;
    if (rc_.decay == DecayMode::literal_ftok) {
      o.discharged += discharge(e.engine, literal());
    } else {
      std::uint64_t target = o.delta;
      if (!done) {
        const detail::u128 num = static_cast<detail::u128>(o.delta) * o.progressed_tokens;
        target = static_cast<std::uint64_t>(num / o.executed_tokens);
      }
      if (target > o.discharged) o.discharged += discharge(e.engine, target - o.discharged);
    }
    if (done) outstanding_.erase(it);
  }

  void handle(const RequestAborted& e) {
    check_engine(e.engine);
    tables_[e.engine].abort(e.request_id);
    auto it = outstanding_.find(e.request_id);
    if (it == outstanding_.end() || it->second.engine != e.engine) return;
    const Outstanding& o = it->second;
    if (o.delta > o.discharged) discharge(e.engine, o.delta - o.discharged);
    outstanding_.erase(it);
  }

  ModelConfig cfg_;
  RouterConfig rc_;
  double f_tok_ = 0.0;
  double threshold_ = 0.0;
  ThresholdSource source_ = ThresholdSource::fallback;
  std::vector<std::uint64_t> loads_;
  std::vector<BlockTable> tables_;
  absl::flat_hash_map<std::uint64_t, Outstanding> outstanding_;
  detail::u128 enqueued_ = 0;
  detail::u128 discharged_ = 0;
};

}  // namespace prefillsim
