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

// Engine -> router event stream.

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"
#include "prefillsim/block_hash.hpp"

namespace prefillsim {

struct BlocksStored {
  std::uint32_t engine = 0;
  std::vector<BlockHash> hashes;
  friend bool operator==(const BlocksStored&, const BlocksStored&) = default;
};

struct BlocksEvicted {
  std::uint32_t engine = 0;
  std::vector<BlockHash> hashes;
  friend bool operator==(const BlocksEvicted&, const BlocksEvicted&) = default;
};

/// `tokens` prompt tokens of `request_id` were executed by `engine`.
struct Progress {
  std::uint32_t engine = 0;
  std::uint64_t request_id = 0;
  std::uint64_t tokens = 0;
  friend bool operator==(const Progress&, const Progress&) = default;
};

/// Calibration payload: T = gamma * max(1, t_e / t_c) * c_dummy.
struct ThresholdUpdate {
  double t_c = 0.0;
  double t_e = 0.0;
  double c_dummy = 0.0;
  friend bool operator==(const ThresholdUpdate&, const ThresholdUpdate&) = default;
};

struct RequestAborted {
  std::uint32_t engine = 0;
  std::uint64_t request_id = 0;
  friend bool operator==(const RequestAborted&, const RequestAborted&) = default;
};

using EngineEvent = std::variant<BlocksStored, BlocksEvicted, Progress, ThresholdUpdate, RequestAborted>;

inline nlohmann::json to_json(const EngineEvent& ev) {
  return std::visit(
      [](const auto& e) -> nlohmann::json {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, BlocksStored>) {
          return {{"type", "blocks_stored"}, {"engine", e.engine}, {"hashes", e.hashes}};
        } else if constexpr (std::is_same_v<T, BlocksEvicted>) {
          return {{"type", "blocks_evicted"}, {"engine", e.engine}, {"hashes", e.hashes}};
        } else if constexpr (std::is_same_v<T, Progress>) {
          return {{"type", "progress"},
                  {"engine", e.engine},
                  {"request_id", e.request_id},
                  {"tokens", e.tokens}};
        } else if constexpr (std::is_same_v<T, ThresholdUpdate>) {
          return {{"type", "threshold"}, {"t_c", e.t_c}, {"t_e", e.t_e}, {"c_dummy", e.c_dummy}};
        } else {
          return {{"type", "request_aborted"}, {"engine", e.engine}, {"request_id", e.request_id}};
        }
      },
      ev);
}

inline EngineEvent event_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "blocks_stored") {
    return BlocksStored{j.at("engine").get<std::uint32_t>(), j.at("hashes").get<std::vector<BlockHash>>()};
  }
  if (type == "blocks_evicted") {
    return BlocksEvicted{j.at("engine").get<std::uint32_t>(), j.at("hashes").get<std::vector<BlockHash>>()};
  }
  if (type == "progress") {
    return Progress{j.at("engine").get<std::uint32_t>(), j.at("request_id").get<std::uint64_t>(),
                    j.at("tokens").get<std::uint64_t>()};
  }
  if (type == "threshold") {
    return ThresholdUpdate{j.at("t_c").get<double>(), j.at("t_e").get<double>(),
                           j.at("c_dummy").get<double>()};
  }
  if (type == "request_aborted") {
    return RequestAborted{j.at("engine").get<std::uint32_t>(), j.at("request_id").get<std::uint64_t>()};
  }
  throw std::invalid_argument("unknown engine event type: " + type);
}

/// Ordered in-process queue standing in for the engines' event sockets.
/// Owned by one thread at a time; FIFO order is the delivery order.
class EventChannel {
 public:
  void push(EngineEvent ev) { q_.push_back(std::move(ev)); }
  std::optional<EngineEvent> pop() {
    if (q_.empty()) return std::nullopt;
    EngineEvent ev = std::move(q_.front());
    q_.pop_front();
    return ev;
  }
  bool empty() const { return q_.empty(); }
  std::size_t size() const { return q_.size(); }

 private:
  std::deque<EngineEvent> q_;
};

}  // namespace prefillsim
