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

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace prefillsim {

enum class EventKind { compute, onpath_comm, gather, h2d, stall, idle };

inline constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::compute: return "compute";
    case EventKind::onpath_comm: return "onpath_comm";
    case EventKind::gather: return "gather";
    case EventKind::h2d: return "h2d";
    case EventKind::stall: return "stall";
    case EventKind::idle: return "idle";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (EventKind k : {EventKind::compute, EventKind::onpath_comm, EventKind::gather, EventKind::h2d,
                      EventKind::stall, EventKind::idle}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// One layer on one device. Durations are in seconds; start/end bracket the
/// layer's compute window (including any on-path collective).
struct LayerRecord {
  std::uint32_t layer = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double compute_s = 0.0;
  double onpath_comm_s = 0.0;
  double gather_s = 0.0;  // background D2D for this layer's experts
  double h2d_s = 0.0;     // background PCIe prefetch for this layer's shard
  double stall_s = 0.0;   // compute waiting on this layer's weights
  double idle_s = 0.0;    // waiting at a collective for slower devices

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct TimelineEvent {
  std::uint32_t device = 0;
  std::uint32_t layer = 0;
  EventKind kind = EventKind::compute;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const TimelineEvent&, const TimelineEvent&) = default;
};

struct Timeline {
  std::uint32_t device = 0;
  std::vector<LayerRecord> layers;
  std::vector<TimelineEvent> events;  // empty unless requested

  double elapsed_s = 0.0;       // batch makespan, shared by all devices of a run
  double busy_until_s = 0.0;    // this device's own finish time
  double achieved_flops = 0.0;
  double compute_s = 0.0;
  double onpath_comm_s = 0.0;
  double stall_s = 0.0;
  double idle_s = 0.0;

  friend bool operator==(const Timeline&, const Timeline&) = default;
};

inline nlohmann::json to_json(const TimelineEvent& e) {
  return nlohmann::json{{"device", e.device},
                        {"layer", e.layer},
                        {"kind", to_string(e.kind)},
                        {"start_s", e.start_s},
                        {"end_s", e.end_s}};
}

/// Line-delimited event log: one JSON object per event, devices in order.
inline void write_event_log(std::ostream& os, std::span<const Timeline> timelines) {
  for (const Timeline& t : timelines) {
    for (const TimelineEvent& e : t.events) os << to_json(e).dump() << '\n';
  }
}

}  // namespace prefillsim
