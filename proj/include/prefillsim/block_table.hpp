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
#include <deque>
#include <span>
#include "absl/container/flat_hash_map.h"
#include <utility>
#include <vector>

#include "prefillsim/block_hash.hpp"
#include "prefillsim/cost_model.hpp"

namespace prefillsim {

/// Router-side view of one engine's KV blocks: committed (materialized on the
/// device, LRU-ordered under a byte budget) and pending (promised by routed,
/// not yet executed requests). Pending blocks do not count toward the budget.
class BlockTable {
 public:
  BlockTable(Bytes budget_bytes, Bytes block_cost) : budget_(budget_bytes), cost_(block_cost) {}

  bool contains(BlockHash h) const { return map_.count(h) != 0; }
  bool is_committed(BlockHash h) const {
    auto it = map_.find(h);
    return it != map_.end() && it->second.committed;
  }
  bool is_pending(BlockHash h) const {
    auto it = map_.find(h);
    return it != map_.end() && !it->second.committed;
  }

  /// Largest m such that chain[0..m) all lie in committed or pending.
  std::size_t longest_match(std::span<const BlockHash> chain) const {
    std::size_t m = 0;
    while (m < chain.size() && contains(chain[m])) ++m;
    return m;
  }

  /// Records hashes promised by `request_id`. Hashes already known are skipped.
  void add_pending(std::span<const BlockHash> hashes, std::uint64_t request_id) {
    for (BlockHash h : hashes) map_.try_emplace(h, Entry{request_id, 0, false});
  }

  /// Engine stored these blocks: promote from pending (or insert directly) and
  /// mark most recently used. Returns committed blocks pushed out by the
  /// budget, least recently used first; a block that cannot fit at all is
  /// evicted at once.
  std::vector<BlockHash> store(std::span<const BlockHash> hashes) {
    std::vector<BlockHash> evicted;
    for (BlockHash h : hashes) {
      Entry& e = map_[h];
      if (!e.committed) {
        e.committed = true;
        ++committed_;
      }
      e.stamp = ++clock_;
      lru_.emplace_back(e.stamp, h);
      shrink(evicted);
    }
    compact();
    return evicted;
  }

  void evict(std::span<const BlockHash> hashes) {
    for (BlockHash h : hashes) {
      auto it = map_.find(h);
      if (it != map_.end() && it->second.committed) {
        map_.erase(it);
        --committed_;
      }
    }
    compact();
  }

  /// Drops every pending entry originated by `request_id`; returns the count.
  /// Linear in the table size; aborts are rare.
  std::size_t abort(std::uint64_t request_id) {
    std::size_t n = 0;
    for (auto it = map_.begin(); it != map_.end();) {
      if (!it->second.committed && it->second.owner == request_id) {
        map_.erase(it++);
        ++n;
      } else {
        ++it;
      }
    }
    return n;
  }

  std::size_t committed_size() const { return committed_; }
  std::size_t pending_size() const { return map_.size() - committed_; }
  Bytes committed_bytes() const { return static_cast<Bytes>(committed_) * cost_; }
  Bytes budget() const { return budget_; }

  /// Committed blocks, most recently used first.
  std::vector<BlockHash> committed_snapshot() const {
    std::vector<BlockHash> out;
    for (auto it = lru_.rbegin(); it != lru_.rend(); ++it) {
      if (live(*it)) out.push_back(it->second);
    }
    return out;
  }

 private:
  struct Entry {
    std::uint64_t owner = 0;  // request that promised the block
    std::uint64_t stamp = 0;  // last use; matches one live LRU record
    bool committed = false;
  };
  using Record = std::pair<std::uint64_t, BlockHash>;  // (stamp, hash)

  bool live(const Record& r) const {
    auto it = map_.find(r.second);
    return it != map_.end() && it->second.committed && it->second.stamp == r.first;
  }

  void shrink(std::vector<BlockHash>& evicted) {
    while (committed_bytes() > budget_ && !lru_.empty()) {
      const Record r = lru_.front();
      lru_.pop_front();
      if (!live(r)) continue;
      map_.erase(r.second);
      --committed_;
      evicted.push_back(r.second);
    }
  }

  // Stale records (refreshed or externally evicted blocks) are dropped once
  // they outnumber live ones.
  void compact() {
    if (lru_.size() <= 2 * committed_ + 1024) return;
    std::deque<Record> kept;
    for (const Record& r : lru_) {
      if (live(r)) kept.push_back(r);
    }
    lru_.swap(kept);
  }

  Bytes budget_;
  Bytes cost_;
  std::uint64_t clock_ = 0;
  std::size_t committed_ = 0;
  absl::flat_hash_map<BlockHash, Entry> map_;
  std::deque<Record> lru_;
};

}  // namespace prefillsim
