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
#include <stdexcept>
#include <string>
#include <vector>

#include "prefillsim/block_hash.hpp"

namespace prefillsim {

/// One atomic prefill: a (possibly shared) prefix followed by a short suffix.
struct Request {
  std::uint64_t id = 0;
  std::vector<BlockHash> prefix_blocks;
  std::uint64_t prefix_len = 0;
  std::uint64_t suffix_len = 0;
  double arrival_s = 0.0;
  std::uint64_t group_id = 0;
  std::uint32_t candidate_count = 1;

  std::uint64_t total_tokens() const { return prefix_len + suffix_len; }

  friend bool operator==(const Request&, const Request&) = default;
};

/// A chain is valid when it covers every full block of the prefix.
inline void validate_chain(const Request& r, std::uint64_t block_size) {
  if (block_size == 0) throw std::invalid_argument("validate_chain: block_size must be >= 1");
  if (r.prefix_blocks.size() != r.prefix_len / block_size) {
    throw std::invalid_argument("request " + std::to_string(r.id) + ": chain has " +
                                std::to_string(r.prefix_blocks.size()) + " blocks, prefix of " +
                                std::to_string(r.prefix_len) + " tokens needs " +
                                std::to_string(r.prefix_len / block_size));
  }
}

struct Trace {
  std::uint64_t block_size = 16;
  std::vector<Request> requests;

  std::uint64_t total_tokens() const {
    std::uint64_t n = 0;
    for (const Request& r : requests) n += r.total_tokens();
    return n;
  }

  friend bool operator==(const Trace&, const Trace&) = default;
};

}  // namespace prefillsim
