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

// Chained block hashes over token ids.
//
// Hash = 64-bit FNV-1a over little-endian 8-byte words. Block 0 hashes its
// tokens starting from kBlockHashSeed; block i hashes the previous block's
// hash followed by its own tokens. A trailing partial block is not hashed.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace prefillsim {

using BlockHash = std::uint64_t;
using TokenId = std::uint64_t;

/// Fixed process-independent seed (the FNV-1a 64-bit offset basis).
inline constexpr std::uint64_t kBlockHashSeed = 0xcbf29ce484222325ULL;

namespace detail {
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a_word(std::uint64_t h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xFFu;
    h *= kFnvPrime;
  }
  return h;
}
}  // namespace detail

inline std::vector<BlockHash> block_hash_chain(std::span<const TokenId> tokens,
                                               std::uint64_t block_size,
                                               std::uint64_t seed = kBlockHashSeed) {
  if (block_size == 0) throw std::invalid_argument("block_hash_chain: block_size must be >= 1");
  const std::size_t blocks = tokens.size() / block_size;
  std::vector<BlockHash> chain;
  chain.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::uint64_t h = seed;
    if (b > 0) h = detail::fnv1a_word(h, chain.back());
    for (std::size_t i = b * block_size; i < (b + 1) * block_size; ++i) {
      h = detail::fnv1a_word(h, tokens[i]);
    }
    chain.push_back(h);
  }
  return chain;
}

/// Synthetic token id for position `pos` of sharing group `group`. Distinct
/// groups never share a token, so their chains never collide by construction.
constexpr TokenId synth_token(std::uint64_t group, std::uint64_t pos) {
  return (group << 32) | (pos & 0xFFFFFFFFULL);
}

inline std::vector<TokenId> synth_tokens(std::uint64_t group, std::uint64_t len) {
  if (len > (std::uint64_t{1} << 32)) {
    throw std::invalid_argument("synth_tokens: prefix longer than 2^32 tokens");
  }
  std::vector<TokenId> t(len);
  for (std::uint64_t i = 0; i < len; ++i) t[i] = synth_token(group, i);
  return t;
}

/// Chain for the synthetic prefix of `group`, without materializing tokens.
inline std::vector<BlockHash> synth_chain(std::uint64_t group, std::uint64_t prefix_len,
                                          std::uint64_t block_size,
                                          std::uint64_t seed = kBlockHashSeed) {
  if (block_size == 0) throw std::invalid_argument("synth_chain: block_size must be >= 1");
  if (prefix_len > (std::uint64_t{1} << 32)) {
    throw std::invalid_argument("synth_chain: prefix longer than 2^32 tokens");
  }
  const std::uint64_t blocks = prefix_len / block_size;
  std::vector<BlockHash> chain;
  chain.reserve(blocks);
  for (std::uint64_t b = 0; b < blocks; ++b) {
    std::uint64_t h = seed;
    if (b > 0) h = detail::fnv1a_word(h, chain.back());
    for (std::uint64_t i = b * block_size; i < (b + 1) * block_size; ++i) {
      h = detail::fnv1a_word(h, synth_token(group, i));
    }
    chain.push_back(h);
  }
  return chain;
}

}  // namespace prefillsim
