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

// Prefill-only request construction and synthetic trace generation.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "prefillsim/block_hash.hpp"
#include "prefillsim/detail/rng.hpp"
#include "prefillsim/request.hpp"

namespace prefillsim {

/// Tokens in one candidate suffix pass.
inline constexpr std::uint64_t kCandidateSuffixTokens = 16;
inline constexpr std::uint32_t kMaxCandidates = 64;

// ---------------------------------------------------------------------------
// Task reformulation
// ---------------------------------------------------------------------------

enum class TaskKind { single_token, single_choice, multi_selection };

struct Task {
  TaskKind kind = TaskKind::single_token;
  std::uint64_t context_len = 0;
  std::uint32_t candidate_count = 1;
  std::uint64_t group_id = 0;
};

/// single_token / single_choice: one pass whose last-position logits are read
/// over the candidate tokens. multi_selection: one binary sibling per
/// candidate, all sharing the context as prefix plus a short suffix.
inline std::vector<Request> reformulate(const Task& t, std::uint64_t block_size = 16,
                                        std::uint64_t first_id = 0) {
  if (t.kind != TaskKind::single_token &&
      (t.candidate_count < 2 || t.candidate_count > kMaxCandidates)) {
    throw std::invalid_argument("reformulate: candidate_count must be in [2, 64]");
  }
  const auto chain = synth_chain(t.group_id, t.context_len, block_size);
  if (t.kind != TaskKind::multi_selection) {
    Request r;
    r.id = first_id;
    r.prefix_blocks = chain;
    r.prefix_len = t.context_len;
    r.suffix_len = 0;
    r.group_id = t.group_id;
    r.candidate_count = t.kind == TaskKind::single_token ? 1 : t.candidate_count;
    return {r};
  }
  std::vector<Request> out;
  for (std::uint32_t c = 0; c < t.candidate_count; ++c) {
    Request r;
    r.id = first_id + c;
    r.prefix_blocks = chain;
    r.prefix_len = t.context_len;
    r.suffix_len = kCandidateSuffixTokens;
    r.group_id = t.group_id;
    r.candidate_count = t.candidate_count;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic regimes and sources
// ---------------------------------------------------------------------------

struct Regime {
  std::string label;
  std::uint64_t seq_len = 0;  // S, tokens per request
  std::uint64_t count = 0;    // N

  std::uint64_t total_tokens() const { return seq_len * count; }
  friend bool operator==(const Regime&, const Regime&) = default;
};

/// The four fixed-budget context regimes (S x N = 10,485,760 tokens each).
inline const std::array<Regime, 4>& standard_regimes() {
  static const std::array<Regime, 4> r = {Regime{"short", 256, 40960},
                                          Regime{"medium", 4096, 2560},
                                          Regime{"long", 32768, 320},
                                          Regime{"ultra_long", 131072, 80}};
  return r;
}

inline std::optional<Regime> find_regime(std::string_view label) {
  for (const Regime& r : standard_regimes()) {
    if (r.label == label) return r;
  }
  return std::nullopt;
}

/// Qualitative prefix-share levels mapped to request fractions.
inline constexpr double kPrefixShareHigh = 0.8;
inline constexpr double kPrefixShareMedium = 0.4;
inline constexpr double kPrefixShareLow = 0.1;

/// A request population: lengths uniform in [min_len, max_len] (prefix plus
/// suffix), with `prefix_share` of requests in sharing groups of `group_size`.
struct SourceSpec {
  std::string label;
  std::uint64_t min_len = 0;
  std::uint64_t max_len = 0;
  double prefix_share = 0.0;
  std::uint64_t group_size = 2;

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

struct GenOptions {
  std::uint64_t block_size = 16;
  std::uint64_t suffix_len = kCandidateSuffixTokens;
  double arrival_rate = 0.0;  // requests/s; 0 puts every arrival at t=0

  friend bool operator==(const GenOptions&, const GenOptions&) = default;
};

namespace detail {

inline void validate_source(const SourceSpec& s, const GenOptions& o) {
  if (!(s.prefix_share >= 0.0 && s.prefix_share <= 1.0)) {
    throw std::invalid_argument("workload: prefix_share must be in [0, 1]");
  }
  if (s.prefix_share > 0.0 && s.group_size < 2) {
    throw std::invalid_argument("workload: group_size must be >= 2 when prefix_share > 0");
  }
  if (s.min_len > s.max_len) throw std::invalid_argument("workload: min_len > max_len");
  if (s.min_len <= o.suffix_len) {
    throw std::invalid_argument("workload: request length must exceed the suffix length");
  }
  if (o.block_size == 0) throw std::invalid_argument("workload: block_size must be >= 1");
}

/// Requests emitted together: one sharing group or one lone request.
using Unit = std::vector<Request>;

// Units in generation order. Stops after `max_requests` requests or once
// `token_budget` tokens are reached, whichever is set. Grouped units are
// spaced deterministically so that the grouped fraction tracks prefix_share
// as closely as whole groups allow; only lengths are random.
inline std::vector<Unit> gen_units(const SourceSpec& s, std::optional<std::uint64_t> max_requests,
                                   std::optional<std::uint64_t> token_budget, std::uint64_t seed,
                                   std::uint64_t group_base, const GenOptions& o) {
  validate_source(s, o);
  Rng rng(seed);
  std::vector<Unit> units;
  std::uint64_t requests = 0, grouped = 0, tokens = 0;
  auto done = [&] {
    if (max_requests && requests >= *max_requests) return true;
    if (token_budget && tokens >= *token_budget) return true;
    return false;
  };
  while (!done()) {
    const double after = static_cast<double>(grouped + s.group_size);
    const bool group = s.prefix_share > 0.0 &&
                       after <= s.prefix_share * static_cast<double>(requests + s.group_size) + 1e-9;
    const std::uint64_t len = rng.between(s.min_len, s.max_len);
    const std::uint64_t gid = group_base + units.size();
    if (gid >= (std::uint64_t{1} << 32)) throw std::length_error("workload: too many groups");
    Request proto;
    proto.prefix_len = len - o.suffix_len;
    proto.suffix_len = o.suffix_len;
    proto.group_id = gid;
    proto.prefix_blocks = synth_chain(gid, proto.prefix_len, o.block_size);
    Unit u;
    const std::uint64_t want = group ? s.group_size : 1;
    while (u.size() < want && !done()) {
      u.push_back(proto);
      ++requests;
      tokens += len;
      if (group) ++grouped;
    }
    for (Request& r : u) r.candidate_count = static_cast<std::uint32_t>(group ? u.size() : 1);
    units.push_back(std::move(u));
  }
  return units;
}

inline Trace flatten(std::vector<Unit>& units, const GenOptions& o) {
  Trace t;
  t.block_size = o.block_size;
  for (Unit& u : units) {
    for (Request& r : u) {
      r.id = t.requests.size();
      r.arrival_s = o.arrival_rate > 0.0 ? static_cast<double>(r.id) / o.arrival_rate : 0.0;
      t.requests.push_back(std::move(r));
    }
  }
  return t;
}

}  // namespace detail

/// N requests of exactly S tokens (S - suffix prefix tokens + suffix).
inline Trace gen_synthetic(const Regime& regime, double prefix_share, std::uint64_t group_size,
                           std::uint64_t seed, const GenOptions& opts = {}) {
  const SourceSpec s{regime.label, regime.seq_len, regime.seq_len, prefix_share, group_size};
  auto units = detail::gen_units(s, regime.count, std::nullopt, seed, 0, opts);
  return detail::flatten(units, opts);
}

struct MixtureComponent {
  SourceSpec source;
  double weight = 1.0;

  friend bool operator==(const MixtureComponent&, const MixtureComponent&) = default;
};

/// Seed used for component i of a mixture generated under `seed`.
inline std::uint64_t mixture_source_seed(std::uint64_t seed, std::size_t i) {
  return detail::derive_seed(seed, i);
}

/// Per-component token budgets: floor(total * w_i / sum w), remainder to the
/// first components so the budgets sum to `total_tokens`.
inline std::vector<std::uint64_t> mixture_budgets(const std::vector<MixtureComponent>& comps,
                                                  std::uint64_t total_tokens) {
  double wsum = 0.0;
  for (const auto& c : comps) {
    if (!(c.weight >= 0.0)) throw std::invalid_argument("gen_mixture: weights must be >= 0");
    wsum += c.weight;
  }
  if (!(wsum > 0.0)) throw std::invalid_argument("gen_mixture: weights must sum to > 0");
  std::vector<std::uint64_t> b(comps.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    b[i] = static_cast<std::uint64_t>(std::floor(static_cast<double>(total_tokens) * comps[i].weight / wsum));
    assigned += b[i];
  }
  for (std::size_t i = 0; assigned < total_tokens && !comps.empty(); i = (i + 1) % comps.size()) {
    if (comps[i].weight > 0.0) {
      ++b[i];
      ++assigned;
    }
  }
  return b;
}

/// Mixes sources by token share. Each component emits units until its budget
/// is met (overshooting by less than one request); units from all components
/// are then shuffled under `seed` and renumbered in arrival order.
inline Trace gen_mixture(const std::vector<MixtureComponent>& comps, std::uint64_t total_tokens,
                         std::uint64_t seed, const GenOptions& opts = {}) {
  const auto budgets = mixture_budgets(comps, total_tokens);
  std::vector<detail::Unit> all;
  std::uint64_t group_base = 0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (budgets[i] == 0) continue;
    auto units = detail::gen_units(comps[i].source, std::nullopt, budgets[i],
                                   mixture_source_seed(seed, i), group_base, opts);
    group_base += units.size();
    for (auto& u : units) all.push_back(std::move(u));
  }
  detail::Rng rng(detail::derive_seed(seed, 0xA7717A1ULL));
  rng.shuffle(all);
  return detail::flatten(all, opts);
}

/// Six-source proxy of the aggregated prefill-only workload: per-source
/// length ranges and token shares (millions of tokens) with qualitative
/// prefix-share levels mapped through the defaults above.
inline std::vector<MixtureComponent> aggregated_mixture(std::uint64_t group_size = 4) {
  return {
      {{"moral_stories", 100, 200, kPrefixShareHigh, group_size}, 3.3},
      {{"mmlu", 50, 500, kPrefixShareLow, group_size}, 5.8},
      {{"boolq", 200, 600, kPrefixShareLow, group_size}, 2.7},
      {{"imdb", 300, 2000, kPrefixShareLow, group_size}, 5.5},
      {{"quality", 4000, 12000, kPrefixShareHigh, group_size}, 10.5},
      {{"arxiv", 6000, 131072, kPrefixShareMedium, group_size}, 10.1},
  };
}

inline constexpr std::uint64_t kAggregatedTokens = 37'900'000;

}  // namespace prefillsim
