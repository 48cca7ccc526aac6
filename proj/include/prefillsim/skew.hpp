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

// Expert-load skew: how top-k routing spreads a token batch over experts.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "prefillsim/detail/rng.hpp"

namespace prefillsim {

enum class SkewKind { uniform, zipf };

inline constexpr std::string_view to_string(SkewKind k) {
  return k == SkewKind::uniform ? "uniform" : "zipf";
}

inline std::optional<SkewKind> parse_skew_kind(std::string_view s) {
  if (s == "uniform") return SkewKind::uniform;
  if (s == "zipf") return SkewKind::zipf;
  return std::nullopt;
}

/// For zipf, per-expert loads mix two fixed allocations of the tokens*k
/// routed pairs: an even split, and a "hot" split proportional to 1/r - 1/E
/// (r = popularity rank) clipped at `tokens` per expert. The mixing weight is
/// solved so the busiest/idlest expert load equals `ratio`. Rank-to-expert
/// placement is a seeded permutation, redrawn per stream (e.g. per layer).
/// Every device's load is affine in the mixing weight, so with experts split
/// evenly the busiest device never loses load as `ratio` grows.
struct SkewModel {
  SkewKind kind = SkewKind::uniform;
  double ratio = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SkewModel&, const SkewModel&) = default;
};

inline void validate(const SkewModel& s) {
  if (!(s.ratio >= 1.0)) throw std::invalid_argument("SkewModel: ratio must be >= 1");
}

namespace detail {

// Real-valued water-filling of `total` over `weights` with per-item cap.
inline std::vector<double> waterfill(double total, const std::vector<double>& weights, double cap) {
  const std::size_t n = weights.size();
  std::vector<double> out(n, 0.0);
  std::vector<bool> capped(n, false);
  double left = total;
  for (;;) {
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i]) wsum += weights[i];
    }
    if (wsum <= 0.0) return out;
    bool clipped = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i] && left * weights[i] / wsum > cap) {
        capped[i] = true;
        out[i] = cap;
        left -= cap;
        clipped = true;
      }
    }
    if (!clipped) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!capped[i]) out[i] = left * weights[i] / wsum;
      }
      return out;
    }
  }
}

// Expected (real-valued) per-expert pair counts.
inline std::vector<double> expert_shares(std::uint64_t tokens, std::uint64_t experts,
                                         std::uint64_t top_k, const SkewModel& skew,
                                         std::uint64_t stream) {
  const double pairs = static_cast<double>(tokens) * static_cast<double>(top_k);
  const double even = pairs / static_cast<double>(experts);
  std::vector<double> out(experts, even);
  // With k = E every expert sees every token; no skew is possible.
  if (skew.kind == SkewKind::uniform || top_k == experts || skew.ratio == 1.0 || tokens == 0) {
    return out;
  }
  std::vector<std::uint64_t> rank(experts);
  std::iota(rank.begin(), rank.end(), std::uint64_t{1});
  Rng rng(derive_seed(skew.seed, stream));
  rng.shuffle(rank);
  const double inv_e = 1.0 / static_cast<double>(experts);
  std::vector<double> z(experts);
  for (std::uint64_t e = 0; e < experts; ++e) z[e] = 1.0 / static_cast<double>(rank[e]) - inv_e;
  const std::vector<double> hot = waterfill(pairs, z, static_cast<double>(tokens));
  const double peak = *std::max_element(hot.begin(), hot.end());
  // The rank-E expert gets nothing in `hot`, so max/min = 1 + lam/(1-lam) * peak/even.
  const double odds = (skew.ratio - 1.0) * even / peak;
  const double lam = odds / (1.0 + odds);
  for (std::uint64_t e = 0; e < experts; ++e) out[e] = (1.0 - lam) * even + lam * hot[e];
  return out;
}

// Largest-remainder apportionment of `total` over `weights`, with per-item cap.
// Requires total <= cap * weights.size().
inline std::vector<std::uint64_t> apportion(std::uint64_t total, const std::vector<double>& weights,
                                            std::uint64_t cap) {
  const std::size_t n = weights.size();
  std::vector<std::uint64_t> out(n, 0);
  std::vector<bool> capped(n, false);
  std::uint64_t n_capped = 0;
  for (;;) {
    std::vector<std::size_t> free;
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i]) {
        free.push_back(i);
        wsum += weights[i];
      }
    }
    if (free.empty()) return out;
    const std::uint64_t budget = total - cap * n_capped;

    std::vector<double> frac(n, 0.0);
    std::int64_t diff = static_cast<std::int64_t>(budget);
    for (std::size_t i : free) {
      const double q = static_cast<double>(budget) * weights[i] / wsum;
      const double fl = std::floor(q);
      out[i] = static_cast<std::uint64_t>(fl);
      frac[i] = q - fl;
      diff -= static_cast<std::int64_t>(out[i]);
    }
    std::stable_sort(free.begin(), free.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t j = 0; diff > 0; j = (j + 1) % free.size(), --diff) ++out[free[j]];
    for (std::size_t j = free.size(); diff < 0; --diff) {
      do {
        j = (j == 0 ? free.size() : j) - 1;
      } while (out[free[j]] == 0);
      --out[free[j]];
    }

    bool clipped = false;
    for (std::size_t i : free) {
      if (out[i] > cap) {
        out[i] = cap;
        capped[i] = true;
        ++n_capped;
        clipped = true;
      }
    }
    if (!clipped) return out;
  }
}

}  // namespace detail

/// Per-expert token counts for `tokens` tokens routed top-k over `experts`.
/// Counts sum to tokens * k and no expert receives more than `tokens`.
inline std::vector<std::uint64_t> draw_expert_loads(std::uint64_t tokens, std::uint64_t experts,
                                                    std::uint64_t top_k, const SkewModel& skew,
                                                    std::uint64_t stream = 0) {
  if (experts == 0 || top_k == 0 || top_k > experts) {
    throw std::invalid_argument("draw_expert_loads: need 1 <= k <= E");
  }
  validate(skew);
  const auto shares = detail::expert_shares(tokens, experts, top_k, skew, stream);
  return detail::apportion(tokens * top_k, shares, tokens);
}

}  // namespace prefillsim
