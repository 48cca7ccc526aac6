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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "prefillsim/prefillsim.hpp"
#include "support/oracles.hpp"

namespace {

using namespace prefillsim;

ModelConfig shape_48l() {
  ModelConfig m;
  m.layers = 48;
  m.moe_layers = 48;
  m.hidden = 4096;
  m.kv_heads = 4;
  m.head_dim = 128;
  m.expert_intermediate = 1536;
  m.experts = 128;
  m.top_k = 8;
  m.bytes_per_element = 2;
  m.active_params = 22'000'000'000ULL;
  m.total_params = 235'000'000'000ULL;
  m.attn_params_per_layer = 71'835'904ULL;
  return m;
}

TEST(KvBytes, EmptyBatchIsZero) { EXPECT_EQ(kv_bytes(0, 4096, shape_48l()), 0u); }

TEST(KvBytes, HandEvaluatedShape) {
  EXPECT_EQ(kv_bytes(4, 2048, shape_48l()), 805'306'368ULL);
}

TEST(KvBytes, LinearInSequence) {
  std::mt19937_64 g(11);
  for (int i = 0; i < 50; ++i) {
    const auto m = oracle::random_model(g);
    const std::uint64_t s = std::uniform_int_distribution<std::uint64_t>(1, 50000)(g);
    EXPECT_EQ(kv_bytes(3, 2 * s, m), 2 * kv_bytes(3, s, m));
  }
}

TEST(KvBytes, MatchesRepeatedSumOracle) {
  std::mt19937_64 g(12);
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_model(g);
    const std::uint64_t B = std::uniform_int_distribution<std::uint64_t>(0, 64)(g);
    const std::uint64_t S = std::uniform_int_distribution<std::uint64_t>(0, 1 << 17)(g);
    EXPECT_EQ(kv_bytes(B, S, m), oracle::kv_bytes(B, S, m));
  }
}

TEST(KvBytes, OverflowIsReported) {
  EXPECT_THROW(kv_bytes(~0ULL, ~0ULL, shape_48l()), std::overflow_error);
}

TEST(ActivationBytes, DenseCaseWithSingleExpert) {
  auto m = shape_48l();
  m.top_k = 1;
  EXPECT_EQ(activation_bytes(4, 2048, m), 2ULL * 4 * 2048 * 1536 * 2);
}

TEST(ActivationBytes, HandEvaluatedShape) {
  EXPECT_EQ(activation_bytes(4, 2048, shape_48l()), 402'653'184ULL);
}

TEST(ActivationBytes, LinearInTopK) {
  auto m = shape_48l();
  m.top_k = 1;
  const Bytes one = activation_bytes(2, 1000, m);
  for (std::uint64_t k = 1; k <= 8; ++k) {
    m.top_k = k;
    EXPECT_EQ(activation_bytes(2, 1000, m), k * one);
  }
}

TEST(ActivationBytes, MatchesRepeatedSumOracle) {
  std::mt19937_64 g(13);
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_model(g);
    const std::uint64_t B = std::uniform_int_distribution<std::uint64_t>(0, 64)(g);
    const std::uint64_t S = std::uniform_int_distribution<std::uint64_t>(0, 1 << 17)(g);
    EXPECT_EQ(activation_bytes(B, S, m), oracle::activation_bytes(B, S, m));
  }
}

TEST(WeightBytes, ExpertSizes) {
  auto m = shape_48l();
  m.bytes_per_element = 1;
  const WeightBytes w = weight_bytes(m);
  EXPECT_EQ(w.expert_per_expert, 18'874'368ULL);
  EXPECT_EQ(w.expert_per_layer, 2'415'919'104ULL);
  EXPECT_EQ(w.expert_total, 48 * w.expert_per_layer);
}

TEST(WeightBytes, Qwen235bFp8Near235GB) {
  const Bytes total = weight_bytes(presets::qwen3_235b_a22b(1)).total();
  EXPECT_GE(static_cast<double>(total), 235e9 * 0.85);
  EXPECT_LE(static_cast<double>(total), 235e9 * 1.15);
}

TEST(WeightBytes, Bf16DoublesFp8) {
  EXPECT_EQ(weight_bytes(presets::qwen3_235b_a22b(2)).total(),
            2 * weight_bytes(presets::qwen3_235b_a22b(1)).total());
}

TEST(FTok, TwicePerActiveParameter) {
  auto m = shape_48l();
  EXPECT_DOUBLE_EQ(f_tok(m), 4.4e10);
  m.active_params = 1;
  EXPECT_EQ(f_tok(m), 2.0);
}

TEST(FTok, IndependentOfPrecision) {
  auto a = shape_48l();
  auto b = a;
  a.bytes_per_element = 1;
  EXPECT_EQ(f_tok(a), f_tok(b));
}

TEST(CostPrefix, ZeroTokensIsFree) { EXPECT_EQ(cost_prefix(0, shape_48l()), 0.0); }

TEST(CostPrefix, Superlinear) {
  const auto m = shape_48l();
  for (std::uint64_t a : {1u, 7u, 512u, 4096u}) {
    for (std::uint64_t b : {1u, 33u, 2048u}) {
      EXPECT_GE(cost_prefix(a + b, m), cost_prefix(a, m) + cost_prefix(b, m));
    }
  }
}

TEST(CostPrefix, MatchesPolynomialOracle) {
  const auto m = shape_48l();
  const long double want = oracle::prefix_flops(1024, 4.4e10L, m);
  EXPECT_NEAR(cost_prefix(1024, m), static_cast<double>(want), 1e-12 * static_cast<double>(want));
}

TEST(CostPrefix, RandomizedAgainstOracle) {
  std::mt19937_64 g(14);
  for (int i = 0; i < 200; ++i) {
    const auto m = oracle::random_model(g);
    const std::uint64_t n = std::uniform_int_distribution<std::uint64_t>(0, 1 << 18)(g);
    const double want = static_cast<double>(oracle::prefix_flops(n, 2.0L * m.active_params, m));
    EXPECT_NEAR(cost_prefix(n, m), want, 1e-12 * want);
  }
}

TEST(CostSuffix, EmptySuffixIsZero) {
  const auto c = cost_suffix(0, 4096, shape_48l());
  EXPECT_EQ(c.ffn_flops, 0.0);
  EXPECT_EQ(c.self_attn_flops, 0.0);
  EXPECT_EQ(c.cross_attn_flops, 0.0);
  EXPECT_EQ(c.total_flops, 0.0);
}

TEST(CostSuffix, CrossTermLinearInPrefix) {
  const auto m = shape_48l();
  const auto a = cost_suffix(16, 2048, m);
  const auto b = cost_suffix(16, 4096, m);
  EXPECT_DOUBLE_EQ(b.cross_attn_flops, 2.0 * a.cross_attn_flops);
  EXPECT_EQ(b.ffn_flops, a.ffn_flops);
  EXPECT_EQ(b.self_attn_flops, a.self_attn_flops);
}

TEST(CostSuffix, TermByTermOracle) {
  const auto m = shape_48l();
  const auto c = cost_suffix(16, 4096, m);
  const auto o = oracle::suffix_flops(16, 4096, 4.4e10L, m);
  EXPECT_DOUBLE_EQ(c.ffn_flops, static_cast<double>(o.ffn));
  EXPECT_DOUBLE_EQ(c.self_attn_flops, static_cast<double>(o.self));
  EXPECT_DOUBLE_EQ(c.cross_attn_flops, static_cast<double>(o.cross));
  EXPECT_DOUBLE_EQ(c.total_flops, static_cast<double>(o.ffn + o.self + o.cross));
}

TEST(CostDelta, FullyCachedPrefixLeavesSuffixOnly) {
  const auto m = shape_48l();
  EXPECT_EQ(cost_delta(4096, 4096, 16, m), cost_suffix(16, 4096, m).total_flops);
}

TEST(CostDelta, PurePrefixRequest) {
  const auto m = shape_48l();
  EXPECT_EQ(cost_delta(4096, 0, 0, m), cost_prefix(4096, m));
}

TEST(CostDelta, RejectsOvermatchedPrefix) {
  EXPECT_THROW(cost_delta(16, 32, 0, shape_48l()), std::invalid_argument);
  EXPECT_THROW(cost_breakdown(16, 32, 0, shape_48l()), std::invalid_argument);
}

TEST(CostDelta, BreakdownSumsToDelta) {
  const auto m = shape_48l();
  const auto b = cost_breakdown(4096, 1024, 16, m);
  EXPECT_DOUBLE_EQ(b.total_flops, cost_delta(4096, 1024, 16, m));
  EXPECT_DOUBLE_EQ(b.prefix_flops, cost_prefix(3072, m));
}

TEST(GemmEfficiency, SaturatedRegime) {
  const EfficiencyCurve c{0.6, 1000.0, 0.05};
  EXPECT_EQ(gemm_efficiency(1000.0, c), 0.6);
  EXPECT_EQ(gemm_efficiency(1e9, c), 0.6);
}

TEST(GemmEfficiency, FloorAtZeroTokens) {
  const EfficiencyCurve c{0.6, 1000.0, 0.05};
  EXPECT_EQ(gemm_efficiency(0.0, c), 0.05);
}

TEST(GemmEfficiency, HalfwayOnRamp) {
  const EfficiencyCurve c{0.6, 1000.0, 0.05};
  EXPECT_DOUBLE_EQ(gemm_efficiency(500.0, c), 0.3);
}

TEST(GemmEfficiency, MonotoneInTokens) {
  const EfficiencyCurve c{0.8, 4096.0, 0.1};
  double prev = 0.0;
  for (double t = 0; t < 10000; t += 37.0) {
    const double e = gemm_efficiency(t, c);
    EXPECT_GE(e, prev);
    prev = e;
  }
}

TEST(ExpertFlops, CappedByPerTokenBudget) {
  auto m = shape_48l();
  EXPECT_DOUBLE_EQ(expert_flops_per_token_layer(m), 6.0 * 4096 * 1536 * 8);
  m.active_params = 1000;
  EXPECT_DOUBLE_EQ(expert_flops_per_token_layer(m), 2000.0 / 48.0);
}

TEST(ModelValidation, RejectsBadShapes) {
  auto m = shape_48l();
  m.top_k = 200;
  EXPECT_THROW(validate(m), std::invalid_argument);
  m = shape_48l();
  m.bytes_per_element = 4;
  EXPECT_THROW(validate(m), std::invalid_argument);
  m = shape_48l();
  m.moe_layers = 49;
  EXPECT_THROW(validate(m), std::invalid_argument);
  EXPECT_NO_THROW(validate(shape_48l()));
}

}  // namespace
