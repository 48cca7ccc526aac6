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

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "prefillsim/prefillsim.hpp"

namespace {

using namespace prefillsim;

const std::string kData = PREFILLSIM_TEST_DATA;

// ---------------------------------------------------------------------------
// reformulate
// ---------------------------------------------------------------------------

TEST(Reformulate, SingleTokenIsOneRequest) {
  const auto rs = reformulate(Task{TaskKind::single_token, 1000, 1, 3});
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].prefix_len, 1000u);
  EXPECT_EQ(rs[0].prefix_blocks.size(), 1000u / 16);
}

TEST(Reformulate, SingleChoiceIsOnePassOverCandidates) {
  const auto rs = reformulate(Task{TaskKind::single_choice, 500, 4, 3});
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].candidate_count, 4u);
}

TEST(Reformulate, MultiSelectionEmitsSiblings) {
  const auto rs = reformulate(Task{TaskKind::multi_selection, 8192, 10, 42}, 16, 100);
  ASSERT_EQ(rs.size(), 10u);
  std::uint64_t suffix = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(rs[i].id, 100 + i);
    EXPECT_EQ(rs[i].prefix_blocks, rs[0].prefix_blocks);
    EXPECT_EQ(rs[i].group_id, 42u);
    suffix += rs[i].suffix_len;
  }
  EXPECT_LT(suffix * 10, rs[0].prefix_len);
}

TEST(Reformulate, SiblingsMatchFullChainAgainstEachOther) {
  for (std::uint32_t k : {2u, 5u, 64u}) {
    const auto rs = reformulate(Task{TaskKind::multi_selection, 3000, k, 8});
    BlockTable t(~0ULL, 1);
    t.store(rs[0].prefix_blocks);
    for (const Request& r : rs) EXPECT_EQ(t.longest_match(r.prefix_blocks), r.prefix_blocks.size());
  }
}

TEST(Reformulate, RejectsBadCandidateCounts) {
  EXPECT_THROW(reformulate(Task{TaskKind::multi_selection, 100, 1, 0}), std::invalid_argument);
  EXPECT_THROW(reformulate(Task{TaskKind::single_choice, 100, 65, 0}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// gen_synthetic
// ---------------------------------------------------------------------------

TEST(GenSynthetic, RegimesShareTokenBudget) {
  for (const Regime& r : standard_regimes()) EXPECT_EQ(r.total_tokens(), 10'485'760u) << r.label;
  const Trace t = gen_synthetic(*find_regime("short"), 0.0, 2, 1);
  EXPECT_EQ(t.requests.size(), 40960u);
  EXPECT_EQ(t.total_tokens(), 10'485'760u);
  for (const Request& r : t.requests) EXPECT_EQ(r.total_tokens(), 256u);
}

TEST(GenSynthetic, NoSharingMeansDisjointChains) {
  const Trace t = gen_synthetic(*find_regime("medium"), 0.0, 2, 5);
  std::unordered_set<BlockHash> seen;
  std::size_t blocks = 0;
  for (const Request& r : t.requests) {
    seen.insert(r.prefix_blocks.begin(), r.prefix_blocks.end());
    blocks += r.prefix_blocks.size();
  }
  EXPECT_EQ(seen.size(), blocks);
}

TEST(GenSynthetic, FullShareOneGroupIsOneChain) {
  const Regime r{"tiny", 512, 100};
  const Trace t = gen_synthetic(r, 1.0, 100, 3);
  ASSERT_EQ(t.requests.size(), 100u);
  for (const Request& q : t.requests) {
    EXPECT_EQ(q.prefix_blocks, t.requests[0].prefix_blocks);
    EXPECT_EQ(q.group_id, t.requests[0].group_id);
  }
}

TEST(GenSynthetic, GroupedFractionTracksShare) {
  const Regime r{"s", 300, 10000};
  for (double share : {0.1, 0.4, 0.8}) {
    const Trace t = gen_synthetic(r, share, 4, 11);
    std::map<std::uint64_t, int> sizes;
    for (const Request& q : t.requests) ++sizes[q.group_id];
    std::size_t grouped = 0;
    for (const auto& [g, n] : sizes) {
      if (n > 1) grouped += n;
    }
    EXPECT_NEAR(static_cast<double>(grouped) / 10000.0, share, 4.0 / 10000.0);
  }
}

TEST(GenSynthetic, ChainsNeverCollideAcrossGroups) {
  const Trace t = gen_synthetic(Regime{"x", 2048, 400}, 0.5, 3, 2);
  std::unordered_map<BlockHash, std::uint64_t> owner;
  for (const Request& q : t.requests) {
    for (BlockHash h : q.prefix_blocks) {
      auto [it, fresh] = owner.emplace(h, q.group_id);
      EXPECT_EQ(it->second, q.group_id);
    }
  }
}

TEST(GenSynthetic, DeterministicPerSeed) {
  const Regime r{"x", 700, 500};
  EXPECT_EQ(gen_synthetic(r, 0.4, 4, 9), gen_synthetic(r, 0.4, 4, 9));
}

TEST(GenSynthetic, ArrivalRateSpacesRequests) {
  GenOptions o;
  o.arrival_rate = 4.0;
  const Trace t = gen_synthetic(Regime{"x", 100, 9}, 0.0, 2, 1, o);
  for (const Request& q : t.requests) EXPECT_DOUBLE_EQ(q.arrival_s, static_cast<double>(q.id) / 4.0);
  const Trace z = gen_synthetic(Regime{"x", 100, 9}, 0.0, 2, 1);
  for (const Request& q : z.requests) EXPECT_EQ(q.arrival_s, 0.0);
}

TEST(GenSynthetic, RejectsBadArguments) {
  const Regime r{"x", 256, 10};
  EXPECT_THROW(gen_synthetic(r, 0.5, 1, 0), std::invalid_argument);
  EXPECT_THROW(gen_synthetic(r, 1.5, 4, 0), std::invalid_argument);
  EXPECT_THROW(gen_synthetic(Regime{"x", 16, 10}, 0.0, 2, 0), std::invalid_argument);
  EXPECT_NO_THROW(gen_synthetic(r, 0.0, 1, 0));
}

// ---------------------------------------------------------------------------
// gen_mixture
// ---------------------------------------------------------------------------

TEST(GenMixture, SingleSourceMatchesSyntheticUpToOrder) {
  const Regime r{"x", 512, 300};
  const Trace syn = gen_synthetic(r, 0.4, 4, 7);
  const Trace mix = gen_mixture({{SourceSpec{"x", 512, 512, 0.4, 4}, 1.0}}, r.total_tokens(), 7);
  ASSERT_EQ(mix.requests.size(), syn.requests.size());
  EXPECT_EQ(mix.total_tokens(), syn.total_tokens());
  auto group_sizes = [](const Trace& t) {
    std::map<std::uint64_t, int> by_group;
    for (const Request& q : t.requests) ++by_group[q.group_id];
    std::multiset<int> s;
    for (const auto& [g, n] : by_group) s.insert(n);
    return s;
  };
  EXPECT_EQ(group_sizes(mix), group_sizes(syn));
}

TEST(GenMixture, AggregatedProxyTotalsAndShares) {
  const auto comps = aggregated_mixture();
  const std::uint64_t seed = 21;
  const Trace t = gen_mixture(comps, kAggregatedTokens, seed);
  const auto budgets = mixture_budgets(comps, kAggregatedTokens);

  std::uint64_t budget_sum = 0, max_len = 0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    budget_sum += budgets[i];
    max_len = std::max(max_len, comps[i].source.max_len);
    EXPECT_NEAR(static_cast<double>(budgets[i]), kAggregatedTokens * comps[i].weight / 37.9, 1.0);
  }
  EXPECT_EQ(budget_sum, kAggregatedTokens);
  EXPECT_GE(t.total_tokens(), kAggregatedTokens);
  EXPECT_LT(t.total_tokens(), kAggregatedTokens + comps.size() * max_len);
  EXPECT_NEAR(static_cast<double>(t.total_tokens()), 37.9e6, 0.01 * 37.9e6);

  // Components own consecutive group-id ranges; recover each range from the
  // component's own unit count and check its token total against its budget.
  std::uint64_t base = 0, sum = 0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto units = detail::gen_units(comps[i].source, std::nullopt, budgets[i],
                                         mixture_source_seed(seed, i), base, GenOptions{});
    const std::uint64_t hi = base + units.size();
    std::uint64_t tokens = 0;
    for (const Request& q : t.requests) {
      if (q.group_id >= base && q.group_id < hi) tokens += q.total_tokens();
    }
    EXPECT_GE(tokens, budgets[i]) << comps[i].source.label;
    EXPECT_LT(tokens, budgets[i] + comps[i].source.max_len) << comps[i].source.label;
    sum += tokens;
    base = hi;
  }
  EXPECT_EQ(sum, t.total_tokens());
}

TEST(GenMixture, ShuffledButIdsInArrivalOrder) {
  const Trace t = gen_mixture(aggregated_mixture(), 2'000'000, 3);
  for (std::size_t i = 0; i < t.requests.size(); ++i) EXPECT_EQ(t.requests[i].id, i);
  EXPECT_EQ(t, gen_mixture(aggregated_mixture(), 2'000'000, 3));
  EXPECT_NE(t, gen_mixture(aggregated_mixture(), 2'000'000, 4));
}

TEST(GenMixture, RejectsBadWeights) {
  EXPECT_THROW(gen_mixture({{SourceSpec{"a", 100, 200, 0.0, 2}, 0.0}}, 1000, 0), std::invalid_argument);
  EXPECT_THROW(gen_mixture({{SourceSpec{"a", 100, 200, 0.0, 2}, -1.0}}, 1000, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Trace I/O
// ---------------------------------------------------------------------------

TEST(TraceIo, RoundTrip) {
  GenOptions o;
  o.arrival_rate = 3.0;
  const Trace t = gen_mixture(aggregated_mixture(), 500'000, 8, o);
  std::stringstream ss;
  write_trace(t, ss);
  EXPECT_EQ(read_trace(ss), t);
}

TEST(TraceIo, RoundTripThroughFile) {
  const Trace t = gen_synthetic(Regime{"x", 300, 50}, 0.5, 5, 1);
  const std::string path = testing::TempDir() + "/prefillsim_trace_rt.jsonl";
  write_trace(t, path);
  EXPECT_EQ(read_trace(path), t);
}

TEST(TraceIo, EmptyInputEmptyTrace) {
  std::stringstream empty;
  EXPECT_TRUE(read_trace(empty).requests.empty());
  std::stringstream header_only("{\"prefillsim_trace\":1,\"block_size\":32}\n");
  const Trace t = read_trace(header_only);
  EXPECT_TRUE(t.requests.empty());
  EXPECT_EQ(t.block_size, 32u);
}

TEST(TraceIo, HandWrittenFixture) {
  const Trace t = read_trace(kData + "/trace3.jsonl");
  ASSERT_EQ(t.requests.size(), 3u);
  EXPECT_EQ(t.block_size, 16u);
  const Request& a = t.requests[0];
  EXPECT_EQ(a.id, 0u);
  EXPECT_EQ(a.group_id, 7u);
  EXPECT_EQ(a.prefix_len, 4080u);
  EXPECT_EQ(a.suffix_len, 16u);
  EXPECT_EQ(a.candidate_count, 3u);
  EXPECT_EQ(a.prefix_blocks.size(), 255u);
  EXPECT_EQ(t.requests[1].prefix_blocks, a.prefix_blocks);
  EXPECT_DOUBLE_EQ(t.requests[1].arrival_s, 0.5);
  const Request& c = t.requests[2];
  EXPECT_EQ(c.group_id, 9u);
  EXPECT_EQ(c.prefix_len, 100u);
  EXPECT_EQ(c.suffix_len, 0u);
  EXPECT_DOUBLE_EQ(c.arrival_s, 1.25);
  EXPECT_EQ(c.prefix_blocks, synth_chain(9, 100, 16));
  EXPECT_EQ(t.total_tokens(), 2 * 4096u + 100u);
}

std::size_t error_line(const std::string& text) {
  std::stringstream ss(text);
  try {
    read_trace(ss);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(TraceIo, ParseErrorsCarryLineNumbers) {
  const std::string ok = R"({"id":0,"arrival_s":0,"group_id":1,"prefix_len":32,"suffix_len":0,"candidate_count":1})";
  EXPECT_EQ(error_line(ok + "\n" + ok + "\n{not json\n"), 3u);
  EXPECT_EQ(error_line(ok + "\n\n" + R"({"id":1,"arrival_s":0})" + "\n"), 3u);  // missing fields
  EXPECT_EQ(error_line(R"({"id":0,"arrival_s":0,"group_id":1,"prefix_len":32,"suffix_len":0,"candidate_count":1,"x":2})"), 1u);
  EXPECT_EQ(error_line(R"({"id":0,"arrival_s":-1,"group_id":1,"prefix_len":32,"suffix_len":0,"candidate_count":1})"), 1u);
  EXPECT_EQ(error_line(R"({"id":"a","arrival_s":0,"group_id":1,"prefix_len":32,"suffix_len":0,"candidate_count":1})"), 1u);
  EXPECT_EQ(error_line(ok + "\n{\"prefillsim_trace\":1}\n"), 2u);
  EXPECT_EQ(error_line("{\"prefillsim_trace\":2}\n"), 1u);
  EXPECT_EQ(error_line("[1,2]\n"), 1u);
}

TEST(TraceIo, MissingFileNamesPath) {
  try {
    read_trace(std::string("/nonexistent/trace.jsonl"));
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/trace.jsonl"), std::string::npos);
  }
}

}  // namespace
