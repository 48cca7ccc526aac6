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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "prefillsim/prefillsim.hpp"

namespace {

using namespace prefillsim;
using nlohmann::json;

const std::string kData = PREFILLSIM_TEST_DATA;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Three rows whose serialized form is pinned in tests/data/golden3.*.
std::vector<MetricsRow> golden_rows() {
  MetricsRow a{"dp_asyncep", 8, true, 64080.5, 0.3591, 163.625, 0.0, 123456789, ""};
  MetricsRow b{"dp_ep", 4, true, 43410.123456789, 1.0 / 3.0, 241.5, 1e-3, 70000000000ULL, ""};
  MetricsRow c{"tp_tp", 2, false, std::nullopt, std::nullopt, std::nullopt, std::nullopt,
               160000000000ULL,
               "tp_tp at P=2 needs 160000000000 bytes per device, HBM holds 80000000000"};
  return {a, b, c};
}

std::string render(const std::vector<MetricsRow>& rows, ReportFormat f) {
  std::ostringstream os;
  emit_report(rows, os, f);
  return os.str();
}

json small_doc() {
  return json::parse(R"({
    "model": {"preset": "qwen3-30b-a3b"},
    "cluster": {"preset": "h100-bf16"},
    "strategies": ["dp_dp"],
    "gpus": [1],
    "workload": {"synthetic": {"regime": {"seq_len": 1024, "count": 64}, "prefix_share": 0.5}},
    "seed": 3
  })");
}

std::string field_of(const json& doc, const std::string& base = "") {
  try {
    parse_config(doc, base);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

// ---------------------------------------------------------------- format

TEST(ReportFormat, Names) {
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_EQ(parse_report_format("jsonl"), ReportFormat::jsonl);
  EXPECT_FALSE(parse_report_format("xml").has_value());
}

TEST(Csv, OneRowIsHeaderPlusLine) {
  const std::string out = render({golden_rows()[0]}, ReportFormat::csv);
  EXPECT_EQ(out, std::string(kCsvHeader) + "\ndp_asyncep,8,true,64080.5,0.3591,163.625,0,123456789\n");
}

TEST(Csv, InfeasibleRowLeavesTimingEmpty) {
  const std::string out = render({golden_rows()[2]}, ReportFormat::csv);
  EXPECT_NE(out.find("\ntp_tp,2,false,,,,,160000000000\n"), std::string::npos);
}

TEST(Golden, CsvMatchesFixture) {
  EXPECT_EQ(render(golden_rows(), ReportFormat::csv), slurp(kData + "/golden3.csv"));
}

TEST(Golden, JsonlMatchesFixture) {
  EXPECT_EQ(render(golden_rows(), ReportFormat::jsonl), slurp(kData + "/golden3.jsonl"));
}

TEST(Jsonl, RoundTripIsExact) {
  std::stringstream ss(render(golden_rows(), ReportFormat::jsonl));
  EXPECT_EQ(read_jsonl(ss), golden_rows());
}

TEST(Jsonl, InfeasibleRowOmitsTiming) {
  const auto j = to_json(golden_rows()[2]);
  EXPECT_FALSE(j.contains("throughput_tokens_per_s"));
  EXPECT_FALSE(j.contains("mfu"));
  EXPECT_EQ(j.at("feasible"), false);
}

TEST(Emit, RejectsEmptyRows) {
  std::ostringstream os;
  EXPECT_THROW(emit_report({}, os, ReportFormat::csv), std::invalid_argument);
  EXPECT_THROW(emit_report({}, testing::TempDir() + "/empty.csv", ReportFormat::csv),
               std::invalid_argument);
}

TEST(Emit, UnwritablePathIsNamed) {
  const std::string bad = "/nonexistent-dir/sub/report.csv";
  try {
    emit_report(golden_rows(), bad, ReportFormat::csv);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(bad), std::string::npos);
  }
}

TEST(Emit, FileMatchesStream) {
  const std::string path = testing::TempDir() + "/emit.jsonl";
  emit_report(golden_rows(), path, ReportFormat::jsonl);
  EXPECT_EQ(slurp(path), render(golden_rows(), ReportFormat::jsonl));
}

// ---------------------------------------------------------------- config

TEST(Config, MinimalDocumentParses) {
  const auto c = parse_config(small_doc());
  EXPECT_EQ(c.strategies.size(), 1u);
  EXPECT_EQ(c.gpus, std::vector<std::uint32_t>{1});
  EXPECT_EQ(c.workload.kind, WorkloadKind::synthetic);
  EXPECT_EQ(c.workload.regime.count, 64u);
  EXPECT_EQ(c.scheduler.block_size, 16u);
  EXPECT_EQ(c.output_format, "csv");
}

TEST(Config, GpusSortedAndDeduplicated) {
  auto d = small_doc();
  d["gpus"] = {8, 2, 4, 2, 1};
  EXPECT_EQ(parse_config(d).gpus, (std::vector<std::uint32_t>{1, 2, 4, 8}));
}

TEST(Config, AsyncEpSettingsApplyOnlyToAsyncEp) {
  auto d = small_doc();
  d["strategies"] = {"dp_ep", "dp_asyncep"};
  d["asyncep"] = {{"offload", true}, {"window", 3}, {"kv_free", true}};
  const auto c = parse_config(d);
  EXPECT_FALSE(c.strategies[0].offload);
  EXPECT_TRUE(c.strategies[1].offload);
  EXPECT_EQ(c.strategies[1].window, 3u);
  EXPECT_TRUE(c.kv_free);
}

TEST(Config, ErrorsCarryFieldPaths) {
  {
    auto d = small_doc();
    d["modle"] = json::object();
    EXPECT_EQ(field_of(d), "modle");
  }
  {
    auto d = small_doc();
    d["strategies"] = {"dp_ep", "dp_xx"};
    EXPECT_EQ(field_of(d), "strategies[1]");
  }
  {
    auto d = small_doc();
    d["gpus"] = {2, 0};
    EXPECT_EQ(field_of(d), "gpus[1]");
  }
  {
    auto d = small_doc();
    d["cluster"]["curve"] = {{"eta_max", "high"}};
    EXPECT_EQ(field_of(d), "cluster.curve.eta_max");
  }
  {
    auto d = small_doc();
    d["skew"] = {{"kind", "zipf"}, {"ratio", 0.5}};
    EXPECT_EQ(field_of(d), "skew");
  }
  {
    auto d = small_doc();
    d["skew"] = {{"kind", "pareto"}};
    EXPECT_EQ(field_of(d), "skew.kind");
  }
  {
    auto d = small_doc();
    d["asyncep"] = {{"offload", true}, {"window", 0}};
    EXPECT_EQ(field_of(d), "asyncep.window");
  }
  {
    auto d = small_doc();
    d["scheduler"] = {{"decay", "exponential"}};
    EXPECT_EQ(field_of(d), "scheduler.decay");
  }
  {
    auto d = small_doc();
    d["output"] = {{"format", "xml"}};
    EXPECT_EQ(field_of(d), "output.format");
  }
  {
    auto d = small_doc();
    d["workload"]["trace"] = "x.jsonl";
    EXPECT_EQ(field_of(d), "workload");
  }
  {
    auto d = small_doc();
    d.erase("model");
    EXPECT_EQ(field_of(d), "model");
  }
  {
    auto d = small_doc();
    d["model"]["top_k"] = 1000;
    EXPECT_EQ(field_of(d), "model");
  }
}

TEST(Config, MissingTraceIsReported) {
  auto d = small_doc();
  d["workload"] = {{"trace", "no-such-trace.jsonl"}};
  EXPECT_EQ(field_of(d, kData), "workload.trace");
}

TEST(Config, RelativeTraceResolvesAgainstBaseDir) {
  auto d = small_doc();
  d["workload"] = {{"trace", "trace3.jsonl"}};
  const auto c = parse_config(d, kData);
  EXPECT_EQ(std::filesystem::path(c.workload.trace_path), std::filesystem::path(kData) / "trace3.jsonl");
  const Trace t = build_trace(c);
  EXPECT_EQ(t.requests.size(), 3u);
}

TEST(Config, TraceBlockSizeMismatchIsAConfigError) {
  auto d = small_doc();
  d["workload"] = {{"trace", "trace3.jsonl"}};
  d["scheduler"] = {{"block_size", 32}};
  const auto c = parse_config(d, kData);
  try {
    build_trace(c);
    FAIL() << "expected a throw";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "scheduler.block_size");
  }
}

TEST(Config, LoadConfigErrors) {
  EXPECT_THROW(load_config(kData + "/does-not-exist.json"), std::runtime_error);
  const std::string path = testing::TempDir() + "/bad.json";
  std::ofstream(path) << "{\"model\": ";
  EXPECT_THROW(load_config(path), ConfigError);
}

// ---------------------------------------------------------------- experiment

TEST(Experiment, FlatCurveGivesMfuEqualToEfficiency) {
  auto d = small_doc();
  d["cluster"]["curve"] = {{"eta_max", 0.5}, {"eta_min", 0.5}};
  const auto rows = run_experiment(parse_config(d));
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].feasible) << rows[0].note;
  EXPECT_NEAR(*rows[0].mfu, 0.5, 1e-9);
}

TEST(Experiment, InfeasibleCellHasNoTiming) {
  auto d = small_doc();
  d["model"] = {{"preset", "qwen3-235b-a22b"}};
  d["cluster"] = {{"preset", "h100-fp8"}};
  d["strategies"] = {"tp_tp"};
  d["gpus"] = {2};
  const auto rows = run_experiment(parse_config(d));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].feasible);
  EXPECT_FALSE(rows[0].throughput_tokens_per_s.has_value());
  EXPECT_FALSE(rows[0].elapsed_s.has_value());
  EXPECT_FALSE(rows[0].note.empty());
  EXPECT_GT(rows[0].peak_hbm_bytes, presets::h100_fp8().hbm_bytes);
}

TEST(Experiment, OrderedByStrategyThenAscendingGpus) {
  auto d = small_doc();
  d["strategies"] = {"dp_ep", "dp_tp", "dp_asyncep"};
  d["gpus"] = {4, 1, 2};
  const auto rows = run_experiment(parse_config(d));
  ASSERT_EQ(rows.size(), 9u);
  const std::vector<std::string> names = {"dp_ep", "dp_tp", "dp_asyncep"};
  const std::vector<std::uint32_t> ps = {1, 2, 4};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].strategy, names[i / 3]);
    EXPECT_EQ(rows[i].gpus, ps[i % 3]);
  }
}

TEST(Experiment, ThroughputTimesElapsedIsPromptTokens) {
  auto d = small_doc();
  d["strategies"] = {"dp_ep", "dp_asyncep", "tp_ep"};
  d["gpus"] = {1, 2, 4};
  const auto c = parse_config(d);
  const Trace t = build_trace(c);
  std::uint64_t tokens = 0;
  for (const Request& r : t.requests) tokens += r.total_tokens();
  for (const Strategy& s : c.strategies) {
    for (std::uint32_t p : c.gpus) {
      CellStats st;
      const MetricsRow row = run_cell(c, s, p, t, &st);
      ASSERT_TRUE(row.feasible) << row.strategy << " P=" << p << ": " << row.note;
      EXPECT_EQ(st.prompt_tokens, tokens);
      EXPECT_NEAR(*row.throughput_tokens_per_s * *row.elapsed_s, static_cast<double>(tokens),
                  1e-9 * static_cast<double>(tokens));
      EXPECT_LE(*row.mfu, c.cluster.curve.eta_max + 1e-12) << row.strategy << " P=" << p;
      EXPECT_GT(*row.mfu, 0.0);
      EXPECT_LE(st.executed_tokens, st.prompt_tokens);
    }
  }
}

TEST(Experiment, ByteIdenticalAcrossRuns) {
  auto d = small_doc();
  d["strategies"] = {"dp_ep", "dp_asyncep"};
  d["gpus"] = {1, 4};
  d["skew"] = {{"kind", "zipf"}, {"ratio", 8}};
  const auto c = parse_config(d);
  const std::string a = render(run_experiment(c), ReportFormat::jsonl);
  const std::string b = render(run_experiment(c), ReportFormat::jsonl);
  EXPECT_EQ(a, b);
}

// Fixed-length regimes carry no randomness; variable lengths do.
TEST(Experiment, SeedChangesVariableLengthWorkload) {
  auto d = small_doc();
  d["workload"] = json::parse(R"({"mixture": {"components": [
      {"label": "a", "min_len": 100, "max_len": 2000, "prefix_share": 0.4}], "total_tokens": 50000}})");
  const auto t1 = build_trace(parse_config(d));
  EXPECT_EQ(build_trace(parse_config(d)).requests, t1.requests);
  d["seed"] = 4;
  const auto t2 = build_trace(parse_config(d));
  EXPECT_NE(t1.requests, t2.requests);
}

TEST(Experiment, TraceWorkloadRuns) {
  auto d = small_doc();
  d["workload"] = {{"trace", "trace3.jsonl"}};
  const auto c = parse_config(d, kData);
  CellStats st;
  const auto row = run_cell(c, c.strategies[0], 1, build_trace(c), &st);
  ASSERT_TRUE(row.feasible) << row.note;
  EXPECT_EQ(st.prompt_tokens, 4096u + 4096u + 100u);
  // The second request reuses the first one's prefix.
  EXPECT_LT(st.executed_tokens, st.prompt_tokens);
}

}  // namespace
