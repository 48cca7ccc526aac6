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

// Report files. Doubles are written in shortest round-trip form, so output is
// byte-stable for identical rows.
//
// CSV header (fixed order):
//   strategy,gpus,feasible,throughput_tokens_per_s,mfu,elapsed_s,stall_s,peak_hbm_bytes
// Infeasible rows leave the four timing columns empty. JSON lines carry the
// same keys, omit absent timing fields, and add "note" when non-empty.

#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "prefillsim/experiment.hpp"

namespace prefillsim {

enum class ReportFormat { csv, jsonl };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "jsonl" || s == "json-lines") return ReportFormat::jsonl;
  return std::nullopt;
}

inline constexpr std::string_view kCsvHeader =
    "strategy,gpus,feasible,throughput_tokens_per_s,mfu,elapsed_s,stall_s,peak_hbm_bytes";

namespace detail {
inline std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, res.ptr);
}

inline std::string opt_num(const std::optional<double>& v) { return v ? shortest(*v) : std::string(); }
}  // namespace detail

inline void write_csv(const std::vector<MetricsRow>& rows, std::ostream& os) {
  os << kCsvHeader << '\n';
  for (const MetricsRow& r : rows) {
    os << r.strategy << ',' << r.gpus << ',' << (r.feasible ? "true" : "false") << ','
       << detail::opt_num(r.throughput_tokens_per_s) << ',' << detail::opt_num(r.mfu) << ','
       << detail::opt_num(r.elapsed_s) << ',' << detail::opt_num(r.stall_s) << ','
       << r.peak_hbm_bytes << '\n';
  }
}

inline nlohmann::ordered_json to_json(const MetricsRow& r) {
  nlohmann::ordered_json j;
  j["strategy"] = r.strategy;
  j["gpus"] = r.gpus;
  j["feasible"] = r.feasible;
  if (r.throughput_tokens_per_s) j["throughput_tokens_per_s"] = *r.throughput_tokens_per_s;
  if (r.mfu) j["mfu"] = *r.mfu;
  if (r.elapsed_s) j["elapsed_s"] = *r.elapsed_s;
  if (r.stall_s) j["stall_s"] = *r.stall_s;
  j["peak_hbm_bytes"] = r.peak_hbm_bytes;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline MetricsRow row_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.strategy = j.at("strategy").get<std::string>();
  r.gpus = j.at("gpus").get<std::uint32_t>();
  r.feasible = j.at("feasible").get<bool>();
  auto num = [&](const char* k, std::optional<double>& dst) {
    if (j.contains(k)) dst = j.at(k).get<double>();
  };
  num("throughput_tokens_per_s", r.throughput_tokens_per_s);
  num("mfu", r.mfu);
  num("elapsed_s", r.elapsed_s);
  num("stall_s", r.stall_s);
  r.peak_hbm_bytes = j.at("peak_hbm_bytes").get<Bytes>();
  r.note = j.value("note", std::string());
  return r;
}

inline void write_jsonl(const std::vector<MetricsRow>& rows, std::ostream& os) {
  for (const MetricsRow& r : rows) os << to_json(r).dump() << '\n';
}

inline std::vector<MetricsRow> read_jsonl(std::istream& is) {
  std::vector<MetricsRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    rows.push_back(row_from_json(nlohmann::json::parse(line)));
  }
  return rows;
}

inline void emit_report(const std::vector<MetricsRow>& rows, std::ostream& os, ReportFormat f) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  if (f == ReportFormat::csv) {
    write_csv(rows, os);
  } else {
    write_jsonl(rows, os);
  }
}

inline void emit_report(const std::vector<MetricsRow>& rows, const std::string& path,
                        ReportFormat f) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open report '" + path + "' for writing");
  emit_report(rows, os, f);
  os.flush();
  if (!os) throw std::runtime_error("write failed for report '" + path + "'");
}

}  // namespace prefillsim
