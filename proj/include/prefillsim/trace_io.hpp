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

// Trace files: line-delimited JSON.
//
//   {"prefillsim_trace":1,"block_size":16}
//   {"id":0,"arrival_s":0.0,"group_id":7,"prefix_len":240,"suffix_len":16,"candidate_count":1}
//   ...
//
// Token ids (and so block hashes) are regenerated from (group_id, prefix_len).
// The header is optional on input; blank lines are ignored.

#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "prefillsim/block_hash.hpp"
#include "prefillsim/request.hpp"

namespace prefillsim {

inline constexpr int kTraceFormatVersion = 1;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& msg, const std::string& path = "")
      : std::runtime_error((path.empty() ? "" : path + ": ") + "line " + std::to_string(line) +
                           ": " + msg),
        line_(line),
        msg_(msg) {}
  std::size_t line() const { return line_; }
  const std::string& message() const { return msg_; }

 private:
  std::size_t line_;
  std::string msg_;
};

inline void write_trace(const Trace& t, std::ostream& os) {
  os << nlohmann::json{{"prefillsim_trace", kTraceFormatVersion}, {"block_size", t.block_size}}.dump()
     << '\n';
  for (const Request& r : t.requests) {
    nlohmann::json j;
    j["id"] = r.id;
    j["arrival_s"] = r.arrival_s;
    j["group_id"] = r.group_id;
    j["prefix_len"] = r.prefix_len;
    j["suffix_len"] = r.suffix_len;
    j["candidate_count"] = r.candidate_count;
    os << j.dump() << '\n';
  }
}

inline Trace read_trace(std::istream& is) {
  static const std::set<std::string> kFields = {"id",         "arrival_s",  "group_id",
                                                "prefix_len", "suffix_len", "candidate_count"};
  Trace t;
  std::string line;
  std::size_t lineno = 0;
  bool seen_record = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "expected a JSON object");
    try {
      if (j.contains("prefillsim_trace")) {
        if (seen_record) throw ParseError(lineno, "header after records");
        if (j.at("prefillsim_trace").get<int>() != kTraceFormatVersion) {
          throw ParseError(lineno, "unsupported trace version");
        }
        for (const auto& [k, v] : j.items()) {
          if (k != "prefillsim_trace" && k != "block_size") throw ParseError(lineno, "unknown header field '" + k + "'");
        }
        t.block_size = j.value("block_size", std::uint64_t{16});
        if (t.block_size == 0) throw ParseError(lineno, "block_size must be >= 1");
        continue;
      }
      for (const auto& [k, v] : j.items()) {
        if (!kFields.count(k)) throw ParseError(lineno, "unknown field '" + k + "'");
      }
      for (const auto& k : kFields) {
        if (!j.contains(k)) throw ParseError(lineno, "missing field '" + k + "'");
      }
      Request r;
      r.id = j.at("id").get<std::uint64_t>();
      r.arrival_s = j.at("arrival_s").get<double>();
      r.group_id = j.at("group_id").get<std::uint64_t>();
      r.prefix_len = j.at("prefix_len").get<std::uint64_t>();
      r.suffix_len = j.at("suffix_len").get<std::uint64_t>();
      r.candidate_count = j.at("candidate_count").get<std::uint32_t>();
      if (r.group_id >= (std::uint64_t{1} << 32)) throw ParseError(lineno, "group_id must be < 2^32");
      if (!(r.arrival_s >= 0.0)) throw ParseError(lineno, "arrival_s must be >= 0");
      r.prefix_blocks = synth_chain(r.group_id, r.prefix_len, t.block_size);
      t.requests.push_back(std::move(r));
      seen_record = true;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, std::string("bad field: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return t;
}

inline void write_trace(const Trace& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_trace(t, os);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline Trace read_trace(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open trace '" + path + "'");
  try {
    return read_trace(is);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.message(), path);
  }
}

}  // namespace prefillsim
