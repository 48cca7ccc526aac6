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

// prefillsim command-line driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefillsim/prefillsim.hpp"

namespace {

using namespace prefillsim;

// Flags shared by the config-driven subcommands.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::vector<std::string> strategies;
  std::vector<std::uint32_t> gpus;
  bool kv_free = false;
  bool offload = false;
  std::optional<std::uint32_t> window;
};

void add_common(CLI::App* cmd, Overrides& o, bool cells) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the config seed");
  if (!cells) return;
  cmd->add_option("--strategy", o.strategies, "Strategy name(s), comma separated")->delimiter(',');
  cmd->add_option("--gpus", o.gpus, "Parallel degree(s), comma separated")->delimiter(',');
  cmd->add_flag("--kv-free", o.kv_free, "Free KV after each request (dp_asyncep)");
  cmd->add_flag("--offload", o.offload, "Stream experts from host memory (dp_asyncep)");
  cmd->add_option("--window", o.window, "Offload prefetch window in layers")->check(CLI::PositiveNumber);
}

void add_output(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--out", o.out, "Output path (default: config output.path, else stdout)");
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "jsonl"}));
}

ExperimentConfig load(const Overrides& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.skew.seed = detail::derive_seed(c.seed, 0x5CE3ULL);
  }
  if (!o.strategies.empty()) {
    // Keep whatever AsyncEP settings the config carried.
    Strategy async_proto{StrategyKind::dp_asyncep, false, 2};
    for (const Strategy& s : c.strategies) {
      if (is_asyncep(s.kind)) async_proto = s;
    }
    c.strategies.clear();
    for (const std::string& name : o.strategies) {
      auto k = parse_strategy_kind(name);
      if (!k) throw ConfigError("--strategy", "unknown strategy '" + name + "'");
      c.strategies.push_back(is_asyncep(*k) ? async_proto : Strategy{*k});
    }
  }
  if (!o.gpus.empty()) {
    c.gpus = o.gpus;
    for (std::uint32_t p : c.gpus) {
      if (p < 1) throw ConfigError("--gpus", "must be >= 1");
    }
    std::sort(c.gpus.begin(), c.gpus.end());
    c.gpus.erase(std::unique(c.gpus.begin(), c.gpus.end()), c.gpus.end());
  }
  if (o.kv_free) c.kv_free = true;
  for (Strategy& s : c.strategies) {
    if (!is_asyncep(s.kind)) continue;
    if (o.offload) s.offload = true;
    if (o.window) s.window = *o.window;
    validate(s);
  }
  if (!o.out.empty()) c.output_path = o.out;
  if (!o.format.empty()) c.output_format = o.format;
  return c;
}

void write_rows(const std::vector<MetricsRow>& rows, const ExperimentConfig& c) {
  const ReportFormat f = *parse_report_format(c.output_format);
  if (c.output_path.empty()) {
    emit_report(rows, std::cout, f);
  } else {
    emit_report(rows, c.output_path, f);
  }
}

int cmd_run(const Overrides& o, bool single_cell) {
  const ExperimentConfig c = load(o);
  if (single_cell && (c.strategies.size() != 1 || c.gpus.size() != 1)) {
    throw ConfigError("strategies", "simulate runs one (strategy, gpus) cell; got " +
                                        std::to_string(c.strategies.size()) + " x " +
                                        std::to_string(c.gpus.size()) + " (use sweep)");
  }
  const auto rows = run_experiment(c);
  write_rows(rows, c);
  // Infeasible cells are results, not errors; cell exceptions are.
  for (const MetricsRow& r : rows) {
    if (r.note.rfind("error: ", 0) == 0) {
      std::cerr << r.strategy << " P=" << r.gpus << ": " << r.note << '\n';
      return 1;
    }
  }
  return 0;
}

int cmd_gen(const std::string& config, const std::string& regime, std::optional<std::uint64_t> seed,
            const std::string& out) {
  ExperimentConfig c;
  if (!config.empty()) c = load_config(config);
  if (!regime.empty()) {
    auto r = find_regime(regime);
    if (!r) throw ConfigError("--regime", "unknown regime '" + regime + "'");
    c.workload.kind = WorkloadKind::synthetic;
    c.workload.regime = *r;
  }
  if (config.empty() && regime.empty()) throw ConfigError("gen", "need --config or --regime");
  if (seed) c.seed = *seed;
  const Trace t = build_trace(c);
  if (out.empty()) {
    write_trace(t, std::cout);
  } else {
    write_trace(t, out);
  }
  std::cerr << "wrote " << t.requests.size() << " requests\n";
  return 0;
}

// Per-cell analytic quantities for a batch of `tokens` tokens on each engine.
int cmd_calc(const Overrides& o, std::optional<std::uint64_t> tokens_opt) {
  const ExperimentConfig c = load(o);
  const std::uint64_t tokens = tokens_opt.value_or(c.scheduler.n_ref);
  const ModelConfig& m = c.model;
  const bool csv = c.output_format == "csv";
  std::ostringstream os;
  if (csv) {
    os << "strategy,gpus,tokens,comm_bytes_per_layer,weights_bytes,kv_bytes,act_bytes,feasible,"
          "threshold_fallback,threshold_calibrated,t_c_s,t_e_s,eq1_threshold\n";
  }
  for (const Strategy& s : c.strategies) {
    for (std::uint32_t p : c.gpus) {
      ClusterConfig cl = c.cluster;
      cl.devices = p;
      const bool kv_free = c.kv_free && is_asyncep(s.kind);
      const Bytes comm = per_layer_comm_bytes(s.kind, p, 1, tokens, m);
      const FeasibilityReport fr = feasibility_check(s, p, BatchShape{1, tokens}, m, cl, kv_free);
      const ThresholdCalibration cal = calibrate_threshold(s, cl, m, c.scheduler.n_ref);
      // Literal form: the per-layer exchange time the threshold must cover.
      const double t_ep = is_asyncep(s.kind) ? asyncep_transfer_budget(s, p, m, cl.link)
                                             : transfer_time(comm, cl.link.nvlink_bw, cl.link.latency_floor);
      const double fallback = fallback_threshold(cl.gamma, m, c.scheduler.n_ref);
      const double eq1 = eq1_threshold(t_ep, cl);
      if (csv) {
        os << to_string(s.kind) << ',' << p << ',' << tokens << ',' << comm << ',' << fr.breakdown.weights_bytes
           << ',' << fr.breakdown.kv_bytes << ',' << fr.breakdown.act_bytes << ','
           << (fr.feasible ? "true" : "false") << ',' << detail::shortest(fallback) << ','
           << detail::shortest(cal.threshold) << ',' << detail::shortest(cal.t_c) << ','
           << detail::shortest(cal.t_e) << ',' << detail::shortest(eq1) << '\n';
      } else {
        nlohmann::ordered_json j;
        j["strategy"] = to_string(s.kind);
        j["gpus"] = p;
        j["tokens"] = tokens;
        j["comm_bytes_per_layer"] = comm;
        j["weights_bytes"] = fr.breakdown.weights_bytes;
        j["kv_bytes"] = fr.breakdown.kv_bytes;
        j["act_bytes"] = fr.breakdown.act_bytes;
        j["feasible"] = fr.feasible;
        j["threshold_fallback"] = fallback;
        j["threshold_calibrated"] = cal.threshold;
        j["t_c_s"] = cal.t_c;
        j["t_e_s"] = cal.t_e;
        j["eq1_threshold"] = eq1;
        os << j.dump() << '\n';
      }
    }
  }
  if (c.output_path.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(c.output_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + c.output_path + "' for writing");
    f << os.str();
  }
  return 0;
}

// Invariant checks over every cell of a config.
int cmd_validate(const Overrides& o) {
  const ExperimentConfig c = load(o);
  const Trace trace = build_trace(c);
  int failed = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << '\n';
    failed += ok ? 0 : 1;
  };
  std::uint64_t tokens = 0;
  for (const Request& r : trace.requests) tokens += r.total_tokens();
  check(!trace.requests.empty(), "workload has requests (" + std::to_string(trace.requests.size()) + ")");

  for (const Strategy& s : c.strategies) {
    for (std::uint32_t p : c.gpus) {
      const std::string cell = std::string(to_string(s.kind)) + " P=" + std::to_string(p);
      if (p == 1 && s.kind != StrategyKind::pp_pp) {
        check(per_layer_comm_bytes(s.kind, 1, 1, c.scheduler.n_ref, c.model) == 0, cell + ": no comm at P=1");
      }
      CellStats st;
      const MetricsRow a = run_cell(c, s, p, trace, &st);
      const MetricsRow b = run_cell(c, s, p, trace);
      check(a == b, cell + ": deterministic");
      ClusterConfig cl = c.cluster;
      cl.devices = p;
      check(st.calibration.threshold >= cl.gamma * st.calibration.c_dummy || !a.feasible,
            cell + ": threshold >= gamma * C_dummy");
      if (!a.feasible) {
        check(!a.throughput_tokens_per_s && !a.note.empty(), cell + ": infeasible row has no timing");
        continue;
      }
      check(st.prompt_tokens == tokens, cell + ": every token scheduled");
      check(st.executed_tokens <= st.prompt_tokens, cell + ": cache credit never negative");
      const double prod = *a.throughput_tokens_per_s * *a.elapsed_s;
      check(std::abs(prod - static_cast<double>(tokens)) <= 1e-9 * static_cast<double>(tokens),
            cell + ": throughput x elapsed = tokens");
      check(*a.mfu > 0.0 && *a.mfu <= cl.curve.eta_max * (1 + 1e-12), cell + ": 0 < MFU <= eta_max");
      check(*a.stall_s >= 0.0, cell + ": stall >= 0");
      check(a.peak_hbm_bytes <= cl.hbm_bytes, cell + ": peak HBM within capacity");
    }
  }
  std::cout << failed << " checks failed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefillsim: prefill-only MoE serving simulator"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);

  Overrides sim_o, sweep_o, calc_o, val_o;
  CLI::App* sim = app.add_subcommand("simulate", "Run one (strategy, gpus) cell of a config");
  add_common(sim, sim_o, true);
  add_output(sim, sim_o);

  CLI::App* sweep = app.add_subcommand("sweep", "Run every strategy x gpus cell of a config");
  add_common(sweep, sweep_o, true);
  add_output(sweep, sweep_o);

  std::string gen_config, gen_regime, gen_out;
  std::optional<std::uint64_t> gen_seed;
  CLI::App* gen = app.add_subcommand("gen", "Write a synthetic trace (JSONL)");
  gen->add_option("--config", gen_config, "Config whose workload to generate")->check(CLI::ExistingFile);
  gen->add_option("--regime", gen_regime, "short | medium | long | ultra_long");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--out", gen_out, "Output path (default stdout)");

  std::optional<std::uint64_t> calc_tokens;
  CLI::App* calc = app.add_subcommand("calc", "Print comm bytes, memory and thresholds per cell");
  add_common(calc, calc_o, true);
  add_output(calc, calc_o);
  calc->add_option("--tokens", calc_tokens, "Tokens per engine (default scheduler.n_ref)");

  CLI::App* val = app.add_subcommand("validate", "Check simulator and scheduler invariants on a config");
  add_common(val, val_o, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_run(sim_o, true);
    if (*sweep) return cmd_run(sweep_o, false);
    if (*gen) return cmd_gen(gen_config, gen_regime, gen_seed, gen_out);
    if (*calc) return cmd_calc(calc_o, calc_tokens);
    if (*val) return cmd_validate(val_o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
