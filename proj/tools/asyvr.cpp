// Copyright 2026 The asyvr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// asyvr: command-line experiment runner.
//
//   asyvr run <config> [--set key=value]...
//   asyvr sweep <config> --workers 1,2,4 [--set key=value]...
//   asyvr theory <config> [--set key=value]...
//   asyvr check-corollary <trace.csv> <config> [--set key=value]...
//
// ASYVR_OUTPUT_DIR overrides the config's `output` directory.

#include <iostream>

#include <CLI11.hpp>

#include "asyvr/asyvr.hpp"

namespace {

using namespace asyvr;

RunConfig load_with_overrides(const std::string& path,
                              const std::vector<std::string>& sets) {
  RunConfig cfg = load_config(path);
  for (const auto& s : sets) apply_override(cfg, s);
  validate_config(cfg);
  return cfg;
}

int cmd_run(const RunConfig& cfg) {
  const ExperimentArtifacts art = run_experiment(cfg);
  const auto& s = art.summary;
  std::cout << "final_loss " << s["final_loss"].get<double>()
            << "  final_grad_norm_sq " << s["final_grad_norm_sq"].get<double>()
            << "  wall_s " << s["wall_time_s"].get<double>() << "\n"
            << "summary " << art.summary_path << "\n";
  if (art.trace.diverged) std::cerr << art.trace.diagnostic << "\n";
  if (art.exit_code == kExitInfeasible)
    std::cerr << "theory-derived settings are infeasible (some Gamma_t <= 0)\n";
  return art.exit_code;
}

int cmd_sweep(const RunConfig& cfg, const std::string& workers) {
  std::vector<Index> counts;
  std::stringstream ss(workers);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::int64_t k = detail::to_int(detail::trim(item));
    if (k < 1) throw ConfigError("--workers: counts must be >= 1");
    counts.push_back(static_cast<Index>(k));
  }
  const SweepResult res = sweep_workers(cfg, counts, output_dir(cfg));
  std::cout << "target_loss " << detail::fmt_double(res.target) << "  unit "
            << res.time_unit << "\n"
            << "workers  time  speedup  status\n";
  bool all_ok = true;
  for (const auto& row : res.rows) {
    std::cout << row.workers << "  " << row.time << "  "
              << (row.speedup ? detail::fmt_double(*row.speedup) : "-") << "  "
              << row.status << "\n";
    all_ok = all_ok && row.status == "ok";
  }
  std::cout << "table " << res.table_path << "\n";
  return all_ok ? kExitOk : kExitFailed;
}

int cmd_theory(const RunConfig& cfg) {
  const AnyProblem prob = build_problem(cfg);
  const Resolved r = resolve(cfg, prob);
  const theory::Report rep = theory::make_report(r.params);
  nlohmann::json j = theory::to_json(rep);
  const auto& p = r.params;
  j["delay_bound_sq"] = theory::delay_bound(p.mode, p.u0, p.b, p.d);
  j["delta_sq"] = p.Delta * p.Delta;
  j["delta_within_bound"] = p.Delta * p.Delta < j["delay_bound_sq"].get<double>();
  j["side_condition"] =
      theory::side_condition(p.mode, p.n, p.alpha, p.u0, p.b, p.d, p.Delta);
  std::cout << j.dump(2) << "\n";
  std::cout << "verdict: " << (rep.feasible ? "feasible" : "infeasible")
            << " (gamma = " << detail::fmt_double(rep.gamma) << ", "
            << (rep.lyapunov_ok ? "c/beta condition holds"
                                : "c/beta condition violated")
            << ")\n";
  return rep.feasible ? kExitOk : kExitInfeasible;
}

int cmd_check(const std::string& trace_path, const RunConfig& cfg) {
  const AnyProblem prob = build_problem(cfg);
  const Resolved r = resolve(cfg, prob);
  const Trace trace = read_trace_csv(trace_path, r.m);
  const CorollaryReport rep = check_corollary(trace, r.params);
  std::cout << to_json(rep).dump(2) << "\n"
            << "verdict: " << rep.message << "\n";
  if (!rep.applicable) return kExitInfeasible;
  return rep.pass ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous variance-reduced SGD experiments"};
  app.require_subcommand(1);
  std::string config, trace_path, workers;
  std::vector<std::string> sets;

  auto* run = app.add_subcommand("run", "run one experiment");
  auto* sweep = app.add_subcommand("sweep", "run once per worker count");
  auto* theory_cmd = app.add_subcommand("theory", "evaluate the theory bounds");
  auto* check = app.add_subcommand("check-corollary",
                                   "check sum v^2 against sum u^2 in a trace");
  check->add_option("trace", trace_path, "trace CSV")->required();
  for (auto* sub : {run, sweep, theory_cmd, check}) {
    sub->add_option("config", config, "key = value config file")->required();
    sub->add_option("--set", sets, "override a config field (key=value)");
  }
  sweep->add_option("--workers", workers, "comma-separated worker counts")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;  // --help exits 0
  }
  try {
    const RunConfig cfg = load_with_overrides(config, sets);
    if (run->parsed()) return cmd_run(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg, workers);
    if (theory_cmd->parsed()) return cmd_theory(cfg);
    return cmd_check(trace_path, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
}
