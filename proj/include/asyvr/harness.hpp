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

#ifndef ASYVR_HARNESS_HPP
#define ASYVR_HARNESS_HPP

#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "asyvr/config.hpp"
#include "asyvr/data.hpp"
#include "asyvr/dist_async.hpp"
#include "asyvr/problem.hpp"
#include "asyvr/shared_async.hpp"
#include "asyvr/theory.hpp"
#include "asyvr/trace.hpp"
#include "asyvr/vr_core.hpp"

namespace asyvr {

/// Environment variable that, when set, replaces the config's output dir.
inline constexpr const char* kOutputDirEnv = "ASYVR_OUTPUT_DIR";

/// Process exit codes of the runner.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailed = 1,      // check did not pass
  kExitUsage = 2,       // bad config or arguments
  kExitDiverged = 3,
  kExitInfeasible = 4,  // theory-derived settings with some Γ_t ≤ 0
};

inline std::string output_dir(const RunConfig& cfg) {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? std::string(env) : cfg.output;
}

// -----------------------------------------------------------------------------
// Problem construction

inline Dataset load_dataset(const RunConfig& c) {
  if (c.data == "idx") return load_idx(c.idx_images, c.idx_labels, c.limit);
  SyntheticSpec spec;
  spec.n = c.n;
  spec.p = c.p;
  spec.num_classes = c.classes;
  spec.noise = c.noise;
  spec.seed = c.data_seed;
  return gen_synthetic(spec);
}

inline AnyProblem build_problem(const RunConfig& c) {
  auto data = std::make_shared<const Dataset>(load_dataset(c));
  if (c.problem == "least_squares") return LeastSquares(data, c.C);
  if (c.problem == "logistic_nonconvex")
    return LogisticNonconvex(data, c.lambda, c.C);
  return Mlp(data, c.hidden, c.C);
}

inline Index problem_dim(const AnyProblem& prob) {
  return std::visit([](const auto& p) { return p.dim(); }, prob);
}

// -----------------------------------------------------------------------------
// Step size, inner length and the matching theory parameters

inline theory::Mode theory_mode_for(const RunConfig& c) {
  if (c.theory_mode == "shared") return theory::Mode::shared;
  if (c.theory_mode == "distributed") return theory::Mode::distributed;
  return c.arch == "shared" ? theory::Mode::shared : theory::Mode::distributed;
}

/// Serial runs have no staleness whatever `delta` says.
inline std::int64_t effective_delta(const RunConfig& c) {
  return c.arch == "serial" ? 0 : c.delta;
}

struct Resolved {
  double L = 0.0;
  double eta = 0.0;
  std::int64_t m = 0;
  bool from_theory = false;  // eta or m came from recommended_settings
  theory::Params params;
};

template <FiniteSum P>
Resolved resolve(const RunConfig& c, const P& prob) {
  Resolved r;
  r.L = c.L ? *c.L : estimate_L(prob, 20, c.seed);
  const theory::Mode mode = theory_mode_for(c);
  const auto d = static_cast<double>(prob.dim());
  const auto n = static_cast<double>(prob.num_samples());
  const auto b = static_cast<double>(c.b);
  r.eta = c.eta.value_or(0.0);
  r.m = c.m.value_or(0);
  if (!c.eta || !c.m) {
    const theory::Settings s =
        theory::recommended_settings(mode, n, c.alpha, c.u0, b, d, r.L);
    if (!c.eta) r.eta = s.eta;
    if (!c.m) r.m = s.m;
    r.from_theory = true;
  }
  theory::Params& p = r.params;
  p.L = r.L;
  p.eta = r.eta;
  p.beta = c.beta.value_or(2.0 * r.L);
  p.b = b;
  p.m = r.m;
  p.d = d;
  p.n = n;
  p.Delta = static_cast<double>(effective_delta(c));
  p.u0 = c.u0;
  p.alpha = c.alpha;
  p.mode = mode;
  return r;
}

inline Resolved resolve(const RunConfig& c, const AnyProblem& prob) {
  return std::visit([&](const auto& p) { return resolve(c, p); }, prob);
}

// -----------------------------------------------------------------------------
// Per-epoch bound on the stale-gradient sum: Σ‖v‖² ≤ factor·Σ‖u‖²

struct EpochRatio {
  std::int64_t epoch = 0;
  double sum_v_sq = 0.0;
  double sum_u_sq = 0.0;
  double ratio = 0.0;
  bool pass = false;
};

struct CorollaryReport {
  bool applicable = false;
  bool pass = false;
  double factor = 0.0;
  std::string message;
  std::vector<EpochRatio> epochs;
};

/// 2d/(d − 2L²Δ²η²) in shared mode, 2/(1 − 2L²Δ²η²) in distributed mode;
/// nullopt when the denominator is not positive.
inline std::optional<double> corollary_factor(const theory::Params& p) {
  const double D = p.mode == theory::Mode::shared ? p.d : 1.0;
  const double den = D - 2.0 * p.L * p.L * p.Delta * p.Delta * p.eta * p.eta;
  if (!(den > 0.0)) return std::nullopt;
  return 2.0 * D / den;
}

/// Compares the per-epoch accumulators of a trace against the bound. With
/// Δ = 0 the two sums must be equal to the bit.
inline CorollaryReport check_corollary(const Trace& trace,
                                         const theory::Params& p) {
  const auto rows = trace.epoch_summaries();
  require(!rows.empty(), "corollary check: trace has no epoch-end rows");
  for (const auto& r : rows)
    require(!std::isnan(r.sum_u_sq),
            "corollary check: trace lacks the sum_u_sq accumulator");
  CorollaryReport rep;
  const auto factor = corollary_factor(p);
  if (!factor) {
    rep.message = "bound inapplicable";
    return rep;
  }
  rep.applicable = true;
  rep.factor = *factor;
  rep.pass = true;
  for (const auto& r : rows) {
    EpochRatio e;
    e.epoch = r.epoch;
    e.sum_v_sq = r.sum_v_sq;
    e.sum_u_sq = r.sum_u_sq;
    e.ratio = r.sum_u_sq > 0.0 ? r.sum_v_sq / r.sum_u_sq
                               : (r.sum_v_sq == 0.0 ? 1.0 : INFINITY);
    e.pass = p.Delta == 0.0 ? r.sum_v_sq == r.sum_u_sq
                            : r.sum_v_sq <= rep.factor * r.sum_u_sq;
    rep.pass = rep.pass && e.pass;
    rep.epochs.push_back(e);
  }
  rep.message = rep.pass ? "pass" : "violated";
  return rep;
}

inline nlohmann::json to_json(const CorollaryReport& r) {
  nlohmann::json j;
  j["applicable"] = r.applicable;
  j["pass"] = r.pass;
  j["factor"] = r.factor;
  j["message"] = r.message;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"sum_v_sq", e.sum_v_sq},
                           {"sum_u_sq", e.sum_u_sq},
                           {"ratio", e.ratio},
                           {"pass", e.pass}});
  return j;
}

// -----------------------------------------------------------------------------
// Executors

inline ClockMode clock_for(const RunConfig& c) {
  if (c.timing == "wall") return ClockMode::wall;
  if (c.timing == "logical") return ClockMode::logical;
  const bool live = c.arch == "shared" && c.shared_mode == "live";
  return live ? ClockMode::wall : ClockMode::logical;
}

inline StalenessModel staleness_model(const std::string& s) {
  if (s == "uniform") return StalenessModel::uniform;
  if (s == "adversarial_max") return StalenessModel::adversarial_max;
  return StalenessModel::none;
}

inline DelayKind delay_kind(const std::string& s) {
  if (s == "uniform") return DelayKind::uniform;
  if (s == "fixed") return DelayKind::fixed;
  return DelayKind::fifo_zero;
}

/// Side outputs an executor may produce besides its trace.
struct RunExtras {
  std::optional<StalenessSchedule> schedule;
  std::string events;
};

template <FiniteSum P>
Trace run_svrg_phase(const P& prob, const RunConfig& c, const Resolved& r,
                     std::optional<Vec> warm, RunExtras& extras) {
  const ClockMode clock = clock_for(c);
  if (c.arch == "serial") {
    SvrgConfig sc;
    sc.S = c.S;
    sc.m = r.m;
    sc.b = c.b;
    sc.eta = r.eta;
    sc.seed = c.seed;
    sc.warm_start_x = std::move(warm);
    sc.clock = clock;
    sc.grad_stride = c.grad_stride;
    return run_serial_svrg(prob, sc);
  }
  if (c.arch == "shared") {
    SharedConfig sc;
    sc.S = c.S;
    sc.m = r.m;
    sc.b = c.b;
    sc.eta = r.eta;
    sc.block_size = c.block_size;
    sc.num_workers = c.workers;
    sc.seed = c.seed;
    sc.mode = c.shared_mode == "live" ? SharedMode::live : SharedMode::replay;
    sc.warm_start_x = std::move(warm);
    sc.clock = clock;
    sc.grad_stride = c.grad_stride;
    sc.track_u = c.track_u;
    if (sc.mode == SharedMode::replay) {
      sc.schedule = make_staleness_schedule(c.S, r.m, c.delta,
                                            staleness_model(c.staleness), c.seed);
      extras.schedule = sc.schedule;
    }
    return run_shared_async(prob, sc);
  }
  DistConfig dc;
  dc.S = c.S;
  dc.m = r.m;
  dc.b = c.b;
  dc.eta = r.eta;
  dc.num_workers = c.workers;
  dc.delay = make_delay_model(delay_kind(c.delay), c.delta, c.seed, c.tau);
  dc.seed = c.seed;
  dc.warm_start_x = std::move(warm);
  dc.clock = clock;
  dc.track_u = c.track_u;
  dc.latency = c.latency;
  std::ostringstream log;
  if (c.event_log) dc.event_log = &log;
  Trace t = run_distributed(prob, dc);
  extras.events = log.str();
  return t;
}

struct GridPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

/// Runs SGD for every (α, β) in the config grid and keeps the run with the
/// lowest final training loss. Diverged runs never win.
template <FiniteSum P>
Trace run_sgd_grid(const P& prob, const RunConfig& c, std::int64_t epochs,
                   std::int64_t iters, std::vector<GridPoint>& grid) {
  std::optional<Trace> best;
  double best_loss = INFINITY;
  for (double a : c.sgd_alpha)
    for (double be : c.sgd_beta) {
      SgdConfig sc;
      sc.epochs = epochs;
      sc.iters_per_epoch = iters;
      sc.b = c.b;
      sc.sched = {a, be};
      sc.seed = c.seed;
      sc.clock = clock_for(c);
      sc.grad_stride = c.grad_stride;
      Trace t = run_sgd(prob, sc);
      const double loss = t.diverged ? INFINITY : t.last().loss;
      grid.push_back({a, be, t.last().loss, t.diverged});
      if (!best || loss < best_loss) {
        best_loss = loss;
        best = std::move(t);
      }
    }
  return std::move(*best);
}

// -----------------------------------------------------------------------------
// run_experiment

struct ExperimentArtifacts {
  std::string out_dir;
  std::vector<std::string> traces;  // last entry is the main trace
  std::string summary_path;
  nlohmann::json summary;
  Trace trace;
  std::optional<Trace> sgd_trace;
  int exit_code = kExitOk;
};

namespace detail {

inline nlohmann::json trace_json(const Trace& t) {
  nlohmann::json j;
  j["final_loss"] = t.records.empty() ? 0.0 : t.last().loss;
  j["final_grad_norm_sq"] = t.records.empty() ? 0.0 : t.last().grad_norm_sq;
  j["diverged"] = t.diverged;
  if (t.diverged) j["diagnostic"] = t.diagnostic;
  j["grad_evals"] = t.grad_evals;
  j["records"] = t.records.size();
  if (!t.epoch_max_staleness.empty()) {
    j["epoch_max_staleness"] = t.epoch_max_staleness;
    j["dropped_gradients"] = t.dropped_gradients;
    j["sim_ticks"] = t.sim_ticks;
  }
  return j;
}

inline std::string write_text(const std::filesystem::path& path,
                              const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  return path.string();
}

}  // namespace detail

/// Runs one configuration and writes its artifacts into `out_dir`
/// (trace CSVs, summary.json, the replay schedule and the event log when
/// produced). Wall time excludes dataset loading and L estimation and
/// includes every snapshot pass.
inline ExperimentArtifacts run_experiment(const RunConfig& cfg,
                                          const std::string& out_dir) {
  validate_config(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const AnyProblem prob = build_problem(cfg);
  const Resolved r = resolve(cfg, prob);
  const Index d = problem_dim(prob);
  if (cfg.arch == "shared" && cfg.block_size > d)
    throw ConfigError("field 'block_size': exceeds problem dimension " +
                      std::to_string(d));

  ExperimentArtifacts art;
  art.out_dir = out_dir;
  RunExtras extras;
  std::vector<GridPoint> grid;
  const auto t0 = std::chrono::steady_clock::now();
  std::visit(
      [&](const auto& p) {
        if (cfg.method == "sgd") {
          art.trace = run_sgd_grid(p, cfg, cfg.S, r.m, grid);
          return;
        }
        std::optional<Vec> warm;
        if (cfg.method == "sgd_then_svrg" && cfg.sgd_epochs > 0) {
          art.sgd_trace = run_sgd_grid(p, cfg, cfg.sgd_epochs, r.m, grid);
          if (art.sgd_trace->diverged) {
            art.trace = *art.sgd_trace;
            return;
          }
          warm = art.sgd_trace->final_x;
        }
        art.trace = run_svrg_phase(p, cfg, r, std::move(warm), extras);
      },
      prob);
  const double wall_s = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();

  const fs::path dir(out_dir);
  nlohmann::json artifacts;
  if (art.sgd_trace) {
    const std::string path = (dir / "trace_sgd.csv").string();
    write_trace_csv(path, *art.sgd_trace);
    art.traces.push_back(path);
    artifacts["sgd_trace"] = path;
  }
  {
    const std::string path = (dir / "trace.csv").string();
    write_trace_csv(path, art.trace);
    art.traces.push_back(path);
    artifacts["trace"] = path;
  }
  if (extras.schedule) {
    std::ostringstream s;
    write_schedule(s, *extras.schedule);
    artifacts["schedule"] = detail::write_text(dir / "schedule.txt", s.str());
  }
  if (cfg.event_log && cfg.arch == "distributed")
    artifacts["events"] = detail::write_text(dir / "events.log", extras.events);
  artifacts["config"] =
      detail::write_text(dir / "config.conf", serialize_config(cfg));

  nlohmann::json s;
  s["method"] = cfg.method;
  s["arch"] = cfg.arch;
  s["problem"] = cfg.problem;
  s["dim"] = d;
  s["L"] = r.L;
  s["eta"] = r.eta;
  s["m"] = r.m;
  s["result"] = detail::trace_json(art.trace);
  s["final_loss"] = s["result"]["final_loss"];
  s["final_grad_norm_sq"] = s["result"]["final_grad_norm_sq"];
  if (art.sgd_trace) s["sgd_phase"] = detail::trace_json(*art.sgd_trace);
  if (!grid.empty()) {
    s["sgd_grid"] = nlohmann::json::array();
    for (const auto& g : grid)
      s["sgd_grid"].push_back({{"alpha", g.alpha},
                               {"beta", g.beta},
                               {"final_loss", g.final_loss},
                               {"diverged", g.diverged}});
  }
  s["wall_time_s"] = wall_s;
  s["timing"] = {
      {"trace_clock", clock_for(cfg) == ClockMode::wall ? "wall_ns" : "logical"},
      {"note", "wall time excludes data loading; includes snapshot passes"}};

  // Theory verdict. f* is exact for least squares only.
  std::optional<double> gap;
  std::string bound_kind = "none";
  if (const auto* ls = std::get_if<LeastSquares>(&prob)) {
    const double f0 = art.trace.records.front().loss;
    gap = std::max(0.0, f0 - eval_loss(*ls, least_squares_minimizer(*ls)));
    bound_kind = "exact f*";
  }
  const theory::Report rep = theory::make_report(
      r.params, gap, static_cast<double>(std::max<std::int64_t>(1, cfg.S * r.m)));
  s["theory"] = theory::to_json(rep);
  s["theory"]["bound_fstar"] = bound_kind;
  s["theory"]["from_theory"] = r.from_theory;

  const bool has_u = cfg.method != "sgd" && !art.trace.epoch_summaries().empty() &&
                     !std::isnan(art.trace.epoch_summaries().front().sum_u_sq);
  if (has_u) s["corollary"] = to_json(check_corollary(art.trace, r.params));

  s["artifacts"] = artifacts;
  art.summary_path = (dir / "summary.json").string();
  s["artifacts"]["summary"] = art.summary_path;
  art.summary = s;
  detail::write_text(art.summary_path, s.dump(2) + "\n");

  if (art.trace.diverged)
    art.exit_code = kExitDiverged;
  else if (r.from_theory && !rep.feasible && cfg.method != "sgd")
    art.exit_code = kExitInfeasible;
  return art;
}

inline ExperimentArtifacts run_experiment(const RunConfig& cfg) {
  return run_experiment(cfg, output_dir(cfg));
}

// -----------------------------------------------------------------------------
// Worker sweeps

struct SweepRow {
  Index workers = 0;
  std::int64_t time = 0;  // to first loss <= target, trace clock units
  double final_loss = 0.0;
  std::string status;     // ok | diverged | target_not_reached
  std::optional<double> speedup;
  std::string trace_path;
};

struct SweepResult {
  double target = 0.0;
  std::string time_unit;
  std::vector<SweepRow> rows;
  std::map<Index, double> speedup;
  std::string table_path;
};

/// Time of the first record at or below `target`, or nullopt.
inline std::optional<std::int64_t> time_to_target(const Trace& t, double target) {
  for (const auto& r : t.records)
    if (r.loss <= target) return r.wall_ns;
  return std::nullopt;
}

/// Runs `cfg` once per worker count (sequentially) and reports
/// time(1)/time(k), with time measured to the first loss at or below
/// target = (1-worker final loss)·1.01.
inline SweepResult sweep_workers(RunConfig cfg, const std::vector<Index>& counts,
                                 const std::string& out_dir) {
  require(std::find(counts.begin(), counts.end(), Index{1}) != counts.end(),
          "sweep: worker counts must include 1");
  std::vector<Index> order = counts;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  SweepResult res;
  res.time_unit = clock_for(cfg) == ClockMode::wall
                      ? "ns"
                      : (cfg.arch == "distributed" ? "sim_ticks" : "grad_evals");
  std::map<Index, double> times;
  for (Index w : order) {
    cfg.workers = w;
    const auto dir = (fs::path(out_dir) / ("workers_" + std::to_string(w))).string();
    const ExperimentArtifacts art = run_experiment(cfg, dir);
    SweepRow row;
    row.workers = w;
    row.trace_path = art.traces.back();
    row.final_loss = art.trace.records.empty() ? NAN : art.trace.last().loss;
    if (w == 1) res.target = row.final_loss * 1.01;
    if (art.trace.diverged) {
      row.status = "diverged";
    } else if (const auto tt = time_to_target(art.trace, res.target)) {
      row.status = "ok";
      row.time = *tt;
      if (row.time > 0) times[w] = static_cast<double>(row.time);
    } else {
      row.status = "target_not_reached";
    }
    res.rows.push_back(row);
  }
  if (times.count(1)) res.speedup = theory::speedup(times);
  for (auto& row : res.rows)
    if (auto it = res.speedup.find(row.workers); it != res.speedup.end())
      row.speedup = it->second;

  std::ostringstream tab;
  tab << "workers,time,final_loss,speedup,status\n";
  for (const auto& row : res.rows)
    tab << row.workers << ',' << row.time << ','
        << detail::fmt_double(row.final_loss) << ','
        << (row.speedup ? detail::fmt_double(*row.speedup) : "") << ','
        << row.status << '\n';
  res.table_path =
      detail::write_text(fs::path(out_dir) / "speedup.csv", tab.str());
  return res;
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json j;
  j["target_loss"] = r.target;
  j["time_unit"] = r.time_unit;
  j["table"] = r.table_path;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back(
        {{"workers", row.workers},
         {"time", row.time},
         {"final_loss", row.final_loss},
         {"speedup", row.speedup ? nlohmann::json(*row.speedup)
                                 : nlohmann::json(nullptr)},
         {"status", row.status},
         {"trace", row.trace_path}});
  return j;
}

}  // namespace asyvr

#endif  // ASYVR_HARNESS_HPP
