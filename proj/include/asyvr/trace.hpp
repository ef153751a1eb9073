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

#ifndef ASYVR_TRACE_HPP
#define ASYVR_TRACE_HPP

#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "asyvr/core.hpp"

namespace asyvr {

/// One row of a run trace. `iter == iters_per_epoch` marks an epoch-summary
/// row, which is the only kind carrying the Σ‖v‖² / Σ‖u‖² accumulators; the
/// other rows hold zero there. NaN in sum_u_sq means u was not tracked.
struct TraceRecord {
  std::int64_t epoch = 0;
  std::int64_t iter = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  std::int64_t wall_ns = 0;
  double sum_v_sq = 0.0;
  double sum_u_sq = 0.0;

  /// Bitwise on the floating-point fields, so NaN accumulators compare equal.
  bool operator==(const TraceRecord& o) const {
    auto same = [](double a, double b) {
      return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
    };
    return epoch == o.epoch && iter == o.iter && same(loss, o.loss) &&
           same(grad_norm_sq, o.grad_norm_sq) && wall_ns == o.wall_ns &&
           same(sum_v_sq, o.sum_v_sq) && same(sum_u_sq, o.sum_u_sq);
  }
};

struct Trace {
  std::vector<TraceRecord> records;
  std::int64_t iters_per_epoch = 0;
  Vec final_x;
  bool diverged = false;
  std::string diagnostic;
  // Work actually performed by the algorithm, in per-sample gradient
  // evaluations (diagnostic u_t evaluations excluded).
  std::uint64_t grad_evals = 0;
  // Distributed runs only.
  std::vector<std::int64_t> epoch_max_staleness;
  std::int64_t dropped_gradients = 0;
  std::int64_t sim_ticks = 0;

  const TraceRecord& last() const { return records.back(); }

  std::vector<TraceRecord> epoch_summaries() const {
    std::vector<TraceRecord> out;
    for (const auto& r : records)
      if (r.iter == iters_per_epoch && iters_per_epoch > 0) out.push_back(r);
    return out;
  }
};

/// Time base for the wall_ns column. `logical` replaces wall time by a
/// deterministic work counter so traces are reproducible byte for byte.
enum class ClockMode { wall, logical };

class TraceClock {
 public:
  explicit TraceClock(ClockMode mode)
      : mode_(mode), start_(std::chrono::steady_clock::now()) {}

  std::int64_t now(std::uint64_t logical_units) const {
    if (mode_ == ClockMode::logical)
      return static_cast<std::int64_t>(logical_units);
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  ClockMode mode_;
  std::chrono::steady_clock::time_point start_;
};

inline constexpr const char* kTraceHeader =
    "epoch,iter,loss,grad_norm_sq,wall_ns,sum_v_sq,sum_u_sq";

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.epoch << ',' << r.iter << ',' << detail::fmt_double(r.loss) << ','
        << detail::fmt_double(r.grad_norm_sq) << ',' << r.wall_ns << ','
        << detail::fmt_double(r.sum_v_sq) << ','
        << detail::fmt_double(r.sum_u_sq) << '\n';
  }
}

inline void write_trace_csv(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  write_trace_csv(out, trace);
}

/// Parses a trace CSV. `iters_per_epoch` is not stored in the file and must
/// be supplied by the caller to recover epoch-summary rows.
inline Trace read_trace_csv(std::istream& in, std::int64_t iters_per_epoch) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw FormatError("trace: missing or wrong header");
  Trace trace;
  trace.iters_per_epoch = iters_per_epoch;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[7];
    int k = 0;
    while (k < 7 && std::getline(ss, cell[k], ',')) ++k;
    if (k != 7)
      throw FormatError("trace line " + std::to_string(lineno) +
                        ": expected 7 columns");
    try {
      TraceRecord r;
      r.epoch = std::stoll(cell[0]);
      r.iter = std::stoll(cell[1]);
      r.loss = std::stod(cell[2]);
      r.grad_norm_sq = std::stod(cell[3]);
      r.wall_ns = std::stoll(cell[4]);
      r.sum_v_sq = std::stod(cell[5]);
      r.sum_u_sq = std::stod(cell[6]);
      trace.records.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError("trace line " + std::to_string(lineno) +
                        ": malformed number");
    }
  }
  return trace;
}

inline Trace read_trace_csv(const std::string& path,
                            std::int64_t iters_per_epoch) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_trace_csv(in, iters_per_epoch);
}

/// (1/T) Σ_s Σ_{t<m} ‖∇f(x_t)‖² from a trace recorded at stride 1: every
/// record except the last one is an inner iterate x_t with t < m.
inline double ergodic_mean_grad_norm_sq(const Trace& trace) {
  require(trace.records.size() >= 2, "ergodic mean: trace too short");
  double s = 0.0;
  for (Index k = 0; k + 1 < trace.records.size(); ++k)
    s += trace.records[k].grad_norm_sq;
  return s / static_cast<double>(trace.records.size() - 1);
}

}  // namespace asyvr

#endif  // ASYVR_TRACE_HPP
