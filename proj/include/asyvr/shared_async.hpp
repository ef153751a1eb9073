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

#ifndef ASYVR_SHARED_ASYNC_HPP
#define ASYVR_SHARED_ASYNC_HPP

#include <atomic>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include "asyvr/vr_core.hpp"

namespace asyvr {

/// Parameter vector whose coordinates are individually atomic. Reading the
/// whole vector while writers are active yields an inconsistent mixture of
/// versions; no single coordinate is ever torn.
class SharedParams {
 public:
  explicit SharedParams(std::span<const double> init)
      : d_(init.size()), data_(std::make_unique<std::atomic<double>[]>(d_)) {
    for (Index k = 0; k < d_; ++k)
      data_[k].store(init[k], std::memory_order_relaxed);
  }

  Index size() const { return d_; }

  double load(Index k) const { return data_[k].load(std::memory_order_relaxed); }

  void subtract(Index k, double delta) {
    data_[k].fetch_sub(delta, std::memory_order_relaxed);
  }

  /// Coordinate-by-coordinate read, no global lock.
  void read_into(std::span<double> out) const {
    for (Index k = 0; k < d_; ++k) out[k] = load(k);
  }

  Vec snapshot() const {
    Vec out(d_);
    read_into(out);
    return out;
  }

 private:
  Index d_;
  std::unique_ptr<std::atomic<double>[]> data_;
};

namespace detail {

inline void check_coords(std::span<const Index> coords, Index d,
                         std::span<const double> v) {
  require(v.size() == d, "apply_coord_update: gradient dimension mismatch");
  std::vector<bool> seen(d, false);
  for (Index k : coords) {
    require(k < d, "apply_coord_update: coordinate " + std::to_string(k) +
                       " out of range");
    require(!seen[k], "apply_coord_update: duplicate coordinate " +
                          std::to_string(k));
    seen[k] = true;
  }
}

}  // namespace detail

/// (x)_k ← (x)_k − η·v_k for every k in `coords`, each atomically.
inline void apply_coord_update(SharedParams& x, std::span<const Index> coords,
                               std::span<const double> v, double eta) {
  detail::check_coords(coords, x.size(), v);
  for (Index k : coords) x.subtract(k, eta * v[k]);
}

/// Plain-vector form used by the replay simulator.
inline void apply_coord_update(std::span<double> x,
                               std::span<const Index> coords,
                               std::span<const double> v, double eta) {
  detail::check_coords(coords, x.size(), v);
  for (Index k : coords) x[k] = x[k] - eta * v[k];
}

// -----------------------------------------------------------------------------
// Staleness schedules

enum class StalenessModel { none, uniform, adversarial_max };

/// For each global iteration g = s·m + t, the set J(g) of earlier iterations
/// of the same epoch whose updates the reader missed. An entry may hold one
/// set shared by the whole mini-batch or one set per batch element.
struct StalenessSchedule {
  std::int64_t delta = 0;
  std::int64_t m = 1;
  std::vector<std::vector<std::vector<std::int64_t>>> sets;

  const std::vector<std::int64_t>& missed(std::int64_t g, Index k) const {
    const auto& per_sample = sets[static_cast<Index>(g)];
    return per_sample.size() == 1 ? per_sample[0] : per_sample[k];
  }

  bool operator==(const StalenessSchedule&) const = default;
};

/// Rejects schedules that miss iterations, look into the future, reach more
/// than Δ back, or cross an epoch boundary.
inline void validate_schedule(const StalenessSchedule& sched,
                              std::int64_t total_iters, Index b) {
  require(sched.delta >= 0, "schedule: delta must be >= 0");
  require(sched.m >= 1, "schedule: m must be >= 1");
  require(static_cast<std::int64_t>(sched.sets.size()) >= total_iters,
          "schedule covers " + std::to_string(sched.sets.size()) +
              " iterations, need " + std::to_string(total_iters));
  for (std::int64_t g = 0; g < static_cast<std::int64_t>(sched.sets.size());
       ++g) {
    const auto& per_sample = sched.sets[static_cast<Index>(g)];
    require(per_sample.size() == 1 || per_sample.size() == b,
            "schedule: iteration " + std::to_string(g) +
                " has neither one set nor one per batch element");
    const std::int64_t epoch_start = (g / sched.m) * sched.m;
    for (const auto& set : per_sample)
      for (std::int64_t j : set) {
        require(j < g, "schedule: J(" + std::to_string(g) +
                           ") references non-past iteration " +
                           std::to_string(j));
        require(g - j <= sched.delta,
                "schedule: J(" + std::to_string(g) + ") reaches " +
                    std::to_string(g - j) + " > delta back");
        require(j >= epoch_start, "schedule: J(" + std::to_string(g) +
                                      ") crosses an epoch boundary");
      }
  }
}

/// J(t) drawn from the window of the last min(t, Δ) iterations of the epoch:
/// empty (none), each member kept with probability ½ (uniform), or the full
/// window in descending order (adversarial_max).
inline StalenessSchedule make_staleness_schedule(std::int64_t S, std::int64_t m,
                                                 std::int64_t delta,
                                                 StalenessModel model,
                                                 std::uint64_t seed) {
  require(delta >= 0, "make_staleness_schedule: delta must be >= 0");
  require(S >= 0 && m >= 1, "make_staleness_schedule: need S >= 0, m >= 1");
  StalenessSchedule sched;
  sched.delta = delta;
  sched.m = m;
  sched.sets.resize(static_cast<Index>(S * m));
  Rng rng(seed, 0x5343);
  for (std::int64_t g = 0; g < S * m; ++g) {
    const std::int64_t t = g % m;
    const std::int64_t window = std::min(t, delta);
    std::vector<std::int64_t> set;
    for (std::int64_t back = 1; back <= window; ++back) {
      if (model == StalenessModel::adversarial_max ||
          (model == StalenessModel::uniform && (rng() >> 63) != 0))
        set.push_back(g - back);
    }
    sched.sets[static_cast<Index>(g)].push_back(std::move(set));
  }
  return sched;
}

/// Text form: a `# delta=<Δ> m=<m>` header, then one `g: j1,j2,...` line per
/// iteration; per-sample sets are separated by `|`.
inline void write_schedule(std::ostream& out, const StalenessSchedule& sched) {
  out << "# delta=" << sched.delta << " m=" << sched.m << '\n';
  for (Index g = 0; g < sched.sets.size(); ++g) {
    out << g << ':';
    const auto& per_sample = sched.sets[g];
    for (Index k = 0; k < per_sample.size(); ++k) {
      if (k > 0) out << " |";
      for (Index q = 0; q < per_sample[k].size(); ++q)
        out << (q == 0 ? " " : ",") << per_sample[k][q];
    }
    out << '\n';
  }
}

inline StalenessSchedule read_schedule(std::istream& in) {
  StalenessSchedule sched;
  std::string line;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# delta=%ld m=%ld", &sched.delta, &sched.m) !=
          2)
    throw FormatError("schedule: missing '# delta=<D> m=<m>' header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto colon = line.find(':');
    const auto where = "schedule line " + std::to_string(lineno);
    if (colon == std::string::npos) throw FormatError(where + ": missing ':'");
    try {
      if (std::stoll(line.substr(0, colon)) !=
          static_cast<std::int64_t>(sched.sets.size()))
        throw FormatError(where + ": iterations out of order");
    } catch (const std::logic_error&) {
      throw FormatError(where + ": bad iteration number");
    }
    std::vector<std::vector<std::int64_t>> per_sample;
    std::stringstream groups(line.substr(colon + 1));
    std::string group;
    while (std::getline(groups, group, '|')) {
      std::vector<std::int64_t> set;
      std::stringstream items(group);
      std::string item;
      while (std::getline(items, item, ',')) {
        if (item.find_first_not_of(' ') == std::string::npos) continue;
        try {
          set.push_back(std::stoll(item));
        } catch (const std::logic_error&) {
          throw FormatError(where + ": bad index '" + item + "'");
        }
      }
      per_sample.push_back(std::move(set));
    }
    if (per_sample.empty()) per_sample.emplace_back();
    sched.sets.push_back(std::move(per_sample));
  }
  return sched;
}

// -----------------------------------------------------------------------------
// Executors

enum class SharedMode { live, replay };

struct SharedConfig {
  std::int64_t S = 10;
  std::int64_t m = 100;
  Index b = 10;
  double eta = 0.01;
  // Coordinates written per iteration; 0 means all d.
  Index block_size = 0;
  Index num_workers = 1;
  std::uint64_t seed = 1;
  SharedMode mode = SharedMode::live;
  std::optional<StalenessSchedule> schedule;
  std::optional<Vec> warm_start_x;
  ClockMode clock = ClockMode::wall;
  // Replay mode only: stride for mid-epoch ‖∇f‖² records, and whether u_t is
  // evaluated alongside v_t.
  std::int64_t grad_stride = 0;
  bool track_u = true;
};

namespace detail {

inline Index resolve_block(const SharedConfig& cfg, Index d) {
  const Index block = cfg.block_size == 0 ? d : cfg.block_size;
  require(block >= 1 && block <= d, "shared: block_size must be in [1, d]");
  return block;
}

inline void validate_shared(const SharedConfig& cfg) {
  require(cfg.S >= 0, "shared: S must be >= 0");
  require(cfg.m >= 1, "shared: m must be >= 1");
  require(cfg.b >= 1, "shared: b must be >= 1");
  require(cfg.eta > 0.0, "shared: eta must be > 0");
  require(cfg.num_workers >= 1, "shared: num_workers must be >= 1");
}

/// Coordinates for one update: all of them when the block spans the whole
/// vector (no random draws), otherwise a fresh uniform block.
inline void pick_block(Rng& rng, Index d, Index block,
                       std::vector<Index>& coords) {
  if (block == d) {
    coords.resize(d);
    for (Index k = 0; k < d; ++k) coords[k] = k;
  } else {
    coords = sample_without_replacement(rng, d, block);
  }
}

}  // namespace detail

/// Deterministic single-threaded simulation of the shared-memory algorithm:
/// each read x̂ is the current x with exactly the updates in J(t) subtracted.
template <FiniteSum P>
Trace replay_with_schedule(const P& prob, const SharedConfig& cfg,
                           const StalenessSchedule& sched) {
  detail::validate_shared(cfg);
  const Index d = prob.dim();
  const Index n = prob.num_samples();
  const Index block = detail::resolve_block(cfg, d);
  require(sched.m == cfg.m, "replay: schedule m differs from config m");
  validate_schedule(sched, cfg.S * cfg.m, cfg.b);

  Vec x = cfg.warm_start_x ? *cfg.warm_start_x : prob.initial_point(cfg.seed);
  detail::check_point(prob, x);

  Trace trace;
  detail::Recorder rec(prob, trace, cfg.clock, cfg.m);
  Rng batch_rng(cfg.seed, detail::kBatchStream);
  Rng coord_rng(cfg.seed, detail::kCoordStream);
  VrWorkspace ws(d);
  Vec v(d), u(d), g_cur(d);
  std::vector<Index> coords;
  std::vector<Vec> reads;
  // Per inner iteration of the current epoch: written coordinates and the
  // realized change x_{j+1} − x_j on them.
  std::vector<std::vector<Index>> hist_coords(static_cast<Index>(cfg.m));
  std::vector<Vec> hist_diff(static_cast<Index>(cfg.m));

  Snapshot snap = take_snapshot(prob, x, 0);
  trace.grad_evals += n;
  if (rec.record(0, 0, x, &snap.mu, 0.0, 0.0)) {
    for (std::int64_t s = 0; s < cfg.S; ++s) {
      double sum_v = 0.0, sum_u = 0.0;
      std::int64_t max_lag = 0;
      for (std::int64_t t = 0; t < cfg.m; ++t) {
        if (detail::on_stride(t, cfg.grad_stride) &&
            !rec.record(s, t, x, nullptr, 0.0, 0.0))
          break;
        const std::int64_t g = s * cfg.m + t;
        const MiniBatch batch = sample_batch(batch_rng, n, cfg.b);

        bool any_stale = false;
        for (Index k = 0; k < cfg.b && !any_stale; ++k)
          any_stale = !sched.missed(g, k).empty();
        if (any_stale) {
          reads.assign(cfg.b, x);
          for (Index k = 0; k < cfg.b; ++k) {
            for (std::int64_t j : sched.missed(g, k)) {
              const auto jl = static_cast<Index>(j - s * cfg.m);
              max_lag = std::max(max_lag, g - j);
              const auto& cs = hist_coords[jl];
              for (Index q = 0; q < cs.size(); ++q)
                reads[k][cs[q]] -= hist_diff[jl][q];
            }
          }
          vr_gradient_into(
              prob, batch.indices,
              [&](Index k) -> std::span<const double> { return reads[k]; },
              snap, v, ws);
        } else {
          vr_gradient_into(prob, batch.indices,
                           [&](Index) -> std::span<const double> { return x; },
                           snap, v, ws);
        }
        trace.grad_evals += 2 * cfg.b;
        sum_v += norm_sq(v);
        if (cfg.track_u) {
          if (any_stale) {
            batch_mean_grad(prob, batch.indices,
                            [&](Index) -> std::span<const double> { return x; },
                            g_cur);
            combine_vr(g_cur, ws.g_snap, snap.mu, u);
            sum_u += norm_sq(u);
          } else {
            sum_u += norm_sq(v);
          }
        }

        detail::pick_block(coord_rng, d, block, coords);
        const auto tl = static_cast<Index>(t);
        hist_coords[tl] = coords;
        hist_diff[tl].resize(coords.size());
        for (Index q = 0; q < coords.size(); ++q) {
          const Index k = coords[q];
          const double before = x[k];
          x[k] = before - cfg.eta * v[k];
          hist_diff[tl][q] = x[k] - before;
        }
      }
      if (trace.diverged) break;
      trace.epoch_max_staleness.push_back(max_lag);
      const double su =
          cfg.track_u ? sum_u : std::numeric_limits<double>::quiet_NaN();
      if (!all_finite(x)) {
        rec.record(s, cfg.m, x, nullptr, sum_v, su);
        break;
      }
      snap = take_snapshot(prob, x, s + 1);
      trace.grad_evals += n;
      if (!rec.record(s, cfg.m, x, &snap.mu, sum_v, su)) break;
    }
  }
  trace.final_x = std::move(x);
  return trace;
}

/// Multi-threaded run with real inconsistent reads. Exactly m updates are
/// admitted per epoch through a shared ticket counter; workers quiesce at
/// every snapshot. Only epoch-end rows are recorded and u_t is not tracked.
template <FiniteSum P>
Trace run_shared_live(const P& prob, const SharedConfig& cfg) {
  detail::validate_shared(cfg);
  const Index d = prob.dim();
  const Index n = prob.num_samples();
  const Index block = detail::resolve_block(cfg, d);
  const Index workers = cfg.num_workers;

  Vec x0 = cfg.warm_start_x ? *cfg.warm_start_x : prob.initial_point(cfg.seed);
  detail::check_point(prob, x0);
  SharedParams shared(x0);

  Trace trace;
  detail::Recorder rec(prob, trace, cfg.clock, cfg.m);
  std::vector<Rng> batch_rngs, coord_rngs;
  for (Index w = 0; w < workers; ++w) {
    batch_rngs.emplace_back(cfg.seed, detail::kBatchStream + w);
    coord_rngs.emplace_back(cfg.seed, detail::kCoordStream + w);
  }

  Snapshot snap = take_snapshot(prob, x0, 0);
  trace.grad_evals += n;
  if (rec.record(0, 0, x0, &snap.mu, 0.0, 0.0)) {
    for (std::int64_t s = 0; s < cfg.S; ++s) {
      std::atomic<std::int64_t> ticket{0};
      std::vector<double> worker_sum_v(workers, 0.0);
      auto work = [&](Index w) {
        VrWorkspace ws(d);
        Vec xhat(d), v(d);
        std::vector<Index> coords;
        while (ticket.fetch_add(1, std::memory_order_relaxed) < cfg.m) {
          const MiniBatch batch = sample_batch(batch_rngs[w], n, cfg.b);
          shared.read_into(xhat);
          vr_gradient_into(
              prob, batch.indices,
              [&](Index) -> std::span<const double> { return xhat; }, snap, v,
              ws);
          worker_sum_v[w] += norm_sq(v);
          detail::pick_block(coord_rngs[w], d, block, coords);
          for (Index k : coords) shared.subtract(k, cfg.eta * v[k]);
        }
      };
      if (workers == 1) {
        work(0);
      } else {
        std::vector<std::jthread> pool;
        for (Index w = 0; w < workers; ++w) pool.emplace_back(work, w);
      }
      trace.grad_evals += static_cast<std::uint64_t>(2 * cfg.b * cfg.m);
      double sum_v = 0.0;
      for (double sv : worker_sum_v) sum_v += sv;

      const Vec x = shared.snapshot();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      if (!all_finite(x)) {
        rec.record(s, cfg.m, x, nullptr, sum_v, nan);
        break;
      }
      snap = take_snapshot(prob, x, s + 1);
      trace.grad_evals += n;
      if (!rec.record(s, cfg.m, x, &snap.mu, sum_v, nan)) break;
    }
  }
  trace.final_x = shared.snapshot();
  return trace;
}

/// Dispatches on `cfg.mode`. Replay without an explicit schedule runs with
/// J(t) empty for every t.
template <FiniteSum P>
Trace run_shared_async(const P& prob, const SharedConfig& cfg) {
  if (cfg.mode == SharedMode::live) return run_shared_live(prob, cfg);
  if (cfg.schedule) return replay_with_schedule(prob, cfg, *cfg.schedule);
  return replay_with_schedule(
      prob, cfg,
      make_staleness_schedule(cfg.S, cfg.m, 0, StalenessModel::none, cfg.seed));
}

}  // namespace asyvr

#endif  // ASYVR_SHARED_ASYNC_HPP
