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

#ifndef ASYVR_VR_CORE_HPP
#define ASYVR_VR_CORE_HPP

#include <optional>

#include "asyvr/problem.hpp"
#include "asyvr/trace.hpp"

namespace asyvr {

/// Epoch anchor: x̃ and μ = ∇f(x̃).
struct Snapshot {
  Vec x_tilde;
  Vec mu;
  std::int64_t epoch = 0;
};

template <FiniteSum P>
Snapshot take_snapshot(const P& prob, std::span<const double> x,
                       std::int64_t epoch) {
  Snapshot s;
  s.x_tilde.assign(x.begin(), x.end());
  s.mu = grad_full(prob, x);
  s.epoch = epoch;
  return s;
}

struct MiniBatch {
  std::vector<Index> indices;
  Index size() const { return indices.size(); }
};

/// b indices drawn uniformly with replacement from [0, n). b == n is the
/// full batch 0..n−1 and draws nothing.
inline MiniBatch sample_batch(Rng& rng, Index n, Index b) {
  MiniBatch batch;
  batch.indices.resize(b);
  if (b == n) {
    for (Index i = 0; i < n; ++i) batch.indices[i] = i;
    return batch;
  }
  for (auto& i : batch.indices) i = rng.below(n);
  return batch;
}

/// Parameter vectors a worker actually used, one per batch element, plus the
/// delay each one carries. A single shared vector may be given instead of
/// one per element.
struct StaleReads {
  std::vector<Vec> points;
  std::vector<std::int64_t> tau;

  std::span<const double> at(Index k) const {
    return points.size() == 1 ? points[0] : points[k];
  }
};

// -----------------------------------------------------------------------------
// Variance-reduced gradient kernels. All executors go through these so that
// equal inputs yield bit-identical steps regardless of architecture.

/// out = (1/b) Σ_k ∇f_{batch[k]}(point_at(k)).
template <FiniteSum P, typename PointAt>
void batch_mean_grad(const P& prob, std::span<const Index> batch,
                     PointAt&& point_at, std::span<double> out) {
  sum_sample_grads(prob, batch, point_at, out);
  const auto b = static_cast<double>(batch.size());
  for (double& v : out) v /= b;
}

/// v = (g_stale − g_snap) + μ.
inline void combine_vr(std::span<const double> g_stale,
                       std::span<const double> g_snap,
                       std::span<const double> mu, std::span<double> v) {
  for (Index j = 0; j < v.size(); ++j) v[j] = (g_stale[j] - g_snap[j]) + mu[j];
}

/// Scratch buffers for the kernels, one per worker.
struct VrWorkspace {
  explicit VrWorkspace(Index d) : g_stale(d), g_snap(d) {}
  Vec g_stale, g_snap;
};

template <FiniteSum P, typename PointAt>
void vr_gradient_into(const P& prob, std::span<const Index> batch,
                      PointAt&& point_at, const Snapshot& snap,
                      std::span<double> v, VrWorkspace& ws) {
  batch_mean_grad(prob, batch, point_at, ws.g_stale);
  batch_mean_grad(
      prob, batch, [&](Index) -> std::span<const double> { return snap.x_tilde; },
      ws.g_snap);
  combine_vr(ws.g_stale, ws.g_snap, snap.mu, v);
}

/// v = (1/b) Σ [∇f_i(x̂_i) − ∇f_i(x̃) + ∇f(x̃)], with x̂_i the stale read of
/// batch element i.
template <FiniteSum P>
Vec vr_gradient(const P& prob, const StaleReads& stale, const Snapshot& snap,
                const MiniBatch& batch) {
  require(batch.size() >= 1, "vr_gradient: empty batch");
  require(stale.points.size() == 1 || stale.points.size() == batch.size(),
          "vr_gradient: stale reads not aligned with batch");
  require(stale.tau.empty() || stale.tau.size() == batch.size(),
          "vr_gradient: delays not aligned with batch");
  for (const auto& pt : stale.points) detail::check_point(prob, pt);
  for (Index i : batch.indices) detail::check_sample(prob, i);
  Vec v(prob.dim());
  VrWorkspace ws(prob.dim());
  vr_gradient_into(prob, batch.indices,
                   [&](Index k) { return stale.at(k); }, snap, v, ws);
  return v;
}

/// u = vr_gradient with every read at the consistent x_current.
template <FiniteSum P>
Vec ideal_vr_gradient(const P& prob, std::span<const double> x_current,
                      const Snapshot& snap, const MiniBatch& batch) {
  require(batch.size() >= 1, "ideal_vr_gradient: empty batch");
  detail::check_point(prob, x_current);
  for (Index i : batch.indices) detail::check_sample(prob, i);
  Vec v(prob.dim());
  VrWorkspace ws(prob.dim());
  vr_gradient_into(prob, batch.indices, [&](Index) { return x_current; }, snap,
                   v, ws);
  return v;
}

// -----------------------------------------------------------------------------
// Learning rates

struct SgdSchedule {
  double alpha = 0.01;
  double beta = 0.0;
};

/// η_s = α / (1+s)^β
inline double poly_lr(const SgdSchedule& sched, std::int64_t s) {
  require(s >= 0, "poly_lr: epoch must be >= 0");
  require(sched.alpha > 0.0, "poly_lr: alpha must be > 0");
  require(sched.beta >= 0.0 && sched.beta <= 1.0, "poly_lr: beta in [0,1]");
  if (sched.beta == 0.0) return sched.alpha;
  return sched.alpha / std::pow(1.0 + static_cast<double>(s), sched.beta);
}

// -----------------------------------------------------------------------------
// Trace recording shared by every executor.

inline constexpr double kDivergenceLoss = 1e12;

namespace detail {

/// Stream ids. Batch sampling of worker w uses kBatchStream + w, coordinate
/// selection uses kCoordStream + w.
inline constexpr std::uint64_t kBatchStream = 0;
inline constexpr std::uint64_t kCoordStream = 1u << 20;
inline constexpr std::uint64_t kDelayStream = 1u << 21;

template <FiniteSum P>
class Recorder {
 public:
  Recorder(const P& prob, Trace& trace, ClockMode clock, std::int64_t m)
      : prob_(prob), trace_(trace), clock_(clock) {
    trace_.iters_per_epoch = m;
  }

  /// Appends a row; returns false (and marks the trace) on divergence.
  bool record(std::int64_t epoch, std::int64_t iter,
              std::span<const double> x, const Vec* grad, double sum_v,
              double sum_u) {
    TraceRecord r;
    r.epoch = epoch;
    r.iter = iter;
    r.wall_ns = clock_.now(logical_time ? static_cast<std::uint64_t>(*logical_time)
                                        : trace_.grad_evals);
    r.sum_v_sq = sum_v;
    r.sum_u_sq = sum_u;
    if (!all_finite(x)) {
      r.loss = std::numeric_limits<double>::quiet_NaN();
      r.grad_norm_sq = r.loss;
      trace_.records.push_back(r);
      return diverge(epoch, iter, "non-finite parameters");
    }
    r.loss = eval_loss(prob_, x);
    r.grad_norm_sq = grad ? norm_sq(*grad) : norm_sq(grad_full(prob_, x));
    trace_.records.push_back(r);
    if (!std::isfinite(r.loss) || r.loss > kDivergenceLoss)
      return diverge(epoch, iter, "loss " + std::to_string(r.loss));
    return true;
  }

  // Logical time source; defaults to the gradient-evaluation counter.
  const std::int64_t* logical_time = nullptr;

 private:
  bool diverge(std::int64_t epoch, std::int64_t iter, const std::string& why) {
    trace_.diverged = true;
    trace_.diagnostic = "diverged at epoch " + std::to_string(epoch) +
                        ", iter " + std::to_string(iter) + ": " + why;
    return false;
  }

  const P& prob_;
  Trace& trace_;
  TraceClock clock_;
};

inline bool on_stride(std::int64_t t, std::int64_t stride) {
  return stride > 0 && t > 0 && t % stride == 0;
}

}  // namespace detail

// -----------------------------------------------------------------------------
// Serial reference methods

struct SgdConfig {
  std::int64_t epochs = 10;
  std::int64_t iters_per_epoch = 100;
  Index b = 10;
  SgdSchedule sched;
  std::uint64_t seed = 1;
  std::optional<Vec> x0;
  ClockMode clock = ClockMode::wall;
  // Record ‖∇f‖² every `grad_stride` inner iterations (0: epoch ends only).
  std::int64_t grad_stride = 0;
};

/// Mini-batch SGD with x ← x − η_s·(1/b)Σ∇f_i(x), η_s = poly_lr(sched, s).
template <FiniteSum P>
Trace run_sgd(const P& prob, const SgdConfig& cfg) {
  require(cfg.epochs >= 0, "run_sgd: epochs must be >= 0");
  require(cfg.iters_per_epoch >= 1, "run_sgd: iters_per_epoch must be >= 1");
  require(cfg.b >= 1, "run_sgd: b must be >= 1");
  poly_lr(cfg.sched, 0);

  const Index d = prob.dim();
  const Index n = prob.num_samples();
  Vec x = cfg.x0 ? *cfg.x0 : prob.initial_point(cfg.seed);
  detail::check_point(prob, x);

  Trace trace;
  detail::Recorder rec(prob, trace, cfg.clock, cfg.iters_per_epoch);
  Rng rng(cfg.seed, detail::kBatchStream);
  Vec g(d);
  if (rec.record(0, 0, x, nullptr, 0.0, 0.0)) {
    for (std::int64_t s = 0; s < cfg.epochs; ++s) {
      const double eta = poly_lr(cfg.sched, s);
      double sum_g = 0.0;
      for (std::int64_t t = 0; t < cfg.iters_per_epoch; ++t) {
        if (detail::on_stride(t, cfg.grad_stride) &&
            !rec.record(s, t, x, nullptr, 0.0, 0.0))
          break;
        const MiniBatch batch = sample_batch(rng, n, cfg.b);
        batch_mean_grad(prob, batch.indices,
                        [&](Index) -> std::span<const double> { return x; }, g);
        trace.grad_evals += cfg.b;
        sum_g += norm_sq(g);
        for (Index j = 0; j < d; ++j) x[j] = x[j] - eta * g[j];
      }
      if (trace.diverged ||
          !rec.record(s, cfg.iters_per_epoch, x, nullptr, sum_g,
                      std::numeric_limits<double>::quiet_NaN()))
        break;
    }
  }
  trace.final_x = std::move(x);
  return trace;
}

struct SvrgConfig {
  std::int64_t S = 10;
  std::int64_t m = 100;
  Index b = 10;
  double eta = 0.01;
  std::uint64_t seed = 1;
  std::optional<Vec> warm_start_x;
  ClockMode clock = ClockMode::wall;
  std::int64_t grad_stride = 0;
};

inline void validate(const SvrgConfig& cfg) {
  require(cfg.S >= 0, "svrg: S must be >= 0");
  require(cfg.m >= 1, "svrg: m must be >= 1");
  require(cfg.b >= 1, "svrg: b must be >= 1");
  require(cfg.eta > 0.0, "svrg: eta must be > 0");
}

/// Serial SVRG: per epoch take a snapshot, then m full-vector steps
/// x ← x − η·u_t; the next epoch starts from the last inner iterate.
template <FiniteSum P>
Trace run_serial_svrg(const P& prob, const SvrgConfig& cfg) {
  validate(cfg);
  const Index d = prob.dim();
  const Index n = prob.num_samples();
  Vec x = cfg.warm_start_x ? *cfg.warm_start_x : prob.initial_point(cfg.seed);
  detail::check_point(prob, x);

  Trace trace;
  detail::Recorder rec(prob, trace, cfg.clock, cfg.m);
  Rng rng(cfg.seed, detail::kBatchStream);
  VrWorkspace ws(d);
  Vec v(d);

  Snapshot snap = take_snapshot(prob, x, 0);
  trace.grad_evals += n;
  if (rec.record(0, 0, x, &snap.mu, 0.0, 0.0)) {
    for (std::int64_t s = 0; s < cfg.S; ++s) {
      double sum_v = 0.0;
      for (std::int64_t t = 0; t < cfg.m; ++t) {
        if (detail::on_stride(t, cfg.grad_stride) &&
            !rec.record(s, t, x, nullptr, 0.0, 0.0))
          break;
        const MiniBatch batch = sample_batch(rng, n, cfg.b);
        vr_gradient_into(prob, batch.indices,
                         [&](Index) -> std::span<const double> { return x; },
                         snap, v, ws);
        trace.grad_evals += 2 * cfg.b;
        sum_v += norm_sq(v);
        for (Index j = 0; j < d; ++j) x[j] = x[j] - cfg.eta * v[j];
      }
      if (trace.diverged) break;
      if (!all_finite(x)) {
        rec.record(s, cfg.m, x, nullptr, sum_v, sum_v);
        break;
      }
      snap = take_snapshot(prob, x, s + 1);
      trace.grad_evals += n;
      // Serially v_t = u_t, so both accumulators coincide.
      if (!rec.record(s, cfg.m, x, &snap.mu, sum_v, sum_v)) break;
    }
  }
  trace.final_x = std::move(x);
  return trace;
}

}  // namespace asyvr

#endif  // ASYVR_VR_CORE_HPP
