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

#ifndef ASYVR_DIST_ASYNC_HPP
#define ASYVR_DIST_ASYNC_HPP

#include <deque>
#include <ostream>
#include <queue>
#include <variant>

#include "asyvr/vr_core.hpp"

namespace asyvr {

/// Raised by the server state machine on a message that is invalid for its
/// current phase.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// -----------------------------------------------------------------------------
// Delay model

enum class DelayKind { fifo_zero, uniform, fixed };

/// How far behind the current iterate the channel serves parameters:
/// never (fifo_zero), uniformly in [0, Δ] (uniform), or exactly τ ≤ Δ
/// (fixed). The lag is always clipped to the iterations already taken in the
/// epoch.
struct DelayModel {
  DelayKind kind = DelayKind::fifo_zero;
  std::int64_t delta = 0;
  std::int64_t tau = 0;
  std::uint64_t seed = 0;
};

inline DelayModel make_delay_model(DelayKind kind, std::int64_t delta,
                                   std::uint64_t seed, std::int64_t tau = -1) {
  require(delta >= 0, "make_delay_model: delta must be >= 0");
  DelayModel dm;
  dm.kind = kind;
  dm.delta = delta;
  dm.seed = seed;
  dm.tau = kind == DelayKind::fixed ? (tau < 0 ? delta : tau) : 0;
  require(dm.tau <= delta, "make_delay_model: fixed tau exceeds delta");
  return dm;
}

class DelaySampler {
 public:
  explicit DelaySampler(const DelayModel& model)
      : model_(model), rng_(model.seed, detail::kDelayStream) {}

  /// Lag for parameters issued at inner iteration t.
  std::int64_t next(std::int64_t t) {
    const std::int64_t cap = std::min(model_.delta, t);
    switch (model_.kind) {
      case DelayKind::fifo_zero:
        return 0;
      case DelayKind::fixed:
        return std::min(model_.tau, t);
      case DelayKind::uniform:
        return static_cast<std::int64_t>(
            rng_.below(static_cast<Index>(cap) + 1));
    }
    return 0;
  }

  const DelayModel& model() const { return model_; }

 private:
  DelayModel model_;
  Rng rng_;
};

// -----------------------------------------------------------------------------
// Messages

struct BroadcastSnapshot {
  Index worker = 0;
  std::int64_t epoch = 0;
  Vec x_tilde;
};

/// Block partial sums Σ∇f_i(x̃) for the worker's contiguous block range,
/// starting at reduction block `first_block`.
struct FullGradPart {
  Index worker = 0;
  std::int64_t epoch = 0;
  Index first_block = 0;
  std::vector<Vec> partials;
};

struct ParamsForWork {
  Index worker = 0;
  std::int64_t epoch = 0;
  std::int64_t t_issued = 0;
  Vec x;
};

/// g_stale = (1/b)Σ∇f_i(x_{t−τ}), g_snap = (1/b)Σ∇f_i(x̃) on one batch.
struct GradPair {
  Index worker = 0;
  std::int64_t epoch = 0;
  std::int64_t t_issued = 0;
  Vec g_stale;
  Vec g_snap;
  std::vector<Index> batch;
};

using Message =
    std::variant<BroadcastSnapshot, FullGradPart, ParamsForWork, GradPair>;

inline const char* message_kind(const Message& msg) {
  static constexpr const char* names[] = {"BroadcastSnapshot", "FullGradPart",
                                          "ParamsForWork", "GradPair"};
  return names[msg.index()];
}

// -----------------------------------------------------------------------------
// Server

enum class ServerPhase { gather, inner, done };

struct ServerState {
  Vec x;
  Snapshot snapshot;
  std::int64_t epoch = 0;
  std::int64_t t = 0;
  double eta = 0.0;
  std::int64_t m = 1;
  std::int64_t S = 0;
  Index num_workers = 1;
  Index n = 0;
  ServerPhase phase = ServerPhase::gather;
  // Block partials received so far in this gather, indexed by block.
  std::vector<std::optional<Vec>> partials;
  Index parts_received = 0;
  // Recent iterates of this epoch, newest first; holds at most Δ+1.
  std::deque<Vec> history;
  DelaySampler delay;
  // Per-epoch Σ‖v_t‖².
  double sum_v = 0.0;

  ServerState(Vec x0, std::int64_t S_, std::int64_t m_, double eta_,
              Index workers, Index n_, const DelayModel& dm)
      : x(std::move(x0)),
        eta(eta_),
        m(m_),
        S(S_),
        num_workers(workers),
        n(n_),
        delay(dm) {
    require(m >= 1 && S >= 0, "server: need m >= 1 and S >= 0");
    require(eta > 0.0, "server: eta must be > 0");
    require(num_workers >= 1, "server: need at least one worker");
    require(n >= 1, "server: need at least one sample");
  }

  std::int64_t delta() const { return delay.model().delta; }
};

/// Reduction blocks [first, last) owned by `worker` in the snapshot gather.
inline std::pair<Index, Index> worker_blocks(Index n, Index workers,
                                             Index worker) {
  const Index blocks = num_reduce_blocks(n);
  return {worker * blocks / workers, (worker + 1) * blocks / workers};
}

namespace detail {

inline std::vector<Message> open_epoch(ServerState& st) {
  st.snapshot.x_tilde = st.x;
  st.snapshot.mu.clear();
  st.snapshot.epoch = st.epoch;
  st.phase = ServerPhase::gather;
  st.partials.assign(num_reduce_blocks(st.n), std::nullopt);
  st.parts_received = 0;
  std::vector<Message> out;
  for (Index w = 0; w < st.num_workers; ++w)
    out.emplace_back(BroadcastSnapshot{w, st.epoch, st.snapshot.x_tilde});
  return out;
}

}  // namespace detail

/// Parameters for `worker`: the iterate `lag` steps back, lag drawn from the
/// delay model.
inline ParamsForWork issue_work(ServerState& st, Index worker) {
  if (st.phase != ServerPhase::inner)
    throw ProtocolError("issue_work outside the inner loop");
  std::int64_t lag = st.delay.next(st.t);
  lag = std::min<std::int64_t>(lag, static_cast<std::int64_t>(st.history.size()) - 1);
  return {worker, st.epoch, st.t - lag, st.history[static_cast<Index>(lag)]};
}

/// Emits the first epoch's snapshot broadcast.
inline std::vector<Message> server_start(ServerState& st) {
  if (st.S == 0) {
    st.phase = ServerPhase::done;
    return {};
  }
  return detail::open_epoch(st);
}

/// Advances the server by one message and returns the replies.
///
/// FullGradPart accumulates the snapshot gradient; once every worker has
/// reported, μ = (1/n)Σ partials (in block order) and each worker gets
/// parameters. GradPair applies v = g_stale − g_snap + μ, x ← x − η·v, and
/// replies with new parameters; the m-th update closes the epoch and
/// broadcasts the next snapshot.
inline std::vector<Message> server_step(ServerState& st, const Message& msg) {
  std::vector<Message> out;
  if (const auto* part = std::get_if<FullGradPart>(&msg)) {
    if (st.phase != ServerPhase::gather || part->epoch != st.epoch)
      throw ProtocolError("FullGradPart outside the snapshot gather");
    for (Index k = 0; k < part->partials.size(); ++k) {
      auto& slot = st.partials.at(part->first_block + k);
      if (slot) throw ProtocolError("duplicate FullGradPart block");
      slot = part->partials[k];
    }
    if (++st.parts_received < st.num_workers) return out;
    Vec mu(st.x.size(), 0.0);
    for (const auto& p : st.partials) {
      if (!p) throw ProtocolError("snapshot gather finished with a gap");
      add_into(mu, *p);
    }
    for (double& v : mu) v /= static_cast<double>(st.n);
    st.snapshot.mu = std::move(mu);
    st.phase = ServerPhase::inner;
    st.t = 0;
    st.sum_v = 0.0;
    st.history.assign(1, st.x);
    for (Index w = 0; w < st.num_workers; ++w) out.emplace_back(issue_work(st, w));
    return out;
  }
  if (const auto* gp = std::get_if<GradPair>(&msg)) {
    if (st.phase != ServerPhase::inner || gp->epoch != st.epoch)
      throw ProtocolError("GradPair outside the inner loop of its epoch");
    const Index d = st.x.size();
    require(gp->g_stale.size() == d && gp->g_snap.size() == d,
            "GradPair: gradient dimension mismatch");
    Vec v(d);
    combine_vr(gp->g_stale, gp->g_snap, st.snapshot.mu, v);
    st.sum_v += norm_sq(v);
    for (Index j = 0; j < d; ++j) st.x[j] = st.x[j] - st.eta * v[j];
    ++st.t;
    st.history.push_front(st.x);
    while (static_cast<std::int64_t>(st.history.size()) > st.delta() + 1)
      st.history.pop_back();
    if (st.t < st.m) {
      out.emplace_back(issue_work(st, gp->worker));
      return out;
    }
    ++st.epoch;
    if (st.epoch >= st.S) {
      st.phase = ServerPhase::done;
      return out;
    }
    return detail::open_epoch(st);
  }
  throw ProtocolError(std::string("server cannot accept ") + message_kind(msg));
}

// -----------------------------------------------------------------------------
// Workers

/// Both batch means for one request. Returns nothing when the parameters
/// belong to a different epoch than the worker's snapshot.
template <FiniteSum P>
std::optional<GradPair> worker_step(const ParamsForWork& params,
                                    const Snapshot& local,
                                    const MiniBatch& batch, const P& prob) {
  if (params.epoch != local.epoch) return std::nullopt;
  require(batch.size() >= 1, "worker_step: empty batch");
  detail::check_point(prob, params.x);
  detail::check_point(prob, local.x_tilde);
  GradPair gp;
  gp.worker = params.worker;
  gp.epoch = params.epoch;
  gp.t_issued = params.t_issued;
  gp.batch = batch.indices;
  gp.g_stale.resize(prob.dim());
  gp.g_snap.resize(prob.dim());
  batch_mean_grad(prob, batch.indices,
                  [&](Index) -> std::span<const double> { return params.x; },
                  gp.g_stale);
  batch_mean_grad(
      prob, batch.indices,
      [&](Index) -> std::span<const double> { return local.x_tilde; },
      gp.g_snap);
  return gp;
}

template <FiniteSum P>
FullGradPart worker_full_grad(const BroadcastSnapshot& bs, Index workers,
                              const P& prob) {
  const auto [first, last] = worker_blocks(prob.num_samples(), workers, bs.worker);
  return {bs.worker, bs.epoch, first,
          block_grad_partials(prob, bs.x_tilde, first, last)};
}

// -----------------------------------------------------------------------------
// Discrete-event simulation

struct DistConfig {
  std::int64_t S = 10;
  std::int64_t m = 100;
  Index b = 10;
  double eta = 0.01;
  Index num_workers = 1;
  DelayModel delay;
  std::uint64_t seed = 1;
  std::optional<Vec> warm_start_x;
  ClockMode clock = ClockMode::logical;
  // Evaluate u_t at the server's consistent x_t for every applied gradient.
  bool track_u = true;
  // Ticks per message hop; a worker spends one tick per sample gradient.
  std::int64_t latency = 1;
  // Optional `time kind worker t_issued` audit log.
  std::ostream* event_log = nullptr;
};

/// Runs the server and workers over a deterministic priority queue of
/// (delivery time, sequence) events. The channel drops a gradient whose
/// staleness t_apply − t_issued exceeds Δ and re-issues work to its sender;
/// gradients from a closed epoch are discarded.
template <FiniteSum P>
Trace run_distributed(const P& prob, const DistConfig& cfg) {
  require(cfg.b >= 1, "distributed: b must be >= 1");
  require(cfg.latency >= 0, "distributed: latency must be >= 0");
  const Index d = prob.dim();
  const Index n = prob.num_samples();
  const Index W = cfg.num_workers;

  Vec x0 = cfg.warm_start_x ? *cfg.warm_start_x : prob.initial_point(cfg.seed);
  detail::check_point(prob, x0);
  ServerState server(x0, cfg.S, cfg.m, cfg.eta, W, n, cfg.delay);

  struct Worker {
    Snapshot local;
    Rng rng;
    std::int64_t busy_until = 0;
  };
  std::vector<Worker> workers;
  for (Index w = 0; w < W; ++w)
    workers.push_back({Snapshot{{}, {}, -1}, Rng(cfg.seed, detail::kBatchStream + w), 0});

  // Destination W is the server.
  struct Event {
    std::int64_t time;
    std::uint64_t seq;
    Index dest;
    Message msg;
  };
  auto later = [](const Event& a, const Event& b) {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  };
  std::priority_queue<Event, std::vector<Event>, decltype(later)> queue(later);
  std::uint64_t seq = 0;
  std::int64_t now = 0;

  Trace trace;
  detail::Recorder rec(prob, trace, cfg.clock, cfg.m);
  rec.logical_time = &now;

  auto log = [&](const Message& msg, Index worker, std::int64_t t_issued) {
    if (cfg.event_log)
      *cfg.event_log << now << ' ' << message_kind(msg) << ' ' << worker << ' '
                     << t_issued << '\n';
  };
  auto to_workers = [&](std::vector<Message>&& msgs) {
    for (auto& msg : msgs) {
      const Index w = std::visit([](const auto& m) { return m.worker; }, msg);
      queue.push({now + cfg.latency, seq++, w, std::move(msg)});
    }
  };

  const Vec g0 = grad_full(prob, x0);
  bool alive = rec.record(0, 0, x0, &g0, 0.0, 0.0);
  if (alive) to_workers(server_start(server));

  double sum_u = 0.0;
  std::int64_t epoch_lag = 0;
  Vec g_cur(d), u(d);

  while (alive && !queue.empty() && server.phase != ServerPhase::done) {
    Event ev = queue.top();
    queue.pop();
    now = ev.time;

    if (ev.dest < W) {
      Worker& wk = workers[ev.dest];
      const std::int64_t start = std::max(now, wk.busy_until);
      if (const auto* bs = std::get_if<BroadcastSnapshot>(&ev.msg)) {
        log(ev.msg, ev.dest, -1);
        wk.local = Snapshot{bs->x_tilde, {}, bs->epoch};
        FullGradPart part = worker_full_grad(*bs, W, prob);
        std::int64_t cost = 0;
        if (!part.partials.empty()) {
          const Index lo = part.first_block * kReduceBlock;
          const Index hi = std::min(n, (part.first_block + part.partials.size()) *
                                           kReduceBlock);
          cost = static_cast<std::int64_t>(hi - lo);
        }
        trace.grad_evals += static_cast<std::uint64_t>(cost);
        wk.busy_until = start + cost;
        queue.push({wk.busy_until + cfg.latency, seq++, W, std::move(part)});
      } else if (const auto* pw = std::get_if<ParamsForWork>(&ev.msg)) {
        log(ev.msg, ev.dest, pw->t_issued);
        const MiniBatch batch = sample_batch(wk.rng, n, cfg.b);
        auto gp = worker_step(*pw, wk.local, batch, prob);
        if (!gp) continue;  // stale epoch; the next broadcast supersedes it
        const auto cost = static_cast<std::int64_t>(2 * cfg.b);
        trace.grad_evals += static_cast<std::uint64_t>(cost);
        wk.busy_until = start + cost;
        queue.push({wk.busy_until + cfg.latency, seq++, W, std::move(*gp)});
      }
      continue;
    }

    // Server side, behind the channel filter.
    if (const auto* gp = std::get_if<GradPair>(&ev.msg)) {
      log(ev.msg, gp->worker, gp->t_issued);
      if (gp->epoch != server.epoch || server.phase != ServerPhase::inner) {
        ++trace.dropped_gradients;
        continue;
      }
      const std::int64_t lag = server.t - gp->t_issued;
      if (lag > server.delta()) {
        ++trace.dropped_gradients;
        to_workers({Message{issue_work(server, gp->worker)}});
        continue;
      }
      epoch_lag = std::max(epoch_lag, lag);
      if (cfg.track_u) {
        if (lag == 0) {
          combine_vr(gp->g_stale, gp->g_snap, server.snapshot.mu, u);
        } else {
          batch_mean_grad(
              prob, gp->batch,
              [&](Index) -> std::span<const double> { return server.x; },
              g_cur);
          combine_vr(g_cur, gp->g_snap, server.snapshot.mu, u);
        }
        sum_u += norm_sq(u);
      }
    } else {
      log(ev.msg, std::get<FullGradPart>(ev.msg).worker, -1);
    }

    const std::int64_t epoch_before = server.epoch;
    auto out = server_step(server, ev.msg);
    if (server.epoch != epoch_before) {
      // The m-th update closed epoch `epoch_before`.
      trace.epoch_max_staleness.push_back(epoch_lag);
      const double su =
          cfg.track_u ? sum_u : std::numeric_limits<double>::quiet_NaN();
      const double sv = server.sum_v;
      if (!all_finite(server.x)) {
        rec.record(epoch_before, cfg.m, server.x, nullptr, sv, su);
        alive = false;
        break;
      }
      const Vec g = grad_full(prob, server.x);
      alive = rec.record(epoch_before, cfg.m, server.x, &g, sv, su);
      sum_u = 0.0;
      epoch_lag = 0;
    }
    to_workers(std::move(out));
  }
  trace.sim_ticks = now;
  trace.final_x = server.x;
  return trace;
}

}  // namespace asyvr

#endif  // ASYVR_DIST_ASYNC_HPP
