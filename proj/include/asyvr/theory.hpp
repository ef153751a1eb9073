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

#ifndef ASYVR_THEORY_HPP
#define ASYVR_THEORY_HPP

#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "asyvr/core.hpp"

namespace asyvr::theory {

/// Which convergence analysis applies: per-coordinate updates with
/// inconsistent reads (shared) or whole-vector updates with delayed
/// gradients (distributed).
enum class Mode { shared, distributed };

inline const char* to_string(Mode m) {
  return m == Mode::shared ? "shared" : "distributed";
}

struct Params {
  double L = 1.0;
  double eta = 0.01;
  double beta = 0.0;
  double b = 1.0;
  std::int64_t m = 1;
  double d = 1.0;
  double n = 1.0;
  double Delta = 0.0;
  double u0 = 0.1;
  double alpha = 1.0;
  Mode mode = Mode::shared;
};

// Terms of the Lyapunov recurrence. With D = d (shared) or 1 (distributed)
// and κ = D − 2L²Δ²η²:
//   c_t = c_{t+1}(1 + θ) + r,  θ = ηβ/D + 4L²η²/(κb),
//   r   = (4L²/(κb)) (L²Δ²η³/(2D) + η²L/2),
//   Γ_t = η/(2D) − (4/κ)(L²Δ²η³/(2D) + η²L/2 + c_{t+1}η²).
namespace detail {

inline double scale_dim(const Params& p) {
  return p.mode == Mode::shared ? p.d : 1.0;
}

inline void check(const Params& p) {
  if (!(p.L > 0 && p.eta > 0 && p.b >= 1 && p.m >= 1 && p.d >= 1 &&
        p.n >= 1 && p.Delta >= 0 && p.beta >= 0))
    throw InvalidInput("theory: parameters out of domain");
}

inline double kappa(const Params& p) {
  check(p);
  const double k =
      scale_dim(p) - 2.0 * p.L * p.L * p.Delta * p.Delta * p.eta * p.eta;
  if (!(k > 0.0))
    throw InfeasibleParams(std::string("theory: ") +
                           (p.mode == Mode::shared ? "d" : "1") +
                           " - 2 L^2 Delta^2 eta^2 <= 0");
  return k;
}

/// L²Δ²η³/(2D) + η²L/2
inline double delay_term(const Params& p) {
  const double D = scale_dim(p);
  return p.L * p.L * p.Delta * p.Delta * p.eta * p.eta * p.eta / (2.0 * D) +
         p.eta * p.eta * p.L / 2.0;
}

}  // namespace detail

inline double theta(const Params& p) {
  const double k = detail::kappa(p);
  return p.eta * p.beta / detail::scale_dim(p) +
         4.0 * p.L * p.L * p.eta * p.eta / (k * p.b);
}

/// Additive increment r of the c_t recurrence.
inline double increment(const Params& p) {
  const double k = detail::kappa(p);
  return 4.0 * p.L * p.L / (k * p.b) * detail::delay_term(p);
}

/// c_0..c_m by backward recurrence from c_m = 0.
inline Vec c_sequence(const Params& p) {
  const double th = theta(p);
  const double r = increment(p);
  Vec c(static_cast<Index>(p.m) + 1, 0.0);
  for (std::int64_t t = p.m - 1; t >= 0; --t)
    c[static_cast<Index>(t)] = c[static_cast<Index>(t) + 1] * (1.0 + th) + r;
  return c;
}

/// c_0 = r((1+θ)^m − 1)/θ, or r·m when θ = 0.
inline double c0_closed_form(const Params& p) {
  const double th = theta(p);
  const double r = increment(p);
  const auto m = static_cast<double>(p.m);
  if (th == 0.0) return r * m;
  return r * std::expm1(m * std::log1p(th)) / th;
}

/// Γ_0..Γ_{m−1}.
inline Vec gamma_sequence(const Params& p) {
  const double k = detail::kappa(p);
  const Vec c = c_sequence(p);
  const double lead = p.eta / (2.0 * detail::scale_dim(p));
  const double base = detail::delay_term(p);
  Vec g(static_cast<Index>(p.m));
  for (Index t = 0; t < g.size(); ++t)
    g[t] = lead - 4.0 / k * (base + c[t + 1] * p.eta * p.eta);
  return g;
}

struct GammaResult {
  double gamma = 0.0;
  bool feasible = false;
};

/// γ = min_t Γ_t and whether every Γ_t > 0.
inline GammaResult gamma(const Params& p) {
  const Vec g = gamma_sequence(p);
  GammaResult r;
  r.gamma = *std::min_element(g.begin(), g.end());
  r.feasible = r.gamma > 0.0;
  return r;
}

/// The side assumption c_{t+1}/β ≤ ½ for every t < m. Always false for β = 0.
inline bool lyapunov_condition(const Params& p) {
  if (!(p.beta > 0.0)) return false;
  const Vec c = c_sequence(p);
  for (Index t = 1; t < c.size(); ++t)
    if (c[t] / p.beta > 0.5) return false;
  return true;
}

/// Upper limit on Δ²: min{D/(2u₀b), (3D − 28u₀bD)/(28u₀²b²)} with D = d
/// (shared) or 1 (distributed). A non-positive value means no delay is
/// admissible.
inline double delay_bound(Mode mode, double u0, double b, double d) {
  require(u0 > 0.0 && u0 < 1.0, "delay_bound: u0 must be in (0,1)");
  require(b >= 1.0, "delay_bound: b must be >= 1");
  const double D = mode == Mode::shared ? d : 1.0;
  require(D >= 1.0, "delay_bound: d must be >= 1");
  const double first = D / (2.0 * u0 * b);
  const double second = (3.0 * D - 28.0 * u0 * b * D) / (28.0 * u0 * u0 * b * b);
  return std::min(first, second);
}

struct Settings {
  double eta = 0.0;
  double beta = 0.0;
  std::int64_t m = 0;
};

/// η = u₀b/(Ln^α), β = 2L, m = ⌊D·n^α/(6u₀b)⌋.
inline Settings recommended_settings(Mode mode, double n, double alpha,
                                     double u0, double b, double d, double L) {
  require(alpha > 0.0 && alpha <= 1.0,
          "recommended_settings: alpha must be in (0,1]");
  require(u0 > 0.0 && u0 < 1.0, "recommended_settings: u0 must be in (0,1)");
  require(n >= 1 && b >= 1 && d >= 1 && L > 0,
          "recommended_settings: need n, b, d >= 1 and L > 0");
  const double na = std::pow(n, alpha);
  const double D = mode == Mode::shared ? d : 1.0;
  Settings s;
  s.eta = u0 * b / (L * na);
  s.beta = 2.0 * L;
  s.m = static_cast<std::int64_t>(std::floor(D * na / (6.0 * u0 * b)));
  require(s.m >= 1, "recommended_settings: inner loop length m = 0");
  return s;
}

/// D·n^α ≤ D·n^{2α} − 2Δ²u₀²b², assumed alongside the delay bound.
inline bool side_condition(Mode mode, double n, double alpha, double u0,
                           double b, double d, double Delta) {
  const double D = mode == Mode::shared ? d : 1.0;
  return D * std::pow(n, alpha) <=
         D * std::pow(n, 2.0 * alpha) - 2.0 * Delta * Delta * u0 * u0 * b * b;
}

/// (f0 − f*)/(Tγ).
inline double ergodic_bound(double gamma_value, double f0, double fstar,
                            double T) {
  if (!(gamma_value > 0.0))
    throw InfeasibleParams("ergodic_bound: gamma must be > 0");
  require(T >= 1.0, "ergodic_bound: T must be >= 1");
  require(f0 >= fstar, "ergodic_bound: need f0 >= f*");
  return (f0 - fstar) / (T * gamma_value);
}

inline double ergodic_bound(const Params& p, double f0, double fstar,
                            double T) {
  const GammaResult g = gamma(p);
  if (!g.feasible)
    throw InfeasibleParams("ergodic_bound: some Gamma_t <= 0");
  return ergodic_bound(g.gamma, f0, fstar, T);
}

/// time(1)/time(k) for every worker count k.
inline std::map<Index, double> speedup(const std::map<Index, double>& times) {
  const auto serial = times.find(1);
  require(serial != times.end(), "speedup: missing serial (1-worker) time");
  std::map<Index, double> out;
  for (const auto& [k, t] : times) {
    require(t > 0.0, "speedup: times must be > 0");
    out[k] = serial->second / t;
  }
  return out;
}

// -----------------------------------------------------------------------------

struct Report {
  Params params;
  Vec c;
  Vec Gamma;
  double gamma = 0.0;
  double theta = 0.0;
  double c0_closed = 0.0;
  bool feasible = false;
  bool lyapunov_ok = false;
  std::optional<double> bound_value;
  std::string error;
};

/// Evaluates everything for one parameter set. Infeasible denominators are
/// reported in `error` rather than thrown.
inline Report make_report(const Params& p,
                          std::optional<double> f0_minus_fstar = std::nullopt,
                          std::optional<double> T = std::nullopt) {
  Report r;
  r.params = p;
  try {
    r.c = c_sequence(p);
    r.Gamma = gamma_sequence(p);
    r.gamma = *std::min_element(r.Gamma.begin(), r.Gamma.end());
    r.feasible = r.gamma > 0.0;
    r.theta = theta(p);
    r.c0_closed = c0_closed_form(p);
    r.lyapunov_ok = lyapunov_condition(p);
    if (r.feasible && f0_minus_fstar && T)
      r.bound_value = ergodic_bound(r.gamma, *f0_minus_fstar, 0.0, *T);
  } catch (const std::exception& e) {
    r.feasible = false;
    r.error = e.what();
  }
  return r;
}

inline nlohmann::json to_json(const Report& r) {
  const Params& p = r.params;
  nlohmann::json j;
  j["params"] = {{"L", p.L},         {"eta", p.eta}, {"beta", p.beta},
                 {"b", p.b},         {"m", p.m},     {"d", p.d},
                 {"n", p.n},         {"Delta", p.Delta}, {"u0", p.u0},
                 {"alpha", p.alpha}, {"mode", to_string(p.mode)}};
  j["c"] = r.c;
  j["Gamma"] = r.Gamma;
  j["gamma"] = r.gamma;
  j["theta"] = r.theta;
  j["c0_closed"] = r.c0_closed;
  j["feasible"] = r.feasible;
  j["lyapunov_condition"] = r.lyapunov_ok;
  j["bound_value"] =
      r.bound_value ? nlohmann::json(*r.bound_value) : nlohmann::json(nullptr);
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace asyvr::theory

#endif  // ASYVR_THEORY_HPP
