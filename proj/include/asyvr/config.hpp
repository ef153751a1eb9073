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

#ifndef ASYVR_CONFIG_HPP
#define ASYVR_CONFIG_HPP

#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "asyvr/core.hpp"

namespace asyvr {

/// Bad config text or an inconsistent combination of fields. The message
/// names the line (when parsing a file) and the field.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Everything one experiment needs. Serialized as flat `key = value` lines.
struct RunConfig {
  // problem
  std::string problem = "least_squares";  // least_squares|logistic_nonconvex|mlp
  std::string data = "synthetic";         // synthetic|idx
  Index n = 1000;
  Index p = 20;
  int classes = 3;
  double noise = 0.1;
  std::uint64_t data_seed = 1;
  std::string idx_images;
  std::string idx_labels;
  Index limit = 2000;
  Index hidden = 16;
  double C = 1e-3;
  double lambda = 0.01;

  // method
  std::string method = "svrg";  // sgd|svrg|sgd_then_svrg
  std::int64_t sgd_epochs = 0;
  std::vector<double> sgd_alpha{0.01};
  std::vector<double> sgd_beta{0.0};
  std::optional<double> eta;      // nullopt: theory-recommended
  std::optional<std::int64_t> m;  // nullopt: theory-recommended
  std::optional<double> beta;     // nullopt: 2L
  std::optional<double> L;        // nullopt: estimated
  double u0 = 0.1;
  double alpha = 1.0;
  std::string theory_mode = "auto";  // auto|shared|distributed

  // architecture
  std::string arch = "serial";  // serial|shared|distributed
  Index workers = 1;
  Index block_size = 0;
  std::int64_t delta = 0;
  std::string staleness = "none";      // none|uniform|adversarial_max
  std::string shared_mode = "replay";  // live|replay
  std::string delay = "fifo_zero";     // fifo_zero|uniform|fixed
  std::int64_t tau = -1;
  std::int64_t latency = 1;

  // run
  std::int64_t S = 10;
  Index b = 10;
  std::uint64_t seed = 1;
  std::string output = "out";
  bool track_u = true;
  std::int64_t grad_stride = 0;
  std::string timing = "auto";  // auto|wall|logical
  bool event_log = false;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double to_double(const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::logic_error&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(out))
    throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

inline std::int64_t to_int(const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::logic_error&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size())
    throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

inline Index to_count(const std::string& v) {
  const std::int64_t k = to_int(v);
  if (k < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return static_cast<Index>(k);
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

inline std::string to_choice(const std::string& v,
                             std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (v == a) return v;
    list += list.empty() ? a : std::string("|") + a;
  }
  throw ConfigError("expected one of " + list + ", got '" + v + "'");
}

inline std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

inline std::string from_list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ",") + fmt_num(x);
  return out;
}

template <typename T, typename Conv>
std::optional<T> to_optional(const std::string& v, const char* keyword,
                             Conv conv) {
  if (v == keyword) return std::nullopt;
  return conv(v);
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ASYVR_FIELD(name, conv, fmt)                                          \
  Field {                                                                     \
    #name, [](RunConfig& c, const std::string& v) { c.name = conv; },         \
        [](const RunConfig& c) -> std::string { return fmt; }                 \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      ASYVR_FIELD(problem, to_choice(v, {"least_squares", "logistic_nonconvex", "mlp"}), c.problem),
      ASYVR_FIELD(data, to_choice(v, {"synthetic", "idx"}), c.data),
      ASYVR_FIELD(n, to_count(v), std::to_string(c.n)),
      ASYVR_FIELD(p, to_count(v), std::to_string(c.p)),
      ASYVR_FIELD(classes, static_cast<int>(to_count(v)), std::to_string(c.classes)),
      ASYVR_FIELD(noise, to_double(v), fmt_num(c.noise)),
      ASYVR_FIELD(data_seed, to_count(v), std::to_string(c.data_seed)),
      ASYVR_FIELD(idx_images, v, c.idx_images),
      ASYVR_FIELD(idx_labels, v, c.idx_labels),
      ASYVR_FIELD(limit, to_count(v), std::to_string(c.limit)),
      ASYVR_FIELD(hidden, to_count(v), std::to_string(c.hidden)),
      ASYVR_FIELD(C, to_double(v), fmt_num(c.C)),
      ASYVR_FIELD(lambda, to_double(v), fmt_num(c.lambda)),
      ASYVR_FIELD(method, to_choice(v, {"sgd", "svrg", "sgd_then_svrg"}), c.method),
      ASYVR_FIELD(sgd_epochs, to_int(v), std::to_string(c.sgd_epochs)),
      ASYVR_FIELD(sgd_alpha, to_list(v), from_list(c.sgd_alpha)),
      ASYVR_FIELD(sgd_beta, to_list(v), from_list(c.sgd_beta)),
      ASYVR_FIELD(eta, to_optional<double>(v, "theory", to_double),
                  c.eta ? fmt_num(*c.eta) : "theory"),
      ASYVR_FIELD(m, to_optional<std::int64_t>(v, "theory", to_int),
                  c.m ? std::to_string(*c.m) : "theory"),
      ASYVR_FIELD(beta, to_optional<double>(v, "theory", to_double),
                  c.beta ? fmt_num(*c.beta) : "theory"),
      ASYVR_FIELD(L, to_optional<double>(v, "auto", to_double),
                  c.L ? fmt_num(*c.L) : "auto"),
      ASYVR_FIELD(u0, to_double(v), fmt_num(c.u0)),
      ASYVR_FIELD(alpha, to_double(v), fmt_num(c.alpha)),
      ASYVR_FIELD(theory_mode, to_choice(v, {"auto", "shared", "distributed"}), c.theory_mode),
      ASYVR_FIELD(arch, to_choice(v, {"serial", "shared", "distributed"}), c.arch),
      ASYVR_FIELD(workers, to_count(v), std::to_string(c.workers)),
      ASYVR_FIELD(block_size, to_count(v), std::to_string(c.block_size)),
      ASYVR_FIELD(delta, to_int(v), std::to_string(c.delta)),
      ASYVR_FIELD(staleness, to_choice(v, {"none", "uniform", "adversarial_max"}), c.staleness),
      ASYVR_FIELD(shared_mode, to_choice(v, {"live", "replay"}), c.shared_mode),
      ASYVR_FIELD(delay, to_choice(v, {"fifo_zero", "uniform", "fixed"}), c.delay),
      ASYVR_FIELD(tau, to_int(v), std::to_string(c.tau)),
      ASYVR_FIELD(latency, to_int(v), std::to_string(c.latency)),
      ASYVR_FIELD(S, to_int(v), std::to_string(c.S)),
      ASYVR_FIELD(b, to_count(v), std::to_string(c.b)),
      ASYVR_FIELD(seed, to_count(v), std::to_string(c.seed)),
      ASYVR_FIELD(output, v, c.output),
      ASYVR_FIELD(track_u, to_bool(v), c.track_u ? "true" : "false"),
      ASYVR_FIELD(grad_stride, to_int(v), std::to_string(c.grad_stride)),
      ASYVR_FIELD(timing, to_choice(v, {"auto", "wall", "logical"}), c.timing),
      ASYVR_FIELD(event_log, to_bool(v), c.event_log ? "true" : "false"),
  };
  return table;
}

#undef ASYVR_FIELD

inline const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError("unknown field '" + key + "'");
}

}  // namespace detail

/// Sets one field from its text form. Errors name the field.
inline void set_field(RunConfig& cfg, const std::string& key,
                      const std::string& value) {
  const auto& f = detail::find_field(key);
  try {
    f.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError("field '" + key + "': " + e.what());
  }
}

/// Applies a `key=value` override as given on the command line.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "': expected key=value");
  set_field(cfg, detail::trim(assignment.substr(0, eq)),
            detail::trim(assignment.substr(eq + 1)));
}

/// Rejects field combinations no executor accepts. Field-level errors only;
/// problem-dependent checks (e.g. block_size ≤ d) happen at run time.
inline void validate_config(const RunConfig& c) {
  auto bad = [](const char* field, const std::string& why) {
    throw ConfigError(std::string("field '") + field + "': " + why);
  };
  if (c.data == "synthetic") {
    if (c.n < 1) bad("n", "must be >= 1");
    if (c.p < 1) bad("p", "must be >= 1");
    if (c.classes < 1) bad("classes", "must be >= 1");
    if (c.problem == "logistic_nonconvex" && c.classes != 2)
      bad("classes", "logistic_nonconvex needs 2 classes");
  } else {
    if (c.idx_images.empty()) bad("idx_images", "required when data = idx");
    if (c.idx_labels.empty()) bad("idx_labels", "required when data = idx");
    if (c.limit < 1) bad("limit", "must be >= 1");
  }
  if (c.problem == "mlp" && c.hidden < 1) bad("hidden", "must be >= 1");
  if (c.C < 0) bad("C", "must be >= 0");
  if (c.lambda < 0) bad("lambda", "must be >= 0");
  if (c.sgd_epochs < 0) bad("sgd_epochs", "must be >= 0");
  for (double a : c.sgd_alpha)
    if (!(a > 0)) bad("sgd_alpha", "entries must be > 0");
  for (double v : c.sgd_beta)
    if (v < 0 || v > 1) bad("sgd_beta", "entries must be in [0,1]");
  if (c.eta && !(*c.eta > 0)) bad("eta", "must be > 0");
  if (c.m && *c.m < 1) bad("m", "must be >= 1");
  if (c.beta && *c.beta < 0) bad("beta", "must be >= 0");
  if (c.L && !(*c.L > 0)) bad("L", "must be > 0");
  if (!(c.u0 > 0 && c.u0 < 1)) bad("u0", "must be in (0,1)");
  if (!(c.alpha > 0 && c.alpha <= 1)) bad("alpha", "must be in (0,1]");
  if (c.method == "sgd" && c.arch != "serial")
    bad("arch", "sgd runs serially only");
  if (c.workers < 1) bad("workers", "must be >= 1");
  if (c.delta < 0) bad("delta", "must be >= 0");
  if (c.arch == "shared" && c.shared_mode == "live" && c.staleness != "none")
    bad("staleness", "schedules apply to shared_mode = replay only");
  if (c.arch == "distributed" && c.delay == "fixed" && c.tau > c.delta)
    bad("tau", "must be <= delta");
  if (c.latency < 0) bad("latency", "must be >= 0");
  if (c.S < 0) bad("S", "must be >= 0");
  if (c.b < 1) bad("b", "must be >= 1");
  if (c.grad_stride < 0) bad("grad_stride", "must be >= 0");
  if (c.output.empty()) bad("output", "must not be empty");
}

/// Parses `key = value` lines; `#` starts a comment. Unset keys keep their
/// defaults. Each key may appear once.
inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line =
        detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!seen.insert(key).second)
      throw ConfigError(where + "field '" + key + "' given twice");
    try {
      set_field(cfg, key, detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return parse_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Every field, in a fixed order, so the output parses back to `cfg`.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields())
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace asyvr

#endif  // ASYVR_CONFIG_HPP
