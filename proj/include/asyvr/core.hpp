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

#ifndef ASYVR_CORE_HPP
#define ASYVR_CORE_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asyvr {

using Vec = std::vector<double>;
using Index = std::size_t;

/// Thrown when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a file does not match its declared format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by the theory calculator when denominators or Γ_t are not positive.
class InfeasibleParams : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

// Per-sample gradients are reduced in fixed blocks of this many samples, then
// the block partials are added in order. Every full-gradient and mini-batch
// mean in the library follows this order, which is what lets the distributed
// gather reproduce grad_full bit for bit.
inline constexpr Index kReduceBlock = 64;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (Index j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void add_into(std::span<double> acc, std::span<const double> v) {
  for (Index j = 0; j < acc.size(); ++j) acc[j] += v[j];
}

// -----------------------------------------------------------------------------
// Random streams. Every consumer of randomness gets its own stream derived from
// (seed, stream id) so that sampling never depends on thread interleaving.

/// SplitMix64; used to seed streams and as a small deterministic generator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256** with SplitMix64 seeding. Output is identical on every
/// platform, unlike the standard distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) {
    std::uint64_t sm = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    for (auto& w : s_) w = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform integer in [0, n), unbiased (Lemire's method).
  Index below(Index n) {
    const std::uint64_t range = n;
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range) {
      const std::uint64_t thresh = -range % range;
      while (low < thresh) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * range;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<Index>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

/// `count` distinct indices from [0, n), in draw order (partial Fisher-Yates).
inline std::vector<Index> sample_without_replacement(Rng& rng, Index n,
                                                     Index count) {
  std::vector<Index> pool(n);
  for (Index i = 0; i < n; ++i) pool[i] = i;
  for (Index k = 0; k < count; ++k) {
    const Index j = k + rng.below(n - k);
    std::swap(pool[k], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace asyvr

#endif  // ASYVR_CORE_HPP
