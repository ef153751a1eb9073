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

// Small fixtures shared by the test binaries.

#ifndef ASYVR_TESTS_TEST_UTIL_HPP
#define ASYVR_TESTS_TEST_UTIL_HPP

#include <cstdlib>
#include <filesystem>
#include <string>

#include "asyvr/asyvr.hpp"

namespace asyvr::testing {

/// Regression dataset from explicit rows and targets.
inline DatasetPtr make_regression(Index p, const Vec& features, const Vec& y) {
  Dataset ds;
  ds.n = y.size();
  ds.p = p;
  ds.num_classes = 1;
  ds.features = features;
  ds.labels.assign(ds.n, 0);
  ds.targets = y;
  return std::make_shared<const Dataset>(std::move(ds));
}

/// d = 1, n = 2: f_1 = ½x², f_2 = ½(x − 2)². Minimizer x* = 1.
inline LeastSquares two_point_quadratic() {
  return LeastSquares(make_regression(1, {1.0, 1.0}, {0.0, 2.0}));
}

inline DatasetPtr synthetic(Index n, Index p, int classes, std::uint64_t seed,
                            double noise = 0.1) {
  SyntheticSpec spec;
  spec.n = n;
  spec.p = p;
  spec.num_classes = classes;
  spec.noise = noise;
  spec.seed = seed;
  return std::make_shared<const Dataset>(gen_synthetic(spec));
}

/// Features and targets on a coarse dyadic grid, so every sum the library
/// forms is exact and results can be compared to the bit.
inline LeastSquares dyadic_least_squares(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed, 99);
  Vec f(n * p), y(n);
  for (double& v : f) v = static_cast<double>(rng.below(9)) / 8.0 - 0.5;
  for (double& v : y) v = static_cast<double>(rng.below(9)) / 8.0 - 0.5;
  return LeastSquares(make_regression(p, f, y));
}

inline Vec random_point(Index d, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed, 7);
  Vec x(d);
  for (double& v : x) v = scale * rng.normal();
  return x;
}

/// Scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  const char* base = std::getenv("ASYVR_TEST_TMP");
  std::filesystem::path dir =
      base ? std::filesystem::path(base)
           : std::filesystem::temp_directory_path() / "asyvr_tests";
  dir /= name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline bool same_bits(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Index k = 0; k < a.size(); ++k)
    if (std::memcmp(&a[k], &b[k], sizeof(double)) != 0) return false;
  return true;
}

/// Equality of the fields every executor computes identically.
inline bool same_trajectory(const Trace& a, const Trace& b) {
  if (a.records.size() != b.records.size()) return false;
  for (Index k = 0; k < a.records.size(); ++k) {
    const auto& r = a.records[k];
    const auto& s = b.records[k];
    if (r.epoch != s.epoch || r.iter != s.iter || r.loss != s.loss ||
        r.grad_norm_sq != s.grad_norm_sq || r.sum_v_sq != s.sum_v_sq)
      return false;
  }
  return same_bits(a.final_x, b.final_x);
}

}  // namespace asyvr::testing

#endif  // ASYVR_TESTS_TEST_UTIL_HPP
