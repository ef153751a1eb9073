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

#ifndef ASYVR_DATA_HPP
#define ASYVR_DATA_HPP

#include <fstream>
#include <iterator>
#include <string>

#include "asyvr/problem.hpp"

namespace asyvr {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf,
                               Index offset, const std::string& path) {
  if (buf.size() < offset + 4) throw FormatError(path + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) |
         (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace detail

/// Reads an IDX image/label pair (MNIST layout). Pixels are scaled to [0,1]
/// and at most `limit` samples are kept. A zero limit yields an empty
/// dataset, which problem constructors reject.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path, Index limit) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  if (detail::read_be32(img, 0, images_path) != kIdxImagesMagic)
    throw FormatError(images_path + ": bad magic (want 0x00000803)");
  if (detail::read_be32(lab, 0, labels_path) != kIdxLabelsMagic)
    throw FormatError(labels_path + ": bad magic (want 0x00000801)");

  const Index count = detail::read_be32(img, 4, images_path);
  const Index rows = detail::read_be32(img, 8, images_path);
  const Index cols = detail::read_be32(img, 12, images_path);
  const Index label_count = detail::read_be32(lab, 4, labels_path);
  if (count != label_count)
    throw FormatError("image count " + std::to_string(count) +
                      " != label count " + std::to_string(label_count));
  const Index p = rows * cols;
  if (img.size() < 16 + count * p) throw FormatError(images_path + ": truncated");
  if (lab.size() < 8 + count) throw FormatError(labels_path + ": truncated");

  Dataset ds;
  ds.n = std::min(count, limit);
  ds.p = p;
  ds.features.resize(ds.n * p);
  ds.labels.resize(ds.n);
  int max_label = -1;
  for (Index i = 0; i < ds.n; ++i) {
    for (Index q = 0; q < p; ++q)
      ds.features[i * p + q] = static_cast<double>(img[16 + i * p + q]) / 255.0;
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

/// Parameters of the seeded synthetic generator.
struct SyntheticSpec {
  Index n = 1000;
  Index p = 20;
  int num_classes = 3;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

/// The hidden linear model behind a synthetic dataset: num_classes × p
/// class weights, row-major.
inline Vec synthetic_truth(const SyntheticSpec& spec) {
  Rng rng(spec.seed, 0x5452);
  Vec w(static_cast<Index>(spec.num_classes) * spec.p);
  for (double& v : w) v = rng.normal();
  return w;
}

/// Features are N(0, 1/p) per entry, so rows have unit expected squared norm.
/// The label is the argmax of class scores Wa plus `noise`·N(0,1) per class;
/// the regression target is the first class score plus `noise`·N(0,1).
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  require(spec.n >= 1 && spec.p >= 1, "gen_synthetic: n and p must be >= 1");
  require(spec.num_classes >= 2, "gen_synthetic: need at least two classes");
  require(spec.noise >= 0.0, "gen_synthetic: noise must be >= 0");
  const Vec w = synthetic_truth(spec);
  const auto k = static_cast<Index>(spec.num_classes);
  Rng rng(spec.seed, 0x44415441);

  Dataset ds;
  ds.n = spec.n;
  ds.p = spec.p;
  ds.num_classes = spec.num_classes;
  ds.features.resize(spec.n * spec.p);
  ds.labels.resize(spec.n);
  ds.targets.resize(spec.n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.p));
  Vec score(k);
  for (Index i = 0; i < spec.n; ++i) {
    double* a = ds.features.data() + i * spec.p;
    for (Index q = 0; q < spec.p; ++q) a[q] = scale * rng.normal();
    for (Index c = 0; c < k; ++c) {
      score[c] = dot({w.data() + c * spec.p, spec.p}, {a, spec.p});
      if (spec.noise > 0.0) score[c] += spec.noise * rng.normal();
    }
    ds.labels[i] = static_cast<int>(
        std::max_element(score.begin(), score.end()) - score.begin());
    ds.targets[i] = dot({w.data(), spec.p}, {a, spec.p}) +
                    (spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0);
  }
  return ds;
}

}  // namespace asyvr

#endif  // ASYVR_DATA_HPP
