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

#ifndef ASYVR_PROBLEM_HPP
#define ASYVR_PROBLEM_HPP

#include <algorithm>
#include <concepts>
#include <memory>
#include <numeric>
#include <string>
#include <variant>

#include "asyvr/core.hpp"

namespace asyvr {

/// n samples of p features (row-major), with class labels and optional real
/// regression targets.
struct Dataset {
  Index n = 0;
  Index p = 0;
  int num_classes = 0;
  Vec features;
  std::vector<int> labels;
  Vec targets;

  std::span<const double> row(Index i) const {
    return {features.data() + i * p, p};
  }

  void validate() const {
    require(n >= 1, "dataset: n must be >= 1");
    require(p >= 1, "dataset: p must be >= 1");
    require(features.size() == n * p, "dataset: feature matrix is not n x p");
    require(all_finite(features), "dataset: non-finite feature value");
    require(labels.size() == n, "dataset: label count != n");
    for (int y : labels)
      require(y >= 0 && y < num_classes, "dataset: label out of range");
    require(targets.empty() || targets.size() == n,
            "dataset: target count != n");
    require(all_finite(targets), "dataset: non-finite target");
  }
};

using DatasetPtr = std::shared_ptr<const Dataset>;

/// A smooth finite sum f(x) = (1/n) sum_i f_i(x). `sample_grad` overwrites
/// `out` with the gradient of f_i, regularizer included.
template <typename P>
concept FiniteSum = requires(const P& p, std::span<const double> x, Index i,
                             std::span<double> out) {
  { p.dim() } -> std::convertible_to<Index>;
  { p.num_samples() } -> std::convertible_to<Index>;
  { p.sample_loss(x, i) } -> std::convertible_to<double>;
  { p.data_loss_mean(x) } -> std::convertible_to<double>;
  p.sample_grad(x, i, out);
};

namespace detail {

inline double softplus(double z) {
  // log(1 + e^z) without overflow
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// f_i(x) = ½(a_iᵀx − y_i)² + (C/2)‖x‖².
class LeastSquares {
 public:
  LeastSquares(DatasetPtr data, double c = 0.0) : data_(std::move(data)), c_(c) {
    require(data_ != nullptr, "least_squares: null dataset");
    data_->validate();
    require(c_ >= 0.0, "least_squares: C must be >= 0");
  }

  Index dim() const { return data_->p; }
  Index num_samples() const { return data_->n; }
  double reg() const { return c_; }
  const Dataset& data() const { return *data_; }

  double target(Index i) const {
    return data_->targets.empty() ? static_cast<double>(data_->labels[i])
                                  : data_->targets[i];
  }

  double residual(std::span<const double> x, Index i) const {
    return dot(data_->row(i), x) - target(i);
  }

  double sample_loss(std::span<const double> x, Index i) const {
    const double r = residual(x, i);
    return 0.5 * r * r + 0.5 * c_ * norm_sq(x);
  }

  double data_loss_mean(std::span<const double> x) const {
    double s = 0.0;
    for (Index i = 0; i < data_->n; ++i) {
      const double r = residual(x, i);
      s += 0.5 * r * r;
    }
    return s / static_cast<double>(data_->n) + 0.5 * c_ * norm_sq(x);
  }

  void sample_grad(std::span<const double> x, Index i,
                   std::span<double> out) const {
    const auto a = data_->row(i);
    const double r = residual(x, i);
    for (Index j = 0; j < a.size(); ++j) out[j] = r * a[j] + c_ * x[j];
  }

  Vec initial_point(std::uint64_t /*seed*/) const { return Vec(dim(), 0.0); }

 private:
  DatasetPtr data_;
  double c_;
};

/// Binary logistic loss with the smooth non-convex penalty
/// λ Σ x_j²/(1+x_j²), plus (C/2)‖x‖². Label 1 is the positive class.
class LogisticNonconvex {
 public:
  LogisticNonconvex(DatasetPtr data, double lambda = 0.01, double c = 0.0)
      : data_(std::move(data)), lambda_(lambda), c_(c) {
    require(data_ != nullptr, "logistic_nonconvex: null dataset");
    data_->validate();
    require(data_->num_classes == 2,
            "logistic_nonconvex: needs a two-class dataset");
    require(lambda_ >= 0.0 && c_ >= 0.0,
            "logistic_nonconvex: weights must be >= 0");
  }

  Index dim() const { return data_->p; }
  Index num_samples() const { return data_->n; }
  double reg() const { return c_; }
  double lambda() const { return lambda_; }
  const Dataset& data() const { return *data_; }

  double sign(Index i) const { return data_->labels[i] == 1 ? 1.0 : -1.0; }

  double penalty(std::span<const double> x) const {
    double s = 0.0;
    for (double v : x) s += v * v / (1.0 + v * v);
    return lambda_ * s + 0.5 * c_ * norm_sq(x);
  }

  double sample_loss(std::span<const double> x, Index i) const {
    const double margin = sign(i) * dot(data_->row(i), x);
    return detail::softplus(-margin) + penalty(x);
  }

  double data_loss_mean(std::span<const double> x) const {
    double s = 0.0;
    for (Index i = 0; i < data_->n; ++i)
      s += detail::softplus(-sign(i) * dot(data_->row(i), x));
    return s / static_cast<double>(data_->n) + penalty(x);
  }

  void sample_grad(std::span<const double> x, Index i,
                   std::span<double> out) const {
    const auto a = data_->row(i);
    const double y = sign(i);
    const double coef = -y * detail::sigmoid(-y * dot(a, x));
    for (Index j = 0; j < a.size(); ++j) {
      const double q = 1.0 + x[j] * x[j];
      out[j] = coef * a[j] + lambda_ * 2.0 * x[j] / (q * q) + c_ * x[j];
    }
  }

  Vec initial_point(std::uint64_t /*seed*/) const { return Vec(dim(), 0.0); }

 private:
  DatasetPtr data_;
  double lambda_;
  double c_;
};

/// Three-layer perceptron p × h × k: ReLU hidden layer, softmax
/// cross-entropy output, (C/2)‖x‖² over every parameter.
///
/// Parameter layout: W1 (h×p, row-major), b1 (h), W2 (k×h, row-major), b2 (k),
/// so d = p·h + h + h·k + k.
class Mlp {
 public:
  Mlp(DatasetPtr data, Index hidden, double c = 0.0)
      : data_(std::move(data)), h_(hidden), c_(c) {
    require(data_ != nullptr, "mlp: null dataset");
    data_->validate();
    require(h_ >= 1, "mlp: hidden width must be >= 1");
    require(data_->num_classes >= 2, "mlp: needs at least two classes");
    require(c_ >= 0.0, "mlp: C must be >= 0");
    p_ = data_->p;
    k_ = static_cast<Index>(data_->num_classes);
  }

  static Index param_count(Index p, Index h, Index k) {
    return p * h + h + h * k + k;
  }

  Index dim() const { return param_count(p_, h_, k_); }
  Index num_samples() const { return data_->n; }
  Index inputs() const { return p_; }
  Index hidden() const { return h_; }
  Index classes() const { return k_; }
  double reg() const { return c_; }
  const Dataset& data() const { return *data_; }

  double sample_loss(std::span<const double> x, Index i) const {
    return data_loss(x, i) + 0.5 * c_ * norm_sq(x);
  }

  double data_loss_mean(std::span<const double> x) const {
    double s = 0.0;
    for (Index i = 0; i < data_->n; ++i) s += data_loss(x, i);
    return s / static_cast<double>(data_->n) + 0.5 * c_ * norm_sq(x);
  }

  void sample_grad(std::span<const double> x, Index i,
                   std::span<double> out) const {
    const auto a = data_->row(i);
    const Layout l = layout();
    Vec z1(h_), act(h_), z2(k_);
    forward(x, a, z1, act, z2);

    // δ2 = softmax(z2) − onehot(y)
    const double mx = *std::max_element(z2.begin(), z2.end());
    double denom = 0.0;
    for (Index c = 0; c < k_; ++c) denom += std::exp(z2[c] - mx);
    Vec delta2(k_);
    for (Index c = 0; c < k_; ++c) delta2[c] = std::exp(z2[c] - mx) / denom;
    delta2[static_cast<Index>(data_->labels[i])] -= 1.0;

    for (Index c = 0; c < k_; ++c) {
      for (Index j = 0; j < h_; ++j)
        out[l.w2 + c * h_ + j] = delta2[c] * act[j];
      out[l.b2 + c] = delta2[c];
    }
    for (Index j = 0; j < h_; ++j) {
      double back = 0.0;
      // ReLU subgradient at 0 is taken as 0.
      if (z1[j] > 0.0)
        for (Index c = 0; c < k_; ++c) back += x[l.w2 + c * h_ + j] * delta2[c];
      for (Index q = 0; q < p_; ++q) out[l.w1 + j * p_ + q] = back * a[q];
      out[l.b1 + j] = back;
    }
    if (c_ != 0.0)
      for (Index j = 0; j < out.size(); ++j) out[j] += c_ * x[j];
  }

  /// Weights uniform in ±1/√fan_in, biases zero.
  Vec initial_point(std::uint64_t seed) const {
    const Layout l = layout();
    Vec x(dim(), 0.0);
    Rng rng(seed, 0x4D4C50);
    const double r1 = 1.0 / std::sqrt(static_cast<double>(p_));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(h_));
    for (Index j = 0; j < h_ * p_; ++j) x[l.w1 + j] = rng.uniform(-r1, r1);
    for (Index j = 0; j < k_ * h_; ++j) x[l.w2 + j] = rng.uniform(-r2, r2);
    return x;
  }

  /// Predicted class for a feature row.
  Index predict(std::span<const double> x, std::span<const double> a) const {
    Vec z1(h_), act(h_), z2(k_);
    forward(x, a, z1, act, z2);
    return static_cast<Index>(std::max_element(z2.begin(), z2.end()) -
                              z2.begin());
  }

 private:
  struct Layout {
    Index w1, b1, w2, b2;
  };

  Layout layout() const {
    const Index w1 = 0;
    const Index b1 = w1 + h_ * p_;
    const Index w2 = b1 + h_;
    const Index b2 = w2 + k_ * h_;
    return {w1, b1, w2, b2};
  }

  void forward(std::span<const double> x, std::span<const double> a, Vec& z1,
               Vec& act, Vec& z2) const {
    const Layout l = layout();
    for (Index j = 0; j < h_; ++j) {
      z1[j] = dot(x.subspan(l.w1 + j * p_, p_), a) + x[l.b1 + j];
      act[j] = z1[j] > 0.0 ? z1[j] : 0.0;
    }
    for (Index c = 0; c < k_; ++c)
      z2[c] = dot(x.subspan(l.w2 + c * h_, h_), act) + x[l.b2 + c];
  }

  double data_loss(std::span<const double> x, Index i) const {
    Vec z1(h_), act(h_), z2(k_);
    forward(x, data_->row(i), z1, act, z2);
    const double mx = *std::max_element(z2.begin(), z2.end());
    double s = 0.0;
    for (double z : z2) s += std::exp(z - mx);
    return mx + std::log(s) - z2[static_cast<Index>(data_->labels[i])];
  }

  DatasetPtr data_;
  Index h_;
  double c_;
  Index p_ = 0;
  Index k_ = 0;
};

/// Runtime-selected problem, used by the harness and CLI.
using AnyProblem = std::variant<LeastSquares, LogisticNonconvex, Mlp>;

// -----------------------------------------------------------------------------
// Evaluation and gradients

namespace detail {

template <FiniteSum P>
void check_point(const P& prob, std::span<const double> x) {
  require(x.size() == prob.dim(), "parameter dimension mismatch: got " +
                                      std::to_string(x.size()) + ", want " +
                                      std::to_string(prob.dim()));
}

template <FiniteSum P>
void check_sample(const P& prob, Index i) {
  require(i < prob.num_samples(), "sample index " + std::to_string(i) +
                                      " out of range [0, " +
                                      std::to_string(prob.num_samples()) + ")");
}

}  // namespace detail

template <FiniteSum P>
double eval_loss(const P& prob, std::span<const double> x) {
  detail::check_point(prob, x);
  return prob.data_loss_mean(x);
}

template <FiniteSum P>
double eval_sample(const P& prob, std::span<const double> x, Index i) {
  detail::check_point(prob, x);
  detail::check_sample(prob, i);
  return prob.sample_loss(x, i);
}

template <FiniteSum P>
Vec grad_sample(const P& prob, std::span<const double> x, Index i) {
  detail::check_point(prob, x);
  detail::check_sample(prob, i);
  Vec g(prob.dim());
  prob.sample_grad(x, i, g);
  return g;
}

/// out = Σ_k ∇f_{indices[k]}(point_at(k)), reduced in the library's fixed
/// block order. `point_at(k)` returns the parameter vector for element k.
template <FiniteSum P, typename PointAt>
void sum_sample_grads(const P& prob, std::span<const Index> indices,
                      PointAt&& point_at, std::span<double> out) {
  const Index d = prob.dim();
  std::fill(out.begin(), out.end(), 0.0);
  Vec block(d), g(d);
  for (Index start = 0; start < indices.size(); start += kReduceBlock) {
    const Index stop = std::min(indices.size(), start + kReduceBlock);
    std::fill(block.begin(), block.end(), 0.0);
    for (Index k = start; k < stop; ++k) {
      prob.sample_grad(point_at(k), indices[k], g);
      add_into(block, g);
    }
    add_into(out, block);
  }
}

/// Partial sums of ∇f_i(x) over blocks [first_block, last_block) of the
/// sample range; one vector per block.
template <FiniteSum P>
std::vector<Vec> block_grad_partials(const P& prob, std::span<const double> x,
                                     Index first_block, Index last_block) {
  const Index n = prob.num_samples();
  const Index d = prob.dim();
  std::vector<Vec> parts;
  Vec g(d);
  for (Index blk = first_block; blk < last_block; ++blk) {
    Vec acc(d, 0.0);
    const Index stop = std::min(n, (blk + 1) * kReduceBlock);
    for (Index i = blk * kReduceBlock; i < stop; ++i) {
      prob.sample_grad(x, i, g);
      add_into(acc, g);
    }
    parts.push_back(std::move(acc));
  }
  return parts;
}

inline Index num_reduce_blocks(Index n) {
  return (n + kReduceBlock - 1) / kReduceBlock;
}

/// ∇f(x) = (1/n) Σ_i ∇f_i(x).
template <FiniteSum P>
Vec grad_full(const P& prob, std::span<const double> x) {
  detail::check_point(prob, x);
  require(all_finite(x), "grad_full: non-finite parameter");
  const Index n = prob.num_samples();
  Vec total(prob.dim(), 0.0);
  for (const Vec& part : block_grad_partials(prob, x, 0, num_reduce_blocks(n)))
    add_into(total, part);
  for (double& v : total) v /= static_cast<double>(n);
  return total;
}

// -----------------------------------------------------------------------------
// Gradient validation

/// max_k |g_k − fd_k| / (1 + ‖g‖∞) for the central difference of f.
template <FiniteSum P>
double fd_check(const P& prob, std::span<const double> x, double h) {
  require(h > 0.0, "fd_check: step must be > 0");
  const Vec g = grad_full(prob, x);
  Vec xp(x.begin(), x.end());
  double worst = 0.0;
  const double scale = 1.0 + norm_inf(g);
  for (Index k = 0; k < xp.size(); ++k) {
    const double keep = xp[k];
    xp[k] = keep + h;
    const double fp = eval_loss(prob, xp);
    xp[k] = keep - h;
    const double fm = eval_loss(prob, xp);
    xp[k] = keep;
    worst = std::max(worst, std::abs(g[k] - (fp - fm) / (2.0 * h)) / scale);
  }
  return worst;
}

/// Same measure for a single f_i.
template <FiniteSum P>
double fd_check_sample(const P& prob, std::span<const double> x, Index i,
                       double h) {
  require(h > 0.0, "fd_check: step must be > 0");
  const Vec g = grad_sample(prob, x, i);
  Vec xp(x.begin(), x.end());
  double worst = 0.0;
  const double scale = 1.0 + norm_inf(g);
  for (Index k = 0; k < xp.size(); ++k) {
    const double keep = xp[k];
    xp[k] = keep + h;
    const double fp = prob.sample_loss(xp, i);
    xp[k] = keep - h;
    const double fm = prob.sample_loss(xp, i);
    xp[k] = keep;
    worst = std::max(worst, std::abs(g[k] - (fp - fm) / (2.0 * h)) / scale);
  }
  return worst;
}

// -----------------------------------------------------------------------------
// Smoothness constant

inline constexpr double kLipschitzSafety = 1.5;

/// Observed ratios ‖∇φ(x) − ∇φ(y)‖/‖x − y‖ at random nearby pairs, where φ
/// alternates between f and a random f_i.
template <FiniteSum P>
Vec lipschitz_probes(const P& prob, Index num_probes, std::uint64_t seed) {
  require(num_probes >= 1, "estimate_L: num_probes must be >= 1");
  const Index d = prob.dim();
  Rng rng(seed, 0x4C4950);
  Vec ratios;
  Vec x(d), y(d), gx(d), gy(d);
  for (Index k = 0; k < num_probes; ++k) {
    for (Index j = 0; j < d; ++j) x[j] = rng.uniform(-1.0, 1.0);
    for (Index j = 0; j < d; ++j) y[j] = x[j] + 1e-2 * rng.normal();
    if (k % 2 == 0) {
      gx = grad_full(prob, x);
      gy = grad_full(prob, y);
    } else {
      const Index i = rng.below(prob.num_samples());
      prob.sample_grad(x, i, gx);
      prob.sample_grad(y, i, gy);
    }
    double num = 0.0, den = 0.0;
    for (Index j = 0; j < d; ++j) {
      num += (gx[j] - gy[j]) * (gx[j] - gy[j]);
      den += (x[j] - y[j]) * (x[j] - y[j]);
    }
    ratios.push_back(std::sqrt(num / den));
  }
  return ratios;
}

template <FiniteSum P>
double estimate_L(const P& prob, Index num_probes, std::uint64_t seed) {
  const Vec r = lipschitz_probes(prob, num_probes, seed);
  return kLipschitzSafety * *std::max_element(r.begin(), r.end());
}

/// Largest eigenvalue of the least-squares Hessian (1/n)AᵀA + C·I, by power
/// iteration.
inline double hessian_top_eigenvalue(const LeastSquares& prob,
                                     Index max_iters = 10000) {
  const Dataset& data = prob.data();
  const Index d = prob.dim();
  Vec v(d, 1.0 / std::sqrt(static_cast<double>(d))), hv(d);
  double lambda = 0.0;
  for (Index it = 0; it < max_iters; ++it) {
    std::fill(hv.begin(), hv.end(), 0.0);
    for (Index i = 0; i < data.n; ++i) {
      const auto a = data.row(i);
      const double s = dot(a, v);
      for (Index j = 0; j < d; ++j) hv[j] += s * a[j];
    }
    for (Index j = 0; j < d; ++j)
      hv[j] = hv[j] / static_cast<double>(data.n) + prob.reg() * v[j];
    const double next = dot(v, hv);
    const double nrm = std::sqrt(norm_sq(hv));
    if (nrm == 0.0) return 0.0;
    for (Index j = 0; j < d; ++j) v[j] = hv[j] / nrm;
    if (std::abs(next - lambda) <= 1e-14 * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

/// For least squares the smoothness constant is exact: the larger of the
/// Hessian's top eigenvalue and the per-sample curvature max_i ‖a_i‖² + C.
inline double estimate_L(const LeastSquares& prob, Index /*num_probes*/,
                         std::uint64_t /*seed*/) {
  double per_sample = 0.0;
  for (Index i = 0; i < prob.num_samples(); ++i)
    per_sample = std::max(per_sample, norm_sq(prob.data().row(i)));
  return std::max(hessian_top_eigenvalue(prob), per_sample + prob.reg());
}

/// Exact minimizer of a least-squares problem, from the normal equations
/// ((1/n)AᵀA + C·I) x = (1/n)Aᵀy solved by Cholesky.
inline Vec least_squares_minimizer(const LeastSquares& prob) {
  const Dataset& data = prob.data();
  const Index d = prob.dim();
  const double inv_n = 1.0 / static_cast<double>(data.n);
  Vec h(d * d, 0.0), rhs(d, 0.0);
  for (Index i = 0; i < data.n; ++i) {
    const auto a = data.row(i);
    const double y = prob.target(i);
    for (Index r = 0; r < d; ++r) {
      rhs[r] += a[r] * y;
      for (Index c = 0; c <= r; ++c) h[r * d + c] += a[r] * a[c];
    }
  }
  for (Index r = 0; r < d; ++r) {
    rhs[r] *= inv_n;
    for (Index c = 0; c <= r; ++c) h[r * d + c] *= inv_n;
    h[r * d + r] += prob.reg();
  }
  // In-place lower Cholesky factor.
  for (Index c = 0; c < d; ++c) {
    double diag = h[c * d + c];
    for (Index k = 0; k < c; ++k) diag -= h[c * d + k] * h[c * d + k];
    require(diag > 0.0, "least_squares_minimizer: Hessian is singular");
    diag = std::sqrt(diag);
    h[c * d + c] = diag;
    for (Index r = c + 1; r < d; ++r) {
      double s = h[r * d + c];
      for (Index k = 0; k < c; ++k) s -= h[r * d + k] * h[c * d + k];
      h[r * d + c] = s / diag;
    }
  }
  Vec z(d);
  for (Index r = 0; r < d; ++r) {
    double s = rhs[r];
    for (Index k = 0; k < r; ++k) s -= h[r * d + k] * z[k];
    z[r] = s / h[r * d + r];
  }
  Vec x(d);
  for (Index r = d; r-- > 0;) {
    double s = z[r];
    for (Index k = r + 1; k < d; ++k) s -= h[k * d + r] * x[k];
    x[r] = s / h[r * d + r];
  }
  return x;
}

}  // namespace asyvr

#endif  // ASYVR_PROBLEM_HPP
