/*
 * Copyright 2026 The chanprune Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Independent reference implementations used as test oracles. Everything here
// is written with plain loops and shares no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "chanprune/core/tensor.hpp"

namespace oracle {

using chanprune::Shape;
using chanprune::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Direct seven-loop cross-correlation.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& bias, int stride, int pad) {
  const int n = static_cast<int>(x.dim(0)), ci = static_cast<int>(x.dim(1)), h = static_cast<int>(x.dim(2)),
            wd = static_cast<int>(x.dim(3));
  const int co = static_cast<int>(w.dim(0)), k = static_cast<int>(w.dim(2));
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({static_cast<std::size_t>(n), static_cast<std::size_t>(co), static_cast<std::size_t>(oh),
            static_cast<std::size_t>(ow)});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
          for (int c = 0; c < ci; ++c)
            for (int p = 0; p < k; ++p)
              for (int q = 0; q < k; ++q) {
                const int r = i * stride + p - pad, t = j * stride + q - pad;
                if (r < 0 || r >= h || t < 0 || t >= wd) continue;
                s += w[((static_cast<std::size_t>(o) * ci + c) * k + p) * k + q] * x.at(b, c, r, t);
              }
          y.at(b, o, i, j) = s;
        }
  return y;
}

// Central difference of f with respect to x (x is restored afterwards).
inline double central_diff(const std::function<double()>& f, double& x, double eps = 1e-5) {
  const double saved = x;
  x = saved + eps;
  const double up = f();
  x = saved - eps;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * eps);
}

inline double rel_error(double a, double b) {
  const double scale = std::abs(a) + std::abs(b);
  return scale < 1e-10 ? 0.0 : std::abs(a - b) / scale;
}

// Singular values via cyclic Jacobi eigen-decomposition of A^T A.
inline std::vector<double> singular_values(const std::vector<double>& a, int rows, int cols) {
  std::vector<double> g(static_cast<std::size_t>(cols * cols), 0.0);
  for (int i = 0; i < cols; ++i)
    for (int j = 0; j < cols; ++j) {
      double s = 0.0;
      for (int r = 0; r < rows; ++r) s += a[static_cast<std::size_t>(r * cols + i)] * a[static_cast<std::size_t>(r * cols + j)];
      g[static_cast<std::size_t>(i * cols + j)] = s;
    }
  auto at = [&](int i, int j) -> double& { return g[static_cast<std::size_t>(i * cols + j)]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < cols; ++i)
      for (int j = i + 1; j < cols; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < cols; ++p)
      for (int q = p + 1; q < cols; ++q) {
        if (std::abs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < cols; ++k) {
          const double gkp = at(k, p), gkq = at(k, q);
          at(k, p) = c * gkp - s * gkq;
          at(k, q) = s * gkp + c * gkq;
        }
        for (int k = 0; k < cols; ++k) {
          const double gpk = at(p, k), gqk = at(q, k);
          at(p, k) = c * gpk - s * gqk;
          at(q, k) = s * gpk + c * gqk;
        }
      }
  }
  std::vector<double> sv;
  for (int i = 0; i < cols; ++i) sv.push_back(std::sqrt(std::max(0.0, at(i, i))));
  std::sort(sv.rbegin(), sv.rend());
  sv.resize(static_cast<std::size_t>(std::min(rows, cols)));
  return sv;
}

// Rank by Gaussian elimination with full pivoting; pivots below tol count as zero.
inline int gauss_rank(std::vector<double> a, int rows, int cols, double tol = 1e-9) {
  int rank = 0;
  std::vector<bool> used_col(static_cast<std::size_t>(cols), false);
  for (int step = 0; step < std::min(rows, cols); ++step) {
    double best = 0.0;
    int br = -1, bc = -1;
    for (int r = rank; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        if (!used_col[static_cast<std::size_t>(c)] && std::abs(a[static_cast<std::size_t>(r * cols + c)]) > best) {
          best = std::abs(a[static_cast<std::size_t>(r * cols + c)]);
          br = r;
          bc = c;
        }
    if (br < 0 || best <= tol) break;
    for (int c = 0; c < cols; ++c) std::swap(a[static_cast<std::size_t>(br * cols + c)], a[static_cast<std::size_t>(rank * cols + c)]);
    used_col[static_cast<std::size_t>(bc)] = true;
    for (int r = rank + 1; r < rows; ++r) {
      const double f = a[static_cast<std::size_t>(r * cols + bc)] / a[static_cast<std::size_t>(rank * cols + bc)];
      for (int c = 0; c < cols; ++c) a[static_cast<std::size_t>(r * cols + c)] -= f * a[static_cast<std::size_t>(rank * cols + c)];
    }
    ++rank;
  }
  return rank;
}

// Exact Shapley values by averaging marginals over every join order.
inline std::vector<double> shapley_by_orders(int n, const std::function<double(std::uint64_t)>& value) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  double orders = 0.0;
  do {
    std::uint64_t s = 0;
    double prev = value(0);
    for (int a : perm) {
      s |= std::uint64_t{1} << a;
      const double now = value(s);
      w[static_cast<std::size_t>(a)] += now - prev;
      prev = now;
    }
    orders += 1.0;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (double& v : w) v /= orders;
  return w;
}

}  // namespace oracle
