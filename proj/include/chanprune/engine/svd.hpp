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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "chanprune/core/error.hpp"
#include "chanprune/core/tensor.hpp"

namespace chanprune {

// Thin SVD of an h x w matrix: A = U * diag(sigma) * V^T with
// k = min(h, w) singular values in descending order. U is h x k and V is
// w x k, both row-major.
struct SvdResult {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> singular_values;
  std::vector<double> u;
  std::vector<double> v;
};

namespace detail {

// One-sided (Hestenes) Jacobi: orthogonalizes the columns of a tall matrix,
// which implicitly diagonalizes A^T A. `cols` is column-major m x n with
// m >= n; on return its columns are U*diag(sigma). `basis` (n x n,
// column-major) accumulates the right rotations when non-null.
inline void jacobi_orthogonalize(std::vector<double>& cols, std::size_t m, std::size_t n,
                                 std::vector<double>* basis) {
  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = cols.data() + p * m;
        double* aq = cols.data() + q * m;
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += ap[i] * ap[i];
          beta += aq[i] * aq[i];
          gamma += ap[i] * aq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = ap[i], y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        if (basis) {
          double* vp = basis->data() + p * n;
          double* vq = basis->data() + q * n;
          for (std::size_t i = 0; i < n; ++i) {
            const double x = vp[i], y = vq[i];
            vp[i] = c * x - s * y;
            vq[i] = s * x + c * y;
          }
        }
      }
    }
    if (!rotated) return;
  }
}

inline SvdResult svd_impl(const Tensor& matrix, bool with_vectors) {
  if (matrix.rank() != 2) {
    throw DimensionError("svd: expected a 2-D matrix, got shape " + shape_str(matrix.shape()));
  }
  const std::size_t h = matrix.dim(0), w = matrix.dim(1);
  const bool transpose = w > h;
  const std::size_t m = transpose ? w : h;  // rows of the working matrix
  const std::size_t n = transpose ? h : w;  // columns (= number of singular values)
  std::vector<double> cols(m * n);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double x = matrix[r * w + c];
      if (transpose) cols[r * m + c] = x;  // column r of A^T is row r of A
      else cols[c * m + r] = x;
    }
  std::vector<double> basis;
  if (with_vectors) {
    basis.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) basis[i * n + i] = 1.0;
  }
  jacobi_orthogonalize(cols, m, n, with_vectors ? &basis : nullptr);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += cols[j * m + i] * cols[j * m + i];
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  SvdResult r;
  r.rows = h;
  r.cols = w;
  r.singular_values.resize(n);
  for (std::size_t k = 0; k < n; ++k) r.singular_values[k] = norms[order[k]];
  if (!with_vectors) return r;

  // Working matrix B (m x n) satisfies B = Uw S Vw^T with Uw = cols/sigma and
  // Vw = basis. For A = B^T the roles swap.
  std::vector<double> left(m * n, 0.0);  // m x n row-major
  std::vector<double> right(n * n);      // n x n row-major
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const double sigma = norms[j];
    for (std::size_t i = 0; i < m; ++i) {
      left[i * n + k] = sigma > 0.0 ? cols[j * m + i] / sigma : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) right[i * n + k] = basis[j * n + i];
  }
  if (transpose) {
    r.u = std::move(right);  // h x k with h = n
    r.v = std::move(left);   // w x k with w = m
  } else {
    r.u = std::move(left);
    r.v = std::move(right);
  }
  return r;
}

}  // namespace detail

// Singular values of a 2-D matrix, descending, min(h, w) entries.
inline std::vector<double> svd_singular_values(const Tensor& matrix) {
  return detail::svd_impl(matrix, false).singular_values;
}

// Full thin decomposition, used to validate reconstruction.
inline SvdResult svd_decompose(const Tensor& matrix) { return detail::svd_impl(matrix, true); }

// Rebuilds U * diag(sigma) * V^T as an h x w tensor.
inline Tensor svd_reconstruct(const SvdResult& svd) {
  const std::size_t k = svd.singular_values.size();
  Tensor out({svd.rows, svd.cols});
  for (std::size_t r = 0; r < svd.rows; ++r)
    for (std::size_t c = 0; c < svd.cols; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        s += svd.u[r * k + i] * svd.singular_values[i] * svd.v[c * k + i];
      }
      out[r * svd.cols + c] = s;
    }
  return out;
}

}  // namespace chanprune
