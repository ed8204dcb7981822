// Copyright 2026 The ope-mix Authors.
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

#ifndef OPEMIX_LINALG_HPP
#define OPEMIX_LINALG_HPP

#include <opemix/errors.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

/**
 * \file
 * \brief Small dense linear algebra for covariance and precision matrices.
 *
 * Matrices here are at most a few dozen rows; everything is O(n^3) and single-threaded.
 */

namespace opemix {

using Vector = std::vector<double>;

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_{rows}, cols_{cols}, data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> rows) : rows_{rows.size()} {
    cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) {
        throw Error("ragged matrix literal");
      }
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, i) = 1.0;
    }
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      m(i, i) = d[i];
    }
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  [[nodiscard]] Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        t(c, r) = (*this)(r, c);
      }
    }
    return t;
  }

  /// Sub-block [r0, r0+nr) x [c0, c0+nc).
  [[nodiscard]] Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    Matrix b(nr, nc);
    for (std::size_t r = 0; r < nr; ++r) {
      for (std::size_t c = 0; c < nc; ++c) {
        b(r, c) = (*this)(r0 + r, c0 + c);
      }
    }
    return b;
  }

  Matrix& operator+=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) {
      data_[k] += o.data_[k];
    }
    return *this;
  }

  Matrix& operator-=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) {
      data_[k] -= o.data_[k];
    }
    return *this;
  }

  Matrix& operator*=(double s) noexcept {
    for (auto& v : data_) {
      v *= s;
    }
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) {
      throw Error("matrix product dimension mismatch");
    }
    Matrix out(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < b.cols_; ++j) {
          out(i, j) += aik * b(k, j);
        }
      }
    }
    return out;
  }

  friend Vector operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols_ != x.size()) {
      throw Error("matrix-vector dimension mismatch");
    }
    Vector out(a.rows_, 0.0);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols_; ++j) {
        s += a(i, j) * x[j];
      }
      out[i] = s;
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void check_same(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw Error("matrix dimension mismatch");
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

[[nodiscard]] inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) {
    s += v * v;
  }
  return std::sqrt(s);
}

[[nodiscard]] inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) {
    s += v * v;
  }
  return std::sqrt(s);
}

[[nodiscard]] inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

[[nodiscard]] inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-12) {
  if (!a.square()) {
    return false;
  }
  double scale = 0.0;
  for (double v : a.data()) {
    scale = std::max(scale, std::abs(v));
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      if (std::abs(a(i, j) - a(j, i)) > rel_tol * scale) {
        return false;
      }
    }
  }
  return true;
}

/// Returns (a + aᵀ)/2.
[[nodiscard]] inline Matrix symmetrize(const Matrix& a) {
  if (!a.square()) {
    throw Error("symmetrize needs a square matrix");
  }
  Matrix s = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = m;
      s(j, i) = m;
    }
  }
  return s;
}

/// Lower-triangular L with L·Lᵀ = a. Throws NotSpdError on a pivot at rounding level or below.
[[nodiscard]] inline Matrix cholesky(const Matrix& a) {
  if (!a.square()) {
    throw Error("cholesky needs a square matrix");
  }
  const std::size_t n = a.rows();
  const double tiny = 4.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) {
      d -= l(j, k) * l(j, k);
    }
    if (!(d > tiny * std::abs(a(j, j))) || !std::isfinite(d)) {
      throw NotSpdError(j);
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) {
        s -= l(i, k) * l(j, k);
      }
      l(i, j) = s / ljj;
    }
  }
  return l;
}

namespace detail {

// Solves L·Lᵀ x = b in place.
inline void cholesky_substitute(const Matrix& l, std::span<double> x) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) {
      s -= l(i, k) * x[k];
    }
    x[i] = s / l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) {
      s -= l(k, i) * x[k];
    }
    x[i] = s / l(i, i);
  }
}

}  // namespace detail

[[nodiscard]] inline Vector spd_solve(const Matrix& a, std::span<const double> b) {
  if (a.rows() != b.size()) {
    throw Error("spd_solve dimension mismatch");
  }
  const Matrix l = cholesky(a);
  Vector x(b.begin(), b.end());
  detail::cholesky_substitute(l, x);
  return x;
}

[[nodiscard]] inline Matrix spd_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error("spd_solve dimension mismatch");
  }
  const Matrix l = cholesky(a);
  Matrix x(b.rows(), b.cols());
  Vector col(b.rows());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t r = 0; r < b.rows(); ++r) {
      col[r] = b(r, c);
    }
    detail::cholesky_substitute(l, col);
    for (std::size_t r = 0; r < b.rows(); ++r) {
      x(r, c) = col[r];
    }
  }
  return x;
}

/// Inverse of an SPD matrix, symmetrized.
[[nodiscard]] inline Matrix spd_inverse(const Matrix& a) {
  return symmetrize(spd_solve(a, Matrix::identity(a.rows())));
}

/// a + eps·mean(diag(a))·I.
[[nodiscard]] inline Matrix regularize(const Matrix& a, double eps) {
  if (!a.square()) {
    throw Error("regularize needs a square matrix");
  }
  if (eps < 0.0) {
    throw Error("regularization eps must be non-negative");
  }
  const std::size_t n = a.rows();
  if (n == 0 || eps == 0.0) {
    return a;
  }
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_diag += a(i, i);
  }
  mean_diag /= static_cast<double>(n);
  Matrix out = a;
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) += eps * mean_diag;
  }
  return out;
}

namespace detail {

// Largest-magnitude eigenvalue of a symmetric matrix by power iteration (Rayleigh quotient).
inline double power_iteration(const Matrix& a, double rel_tol, std::size_t max_iter) {
  const std::size_t n = a.rows();
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Deterministic start with components along every axis.
    x[i] = 1.0 + 0.1 * static_cast<double>(i % 7) / 7.0;
  }
  double norm = norm2(x);
  for (auto& v : x) {
    v /= norm;
  }
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vector y = a * std::span<const double>{x};
    const double next = dot(x, y);
    norm = norm2(y);
    if (norm == 0.0) {
      return 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = y[i] / norm;
    }
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace detail

/// λ_max/λ_min of a symmetric matrix; +infinity when it is not positive definite.
/**
 * λ_max comes from power iteration and λ_min from power iteration on the inverse
 * (inverse iteration through a Cholesky factor), both to `rel_tol` relative change.
 */
[[nodiscard]] inline double condition_number(const Matrix& a, double rel_tol = 1e-8, std::size_t max_iter = 100000) {
  if (!a.square() || a.rows() == 0) {
    throw Error("condition_number needs a non-empty square matrix");
  }
  Matrix inv;
  try {
    inv = spd_inverse(a);
  } catch (const NotSpdError&) {
    return std::numeric_limits<double>::infinity();
  }
  const double lmax = detail::power_iteration(a, rel_tol, max_iter);
  const double inv_lmin = detail::power_iteration(inv, rel_tol, max_iter);
  if (!(lmax > 0.0) || !(inv_lmin > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return lmax * inv_lmin;
}

/// The four quadrants of the inverse of a 2k x 2k joint covariance matrix.
struct PrecisionBlocks {
  Matrix h11;
  Matrix h12;
  Matrix h21;
  Matrix h22;
};

/// Inverts `joint` and partitions it into (value, value), (value, control), (control, value), (control, control).
[[nodiscard]] inline PrecisionBlocks precision_blocks(const Matrix& joint) {
  if (!joint.square() || joint.rows() % 2 != 0) {
    throw Error("precision_blocks needs an even-sized square matrix");
  }
  const std::size_t k = joint.rows() / 2;
  const Matrix h = spd_inverse(joint);
  return {h.block(0, 0, k, k), h.block(0, k, k, k), h.block(k, 0, k, k), h.block(k, k, k, k)};
}

}  // namespace opemix

#endif  // OPEMIX_LINALG_HPP
