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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "opemix/linalg.hpp"

namespace opemix {
namespace {

// Cyclic Jacobi sweeps; returns all eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        off += a(p, q) * a(p, q);
      }
    }
    if (off < 1e-30) {
      break;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) {
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) {
    ev[i] = a(i, i);
  }
  return ev;
}

Matrix random_spd(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng{seed};
  std::normal_distribution<double> z;
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      b(i, j) = z(rng);
    }
  }
  return b * b.transpose() + 0.1 * Matrix::identity(n);
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      EXPECT_NEAR(a(i, j), b(i, j), tol) << i << "," << j;
    }
  }
}

TEST(Linalg, CholeskyByHand) {
  const Matrix l = cholesky(Matrix{{4, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(l(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(l(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(l(1, 1), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(l(0, 1), 0.0);
}

TEST(Linalg, CholeskyReconstructs) {
  const Matrix a = random_spd(6, 3);
  const Matrix l = cholesky(a);
  expect_near(l * l.transpose(), a, 1e-10);
}

TEST(Linalg, NotSpdThrows) {
  EXPECT_THROW((void)cholesky(Matrix{{1, 2}, {2, 1}}), NotSpdError);
  EXPECT_THROW((void)cholesky(Matrix{{0, 0}, {0, 0}}), NotSpdError);
  EXPECT_THROW((void)spd_solve(Matrix{{-1}}, Vector{1.0}), NotSpdError);
}

TEST(Linalg, SolveAndInverse) {
  const Matrix a{{4, 2}, {2, 3}};
  const Vector x = spd_solve(a, Vector{2.0, 5.0});
  // 4x + 2y = 2, 2x + 3y = 5
  EXPECT_NEAR(x[0], -0.5, 1e-14);
  EXPECT_NEAR(x[1], 2.0, 1e-14);
  const Matrix big = random_spd(7, 11);
  expect_near(big * spd_inverse(big), Matrix::identity(7), 1e-9);
  EXPECT_TRUE(is_symmetric(spd_inverse(big)));
}

TEST(Linalg, DimensionMismatchThrows) {
  EXPECT_THROW((void)spd_solve(Matrix{{1, 0}, {0, 1}}, Vector{1.0}), Error);
  EXPECT_THROW((void)cholesky(Matrix(2, 3)), Error);
}

TEST(Linalg, RegularizeAddsScaledMeanDiagonal) {
  const Matrix r = regularize(Matrix{{2, 1}, {1, 4}}, 0.5);
  EXPECT_DOUBLE_EQ(r(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(r(1, 1), 5.5);
  EXPECT_DOUBLE_EQ(r(0, 1), 1.0);
  EXPECT_EQ(regularize(Matrix{{2, 1}, {1, 4}}, 0.0), (Matrix{{2, 1}, {1, 4}}));
  EXPECT_THROW((void)regularize(Matrix{{1}}, -1.0), Error);
}

TEST(Linalg, RegularizeRescuesSingular) {
  const Matrix singular{{1, 1}, {1, 1}};
  EXPECT_THROW((void)cholesky(singular), NotSpdError);
  EXPECT_NO_THROW((void)cholesky(regularize(singular, 1e-8)));
}

TEST(Linalg, ConditionNumberMatchesJacobi) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix a = random_spd(5, seed);
    const auto ev = jacobi_eigenvalues(a);
    const double want = *std::max_element(ev.begin(), ev.end()) / *std::min_element(ev.begin(), ev.end());
    EXPECT_NEAR(condition_number(a, 1e-12), want, 1e-5 * want) << seed;
  }
}

TEST(Linalg, ConditionNumberEdgeCases) {
  EXPECT_NEAR(condition_number(Matrix::identity(4)), 1.0, 1e-12);
  EXPECT_NEAR(condition_number(Matrix::diagonal(Vector{1.0, 100.0})), 100.0, 1e-6);
  EXPECT_TRUE(std::isinf(condition_number(Matrix{{1, 1}, {1, 1}})));
  EXPECT_TRUE(std::isinf(condition_number(Matrix{{-1, 0}, {0, 1}})));
}

TEST(Linalg, PrecisionBlocksPartitionInverse) {
  const Matrix joint = random_spd(4, 9);
  const auto pb = precision_blocks(joint);
  const Matrix h = spd_inverse(joint);
  expect_near(pb.h11, h.block(0, 0, 2, 2), 0.0);
  expect_near(pb.h12, h.block(0, 2, 2, 2), 0.0);
  expect_near(pb.h21, pb.h12.transpose(), 1e-12);
  expect_near(pb.h22, h.block(2, 2, 2, 2), 0.0);
  EXPECT_THROW((void)precision_blocks(random_spd(3, 1)), Error);
}

TEST(Linalg, SymmetrizeAndNorms) {
  const Matrix s = symmetrize(Matrix{{1, 2}, {4, 1}});
  EXPECT_DOUBLE_EQ(s(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(norm2(Vector{3.0, 4.0}), 5.0);
  EXPECT_DOUBLE_EQ(dot(Vector{1.0, 2.0}, Vector{3.0, 4.0}), 11.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix{{3, 0}, {0, 4}}), 5.0);
}

}  // namespace
}  // namespace opemix
