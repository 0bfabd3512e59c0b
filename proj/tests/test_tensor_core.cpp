#include <snlab/matrix.hpp>
#include <snlab/random.hpp>
#include <snlab/spectral.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace snlab;

namespace {

Matrix random_unit_columns(std::size_t d0, std::size_t n, const RngStream& rng) {
  Matrix x = gaussian_matrix(d0, n, 1.0, rng);
  const auto norms = column_norms(x);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d0; ++i) x(i, j) /= norms[j];
  return x;
}

// Explicit X^{*t}: column j is x_j (x) x_j (x) ... (x) x_j.
Matrix materialize_khatri_rao(const Matrix& x, std::size_t t) {
  std::size_t rows = 1;
  for (std::size_t k = 0; k < t; ++k) rows *= x.rows();
  Matrix out(rows, x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    std::vector<double> col{1.0};
    for (std::size_t k = 0; k < t; ++k) {
      std::vector<double> next;
      for (double a : col)
        for (std::size_t i = 0; i < x.rows(); ++i) next.push_back(a * x(i, j));
      col = std::move(next);
    }
    for (std::size_t r = 0; r < rows; ++r) out(r, j) = col[r];
  }
  return out;
}

}  // namespace

TEST(Matrix, RejectsNonFiniteAndBadSizes) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}),
               ArgumentError);
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST(Matrix, ProductsAgree) {
  const RngStream rng(3);
  const Matrix a = gaussian_matrix(4, 3, 1.0, rng.child(0));
  const Matrix b = gaussian_matrix(4, 5, 1.0, rng.child(1));
  const Matrix tn = matmul_tn(a, b);
  const Matrix ref = matmul(transpose(a), b);
  EXPECT_LE(max_abs(tn - ref), 1e-14);
  const Matrix nt = matmul_nt(transpose(a), transpose(b));
  EXPECT_LE(max_abs(nt - ref), 1e-14);
}

TEST(SvdExtremes, IdentityIsOne) {
  const auto s = svd_extremes(Matrix::identity(3));
  EXPECT_DOUBLE_EQ(s.sigma_max, 1.0);
  EXPECT_DOUBLE_EQ(s.sigma_min, 1.0);
}

TEST(SvdExtremes, DiagonalWithZero) {
  const auto s = svd_extremes(Matrix{{3.0, 0.0}, {0.0, 0.0}});
  EXPECT_DOUBLE_EQ(s.sigma_max, 3.0);
  EXPECT_EQ(s.sigma_min, 0.0);
}

TEST(SvdExtremes, ShearMatchesCharacteristicRoots) {
  const auto s = svd_extremes(Matrix{{1.0, 1.0}, {0.0, 1.0}});
  EXPECT_NEAR(s.sigma_max, std::sqrt((3.0 + std::sqrt(5.0)) / 2.0), 1e-14);
  EXPECT_NEAR(s.sigma_min, std::sqrt((3.0 - std::sqrt(5.0)) / 2.0), 1e-14);
}

TEST(SvdExtremes, EmptyThrows) { EXPECT_THROW(svd_extremes(Matrix()), DimensionError); }

TEST(SvdExtremes, FrobeniusSandwich) {
  const RngStream rng(11);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const std::size_t r = 1 + k % 7;
    const std::size_t c = 1 + (k * 3) % 6;
    const Matrix m = gaussian_matrix(r, c, 1.0, rng.child(k));
    const double smax = sigma_max(m);
    const double f2 = squared_norm(m);
    EXPECT_GE(f2, smax * smax * (1.0 - 1e-12));
    EXPECT_LE(f2, static_cast<double>(std::min(r, c)) * smax * smax * (1.0 + 1e-12));
  }
}

TEST(SvdExtremes, MatchesSymmetricEigenvaluesOfGram) {
  const RngStream rng(12);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Matrix m = gaussian_matrix(6, 4, 1.0, rng.child(k));
    const auto sv = singular_values(m);
    const auto ev = symmetric_eigenvalues(matmul_tn(m, m));
    for (std::size_t i = 0; i < sv.size(); ++i)
      EXPECT_NEAR(sv[i] * sv[i], ev[i], 1e-10 * ev.front());
  }
}

TEST(Weyl, IdentityAndZeroCases) {
  EXPECT_TRUE(weyl_check(Matrix::identity(2), Matrix::identity(2), 1, 1));
  const RngStream rng(5);
  const Matrix b = gaussian_matrix(3, 3, 1.0, rng);
  EXPECT_TRUE(weyl_check(Matrix(3, 3), b, 1, 1));
}

TEST(Weyl, RejectsBadIndices) {
  EXPECT_THROW(weyl_check(Matrix::identity(2), Matrix::identity(2), 2, 2), IndexError);
  EXPECT_THROW(weyl_check(Matrix::identity(2), Matrix::identity(2), 0, 1), IndexError);
  EXPECT_THROW(weyl_check(Matrix::identity(2), Matrix::identity(3), 1, 1), DimensionError);
}

TEST(Weyl, RandomPairsNeverViolate) {
  const RngStream rng(6);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const Matrix a = gaussian_matrix(4, 4, 1.0, rng.child(2 * k));
    const Matrix b = gaussian_matrix(4, 4, 1.0, rng.child(2 * k + 1));
    for (std::size_t i = 1; i <= 4; ++i)
      for (std::size_t j = 1; i + j - 1 <= 4; ++j) EXPECT_TRUE(weyl_check(a, b, i, j));
  }
}

TEST(KhatriRao, OrthonormalColumnsStayOrthonormal) {
  const Matrix x{{1.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}};
  const Matrix g = khatri_rao_gram(x, 2);
  EXPECT_EQ(g, Matrix::identity(2));
}

TEST(KhatriRao, CubedInnerProduct) {
  const double s = std::sqrt(3.0) / 2.0;
  const Matrix x{{1.0, 0.5}, {0.0, s}};
  const Matrix g = khatri_rao_gram(x, 3);
  EXPECT_NEAR(g(0, 1), 0.125, 1e-15);
  EXPECT_NEAR(g(1, 0), 0.125, 1e-15);
  EXPECT_NEAR(g(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(g(1, 1), 1.0, 1e-15);
}

TEST(KhatriRao, ZerothPowerIsAllOnes) {
  const RngStream rng(1);
  const Matrix g = khatri_rao_gram(random_unit_columns(2, 3, rng), 0);
  EXPECT_EQ(g, Matrix(3, 3, 1.0));
}

TEST(KhatriRao, MatchesMaterializedProduct) {
  const RngStream rng(8);
  std::uint64_t id = 0;
  for (std::size_t d0 = 1; d0 <= 4; ++d0)
    for (std::size_t n = 1; n <= 4; ++n)
      for (std::size_t t = 1; t <= 3; ++t) {
        const Matrix x = random_unit_columns(d0, n, rng.child(id++));
        const Matrix xt = materialize_khatri_rao(x, t);
        EXPECT_LE(max_abs(khatri_rao_gram(x, t) - matmul_tn(xt, xt)), 1e-12);
      }
}

TEST(Gaussian, ZeroStdGivesZeroMatrix) {
  EXPECT_EQ(gaussian_matrix(3, 4, 0.0, RngStream(1)), Matrix(3, 4));
  EXPECT_THROW(gaussian_matrix(3, 4, -1.0, RngStream(1)), ArgumentError);
}

TEST(Gaussian, Deterministic) {
  const RngStream a(42, 7);
  const RngStream b(42, 7);
  EXPECT_EQ(gaussian_matrix(10, 10, 1.0, a), gaussian_matrix(10, 10, 1.0, b));
  EXPECT_EQ(a.child(3).bits(9), b.child(3).bits(9));
}

TEST(Gaussian, SampleStd) {
  const Matrix m = gaussian_matrix(1000, 1000, 1.0, RngStream(2024));
  double mean = 0.0;
  for (double v : m.data()) mean += v;
  mean /= static_cast<double>(m.size());
  double var = 0.0;
  for (double v : m.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(m.size() - 1));
  EXPECT_GE(sd, 0.99);
  EXPECT_LE(sd, 1.01);
}

TEST(Gaussian, DistinctStreamsUncorrelated) {
  const Matrix a = gaussian_matrix(100, 100, 1.0, RngStream(9, 0));
  const Matrix b = gaussian_matrix(100, 100, 1.0, RngStream(9, 1));
  const double corr = dot(a, b) / (frobenius_norm(a) * frobenius_norm(b));
  EXPECT_LT(std::abs(corr), 0.05);
}

TEST(Permutation, IsAPermutation) {
  auto p = random_permutation(50, RngStream(4));
  std::vector<bool> seen(50, false);
  for (auto i : p) seen[i] = true;
  for (bool s : seen) EXPECT_TRUE(s);
  EXPECT_EQ(p, random_permutation(50, RngStream(4)));
}
