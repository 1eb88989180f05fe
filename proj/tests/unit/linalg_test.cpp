#include "mmblock/error.hpp"
#include "mmblock/linalg.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace mmb {
namespace {

using testing::max_abs;
using testing::random_matrix;

void expect_valid_svd(const Matrix& m, const SvdResult& svd) {
    const double smax = svd.s.size() > 0 ? svd.s(0) : 0.0;
    EXPECT_LE(max_abs(m - svd.u * svd.s.asDiagonal() * svd.v.transpose()), 1e-12 * std::max(smax, 1.0));
    for (Eigen::Index j = 1; j < svd.s.size(); ++j) EXPECT_GE(svd.s(j - 1), svd.s(j));
    EXPECT_LT(orthonormality_residual(svd.u), 1e-12);
    EXPECT_LT(orthonormality_residual(svd.v), 1e-12);
    for (Eigen::Index j = 0; j < svd.u.cols(); ++j) {
        // Lowest index among entries tied (to rounding) for largest magnitude.
        const double top = svd.u.col(j).cwiseAbs().maxCoeff();
        Eigen::Index arg = 0;
        while (std::abs(svd.u(arg, j)) < top * (1.0 - 1e-10)) ++arg;
        EXPECT_GE(svd.u(arg, j), 0.0);
    }
}

TEST(ThinSvd, DiagonalInput) {
    Matrix m(2, 2);
    m << 3, 0, 0, 1;
    const auto svd = thin_svd(m);
    EXPECT_NEAR(svd.s(0), 3.0, 1e-15);
    EXPECT_NEAR(svd.s(1), 1.0, 1e-15);
    EXPECT_LT(max_abs(svd.u.cwiseAbs() - Matrix::Identity(2, 2)), 1e-15);
    EXPECT_LT(max_abs(svd.v.cwiseAbs() - Matrix::Identity(2, 2)), 1e-15);
    expect_valid_svd(m, svd);
}

TEST(ThinSvd, RankOneOuterProduct) {
    Vector x(3), y(4);
    x << 1, -2, 2;
    y << 0.5, 1, -1, 2;
    const Matrix m = x * y.transpose();
    const auto svd = thin_svd(m);
    EXPECT_NEAR(svd.s(0), x.norm() * y.norm(), 1e-12);
    for (Eigen::Index j = 1; j < svd.s.size(); ++j) EXPECT_LT(svd.s(j), 1e-12);
    expect_valid_svd(m, svd);
}

TEST(ThinSvd, ZeroMatrix) {
    const auto svd = thin_svd(Matrix::Zero(3, 2));
    EXPECT_EQ(svd.s.size(), 2);
    EXPECT_EQ(svd.s.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ThinSvd, RandomShapesAndSignConvention) {
    std::mt19937_64 rng(41);
    for (auto [r, c] : {std::pair{5, 3}, std::pair{3, 7}, std::pair{6, 6}, std::pair{40, 12}}) {
        const Matrix m = random_matrix(r, c, rng);
        expect_valid_svd(m, thin_svd(m));
        // Deterministic: same input, same output.
        EXPECT_EQ(thin_svd(m).u, thin_svd(m).u);
    }
}

TEST(ThinSvd, NonFiniteInputThrows) {
    Matrix m = Matrix::Ones(2, 2);
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(thin_svd(m), NumericalError);
    EXPECT_THROW(pinv(m), NumericalError);
}

TEST(Pinv, IdentityAndDiagonal) {
    EXPECT_LT(max_abs(pinv(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)), 1e-15);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 2.0;
    Matrix expected = Matrix::Zero(2, 2);
    expected(0, 0) = 0.5;
    EXPECT_LT(max_abs(pinv(d) - expected), 1e-15);
}

TEST(Pinv, FullColumnRankLeftInverse) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix m = random_matrix(4, 3, rng);
        const Matrix p = pinv(m);
        EXPECT_LT(max_abs(p * m - Matrix::Identity(3, 3)), 1e-10);
        EXPECT_LT(max_abs(m * p * m - m), 1e-10 * max_abs(m));
    }
}

TEST(Pinv, RankDeficientPenroseCondition) {
    std::mt19937_64 rng(47);
    const Matrix m = random_matrix(5, 2, rng) * random_matrix(2, 4, rng);
    const Matrix p = pinv(m);
    EXPECT_LT(max_abs(m * p * m - m), 1e-10 * max_abs(m));
    EXPECT_LT(max_abs(p * m * p - p), 1e-10 * max_abs(p));
}

TEST(Pinv, NegativeRcondThrows) { EXPECT_THROW(pinv(Matrix::Identity(2, 2), -1.0), DimensionError); }

TEST(ThinQr, Reconstructs) {
    std::mt19937_64 rng(53);
    for (auto [r, c] : {std::pair{6, 3}, std::pair{3, 6}}) {
        const Matrix m = random_matrix(r, c, rng);
        const auto qr = thin_qr(m);
        EXPECT_LT(max_abs(qr.q * qr.r - m), 1e-12);
        EXPECT_LT(orthonormality_residual(qr.q), 1e-12);
    }
}

TEST(CompleteBasis, ExtendsOrthonormally) {
    std::mt19937_64 rng(59);
    const Matrix q = testing::random_orthonormal(6, 2, rng);
    const Matrix full = complete_basis(q, 6);
    EXPECT_EQ(Matrix(full.leftCols(2)), q);
    EXPECT_LT(orthonormality_residual(full), 1e-12);
    EXPECT_THROW(complete_basis(q, 7), DimensionError);
}

TEST(PrincipalAngle, SameAndOrthogonalSpaces) {
    std::mt19937_64 rng(61);
    const Matrix q = testing::random_orthonormal(5, 2, rng);
    Matrix g(2, 2);
    g << 2, 1, -1, 3;
    EXPECT_LT(max_principal_angle(q, q * g), 1e-14);
    const Matrix e1 = Matrix::Identity(3, 1);
    Matrix e2 = Matrix::Zero(3, 1);
    e2(1, 0) = 1.0;
    EXPECT_NEAR(max_principal_angle(e1, e2), std::acos(0.0), 1e-12);
}

} // namespace
} // namespace mmb
