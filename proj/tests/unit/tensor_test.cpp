#include "mmblock/error.hpp"
#include "mmblock/tensor.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace mmb {
namespace {

using testing::all_indices;
using testing::brute_kronecker;
using testing::brute_matrixize;
using testing::brute_mode_product;
using testing::max_abs;
using testing::random_matrix;
using testing::random_tensor;

DenseTensor digits_tensor() {
    // a_{i1 i2 i3} = 100 i1 + 10 i2 + i3 with 1-based indices.
    DenseTensor a({2, 2, 2});
    for (const auto& idx : all_indices(a.shape())) {
        a(idx) = 100.0 * (idx[0] + 1) + 10.0 * (idx[1] + 1) + (idx[2] + 1);
    }
    return a;
}

TEST(DenseTensor, RejectsInconsistentData) {
    EXPECT_THROW(DenseTensor({2, 3}, std::vector<double>(5)), DimensionError);
    EXPECT_THROW(DenseTensor({2, 0}), DimensionError);
}

TEST(DenseTensor, CanonicalOrderIsModeZeroFastest) {
    DenseTensor a({2, 3}, {0, 1, 2, 3, 4, 5});
    EXPECT_EQ(a.at({1, 0}), 1.0);
    EXPECT_EQ(a.at({0, 1}), 2.0);
    EXPECT_EQ(a.at({1, 2}), 5.0);
}

TEST(Matrixize, DigitsExampleMatchesDefinition) {
    const auto a = digits_tensor();
    Matrix expected(2, 4);
    expected << 111, 121, 112, 122, 211, 221, 212, 222;
    EXPECT_EQ(matrixize(a, 0), expected);
    EXPECT_EQ(brute_matrixize(a, 0), expected);
}

TEST(Matrixize, OrderTwoFirstModeIsIdentity) {
    std::mt19937_64 rng(3);
    const auto a = random_tensor({4, 3}, rng);
    const Matrix m = matrixize(a, 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), a.at({i, j}));
}

TEST(Matrixize, ModeOutOfRangeThrows) {
    EXPECT_THROW(matrixize(digits_tensor(), 3), DimensionError);
}

TEST(Tensorize, InvertsDigitsExample) {
    const auto a = digits_tensor();
    for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(tensorize(brute_matrixize(a, m), m, a.shape()), a);
}

TEST(Tensorize, RowVectorAlongModeZeroIsCopy) {
    Matrix row(1, 5);
    row << 1, 2, 3, 4, 5;
    const auto t = tensorize(row, 0, {1, 5});
    EXPECT_EQ(t, DenseTensor({1, 5}, {1, 2, 3, 4, 5}));
}

TEST(Tensorize, RandomRoundTripAllModes) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_tensor({3, 4, 2}, rng);
        for (std::size_t m = 0; m < 3; ++m) {
            EXPECT_EQ(tensorize(matrixize(a, m), m, a.shape()), a);
            EXPECT_EQ(matrixize(a, m), brute_matrixize(a, m));
        }
    }
}

TEST(Tensorize, DimensionMismatchThrows) {
    EXPECT_THROW(tensorize(Matrix::Zero(2, 3), 0, {2, 2, 2}), DimensionError);
}

TEST(ModeProduct, IdentityAndScaling) {
    std::mt19937_64 rng(5);
    const auto a = random_tensor({3, 4, 2}, rng);
    for (std::size_t m = 0; m < 3; ++m) {
        const auto n = static_cast<Eigen::Index>(a.extent(m));
        EXPECT_EQ(mode_product(a, m, Matrix::Identity(n, n)), a);
        EXPECT_EQ(mode_product(a, m, 2.0 * Matrix::Identity(n, n)), a * 2.0);
    }
}

TEST(ModeProduct, MatchesTripleLoop) {
    std::mt19937_64 rng(7);
    const auto a = random_tensor({3, 4, 2}, rng);
    const Matrix b = random_matrix(5, 4, rng);
    const auto c = mode_product(a, 1, b);
    EXPECT_EQ(c.shape(), (Shape{3, 5, 2}));
    EXPECT_LT(max_abs_diff(c, brute_mode_product(a, 1, b)), 1e-12);
}

TEST(ModeProduct, InnerDimensionMismatchThrows) {
    DenseTensor a({3, 4, 2});
    EXPECT_THROW(mode_product(a, 1, Matrix::Zero(5, 3)), DimensionError);
}

TEST(ModeProduct, MatrixizedDualityAndCommutation) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_tensor({4, 3, 2, 3}, rng);
        for (std::size_t m = 0; m < 4; ++m) {
            const Matrix b = random_matrix(2, static_cast<Eigen::Index>(a.extent(m)), rng);
            EXPECT_LT(max_abs(matrixize(mode_product(a, m, b), m) - b * matrixize(a, m)), 1e-12);
            for (std::size_t n = 0; n < 4; ++n) {
                if (n == m) continue;
                const Matrix c = random_matrix(3, static_cast<Eigen::Index>(a.extent(n)), rng);
                const auto lhs = mode_product(mode_product(a, m, b), n, c);
                const auto rhs = mode_product(mode_product(a, n, c), m, b);
                EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
            }
        }
    }
}

TEST(ModeProduct, TransposedVariantMatches) {
    std::mt19937_64 rng(17);
    const auto a = random_tensor({3, 4, 2}, rng);
    const Matrix b = random_matrix(4, 3, rng);
    EXPECT_LT(max_abs_diff(mode_product_transposed(a, 1, b), mode_product(a, 1, b.transpose())), 1e-14);
}

TEST(Kronecker, IdentityBlocks) {
    EXPECT_EQ(kronecker(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), Matrix::Identity(6, 6));
}

TEST(Kronecker, RowTimesColumnExample) {
    Matrix u(1, 2), v(2, 1), expected(2, 2);
    u << 1, 2;
    v << 3, 4;
    expected << 3, 6, 4, 8;
    EXPECT_EQ(kronecker(u, v), expected);
}

TEST(Kronecker, MixedProductAndTranspose) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix u = random_matrix(3, 2, rng);
        const Matrix v = random_matrix(2, 4, rng);
        const Matrix x = random_matrix(2, 1, rng);
        const Matrix y = random_matrix(4, 1, rng);
        EXPECT_LT(max_abs(kronecker(u, v) * kronecker(x, y) - kronecker(u * x, v * y)), 1e-12);
        EXPECT_EQ(kronecker(u, v).transpose(), kronecker(u.transpose(), v.transpose()));
        EXPECT_EQ(kronecker(u, v), brute_kronecker(u, v));
    }
}

TEST(KhatriRaoBlock, SingleColumnBlocksAreColumnwiseKronecker) {
    std::mt19937_64 rng(23);
    const Matrix u = random_matrix(3, 2, rng);
    const Matrix v = random_matrix(2, 2, rng);
    const std::vector<Matrix> ub{u.col(0), u.col(1)};
    const std::vector<Matrix> vb{v.col(0), v.col(1)};
    const Matrix kr = khatri_rao_block(ub, vb);
    ASSERT_EQ(kr.cols(), 2);
    for (Eigen::Index j = 0; j < 2; ++j) EXPECT_EQ(Matrix(kr.col(j)), brute_kronecker(u.col(j), v.col(j)));
}

TEST(KhatriRaoBlock, ScalarBlocks) {
    const std::vector<Matrix> ub{Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 3.0)};
    const std::vector<Matrix> vb{Matrix::Constant(1, 1, 5.0), Matrix::Constant(1, 1, 7.0)};
    Matrix expected(1, 2);
    expected << 10.0, 21.0;
    EXPECT_EQ(khatri_rao_block(ub, vb), expected);
}

TEST(KhatriRaoBlock, DimensionBookkeeping) {
    std::mt19937_64 rng(29);
    const std::vector<Matrix> ub{random_matrix(2, 2, rng), random_matrix(2, 3, rng)};
    const std::vector<Matrix> vb{random_matrix(3, 1, rng), random_matrix(3, 1, rng)};
    const Matrix kr = khatri_rao_block(ub, vb);
    EXPECT_EQ(kr.rows(), 6);
    EXPECT_EQ(kr.cols(), 5);
    EXPECT_EQ(Matrix(kr.leftCols(2)), brute_kronecker(ub[0], vb[0]));
    EXPECT_EQ(Matrix(kr.rightCols(3)), brute_kronecker(ub[1], vb[1]));
}

TEST(KhatriRaoBlock, BlockCountMismatchThrows) {
    const std::vector<Matrix> ub{Matrix::Zero(1, 1)};
    const std::vector<Matrix> vb{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    EXPECT_THROW(khatri_rao_block(ub, vb), DimensionError);
}

TEST(Vec, LayoutMatchesModeZeroColumnStacking) {
    std::mt19937_64 rng(31);
    const DenseTensor v1({3}, {1.0, 2.0, 3.0});
    EXPECT_EQ(vec(v1), Vector::LinSpaced(3, 1.0, 3.0));
    const auto a = random_tensor({3, 2, 4}, rng);
    const Matrix a0 = matrixize(a, 0);
    const Vector stacked = Eigen::Map<const Vector>(a0.data(), a0.size());
    EXPECT_EQ(vec(a), stacked);
    EXPECT_EQ(unvec(vec(a), a.shape()), a);
}

TEST(Vec, KroneckerActsOnVectorizedCore) {
    // vec(Z x_0 A x_1 B) = (B (x) A) vec(Z)
    std::mt19937_64 rng(37);
    const auto z = random_tensor({2, 3}, rng);
    const Matrix a = random_matrix(4, 2, rng);
    const Matrix b = random_matrix(5, 3, rng);
    const auto lhs = vec(mode_product(mode_product(z, 0, a), 1, b));
    const Vector rhs = kronecker(b, a) * vec(z);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

} // namespace
} // namespace mmb
