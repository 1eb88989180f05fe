#include "mmblock/error.hpp"
#include "mmblock/factor_model.hpp"
#include "mmblock/linalg.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mmb {
namespace {

using testing::max_abs;
using testing::random_matrix;
using testing::random_orthonormal;
using testing::random_tensor;

DenseTensor tucker_tensor(const Shape& shape, const std::vector<std::size_t>& ranks, std::mt19937_64& rng) {
    DenseTensor t = random_tensor(Shape(ranks.begin(), ranks.end()), rng);
    for (std::size_t m = 0; m < shape.size(); ++m) {
        t = mode_product(t, m, random_orthonormal(static_cast<Eigen::Index>(shape[m]),
                                                  static_cast<Eigen::Index>(ranks[m]), rng));
    }
    return t;
}

TEST(RankSpec, Validation) {
    EXPECT_THROW(RankSpec::energy(0.0), DimensionError);
    EXPECT_THROW(RankSpec::energy(1.5), DimensionError);
    EXPECT_THROW(RankSpec::fixed({1, 0}), DimensionError);
    EXPECT_EQ(RankSpec().tau().value(), 0.99);
}

TEST(MmodeSvd, RankOneTensorHasSingleCoreEntry) {
    Vector a(3), b(2), c(4);
    a << 1, 2, -2;
    b << 3, 4;
    c << 1, 0, 0, 1;
    const auto d = outer_product({a, b, c});
    const auto model = mmode_svd(d, RankSpec::full());
    const double expected = a.norm() * b.norm() * c.norm();
    EXPECT_NEAR(std::abs(model.core.at({0, 0, 0})), expected, 1e-12);
    double others = 0.0;
    for (std::size_t i = 1; i < model.core.size(); ++i) others = std::max(others, std::abs(model.core.data()[i]));
    EXPECT_LT(others, 1e-12);
    for (const auto& u : model.modes) EXPECT_LT(orthonormality_residual(u), 1e-10);
}

TEST(MmodeSvd, ZeroTensor) {
    const DenseTensor d({3, 2, 2});
    const auto model = mmode_svd(d, RankSpec::full());
    EXPECT_EQ(model.core.frobenius_norm(), 0.0);
    EXPECT_EQ(reconstruct(model).frobenius_norm(), 0.0);
    for (const auto& u : model.modes) EXPECT_LT(orthonormality_residual(u), 1e-10);
}

TEST(MmodeSvd, FullRankReconstructionIsExact) {
    std::mt19937_64 rng(101);
    const auto d = random_tensor({5, 4, 3}, rng);
    const auto model = mmode_svd(d, RankSpec::full());
    EXPECT_LT(relative_error(reconstruct(model), d), 1e-10);
    EXPECT_EQ(model.ranks(), (std::vector<std::size_t>{5, 4, 3}));
}

TEST(MmodeSvd, ModeZeroLargerThanRestGetsCompletedBasis) {
    std::mt19937_64 rng(103);
    const auto d = random_tensor({9, 2, 2}, rng);
    const auto model = mmode_svd(d, RankSpec::full());
    EXPECT_EQ(model.modes[0].cols(), 9);
    EXPECT_LT(orthonormality_residual(model.modes[0]), 1e-10);
    EXPECT_LT(relative_error(reconstruct(model), d), 1e-10);
}

TEST(MmodeSvd, RankExceedingExtentThrows) {
    std::mt19937_64 rng(107);
    const auto d = random_tensor({3, 2, 2}, rng);
    EXPECT_THROW(mmode_svd(d, RankSpec::fixed({4, 2, 2})), DimensionError);
}

TEST(MmodeSvd, EnergyThresholdRetainsEnergy) {
    std::mt19937_64 rng(109);
    const auto d = random_tensor({6, 5, 4}, rng);
    for (double tau : {0.5, 0.8, 0.95, 1.0}) {
        const auto model = mmode_svd(d, RankSpec::energy(tau));
        for (std::size_t m = 0; m < 3; ++m) {
            const auto s = thin_svd(matrixize(d, m)).s;
            const auto j = static_cast<Eigen::Index>(model.modes[m].cols());
            EXPECT_GE(s.head(j).squaredNorm(), tau * s.squaredNorm() * (1.0 - 1e-12));
            if (j > 1) EXPECT_LT(s.head(j - 1).squaredNorm(), tau * s.squaredNorm());
        }
    }
}

TEST(MmodeSvd, CenteringStoresMean) {
    std::mt19937_64 rng(113);
    const auto d = random_tensor({4, 3, 2}, rng);
    const auto model = mmode_svd(d, RankSpec::full(), {.center = true});
    ASSERT_EQ(model.mean.size(), 4);
    const Matrix d0 = matrixize(d, 0);
    EXPECT_LT((model.mean - d0.rowwise().mean()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT(relative_error(reconstruct(model), d), 1e-10);
}

TEST(Reconstruct, DiagonalCoreGivesSumOfOuterProducts) {
    std::mt19937_64 rng(127);
    DenseTensor core({3, 3, 3});
    for (std::size_t i = 0; i < 3; ++i) core.at({i, i, i}) = 1.0;
    FactorModel model;
    model.core = core;
    for (int m = 0; m < 3; ++m) model.modes.push_back(random_orthonormal(3, 3, rng));
    DenseTensor expected({3, 3, 3});
    for (Eigen::Index i = 0; i < 3; ++i) {
        expected += outer_product({model.modes[0].col(i), model.modes[1].col(i), model.modes[2].col(i)});
    }
    EXPECT_LT(max_abs_diff(reconstruct(model), expected), 1e-12);
}

TEST(Reconstruct, ZeroCoreGivesMean) {
    FactorModel model;
    model.core = DenseTensor({2, 2});
    model.modes = {Matrix::Identity(3, 2), Matrix::Identity(2, 2)};
    model.mean = Vector::LinSpaced(3, 1.0, 3.0);
    const auto out = reconstruct(model);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out.at({i, j}), static_cast<double>(i + 1));
}

TEST(FactorModel, EquivalenceTransformsLeaveReconstructionUnchanged) {
    std::mt19937_64 rng(131);
    const auto d = random_tensor({4, 3, 3}, rng);
    const auto model = mmode_svd(d, RankSpec::fixed({3, 2, 3}));
    const auto before = reconstruct(model);
    FactorModel transformed = model;
    for (std::size_t m = 0; m < 3; ++m) {
        const auto j = model.modes[m].cols();
        const Matrix g = random_matrix(j, j, rng) + 3.0 * Matrix::Identity(j, j);
        transformed.modes[m] = transformed.modes[m] * g;
        transformed.core = mode_product(transformed.core, m, g.inverse());
    }
    EXPECT_LT(relative_error(reconstruct(transformed), before), 1e-10);
}

TEST(Hooi, ExactRankStopsAfterOneSweep) {
    std::mt19937_64 rng(137);
    const auto d = tucker_tensor({6, 5, 4}, {2, 2, 2}, rng);
    const auto init = mmode_svd(d, RankSpec::fixed({2, 2, 2}));
    const auto refined = hooi_refine(d, init);
    EXPECT_EQ(refined.sweeps, 1u);
    EXPECT_TRUE(refined.converged);
    EXPECT_LT(refined.loss_trace.back(), 1e-20 * d.squared_norm() + 1e-24);
}

TEST(Hooi, TruncatedLossDoesNotExceedHosvdAndIsMonotone) {
    std::mt19937_64 rng(139);
    for (int trial = 0; trial < 5; ++trial) {
        const auto d = random_tensor({6, 5, 4}, rng);
        const auto init = mmode_svd(d, RankSpec::fixed({3, 2, 2}));
        const auto refined = hooi_refine(d, init, 1e-12, 50);
        EXPECT_LE(refined.loss_trace.back(), squared_loss(d, init) + 1e-12);
        for (std::size_t i = 1; i < refined.loss_trace.size(); ++i) {
            EXPECT_LE(refined.loss_trace[i], refined.loss_trace[i - 1] + 1e-12);
        }
        for (const auto& u : refined.model.modes) EXPECT_LT(orthonormality_residual(u), 1e-10);
    }
}

TEST(Hooi, ZeroIterationsReturnsInput) {
    std::mt19937_64 rng(149);
    const auto d = random_tensor({4, 3, 2}, rng);
    const auto init = mmode_svd(d, RankSpec::fixed({2, 2, 1}));
    const auto out = hooi_refine(d, init, 1e-9, 0);
    EXPECT_EQ(out.sweeps, 0u);
    EXPECT_EQ(out.model.core, init.core);
    EXPECT_EQ(out.model.modes, init.modes);
}

TEST(Hooi, ShapeMismatchThrows) {
    std::mt19937_64 rng(151);
    const auto init = mmode_svd(random_tensor({4, 3, 2}, rng), RankSpec::full());
    EXPECT_THROW(hooi_refine(random_tensor({4, 3, 3}, rng), init), DimensionError);
}

TEST(Rank1Cp, RecoversExactRankOne) {
    Vector a(4), b(3), c(2);
    a << 2, -1, 0.5, 1;
    b << 0.3, -0.9, 0.2;
    c << 1, 1;
    const auto t = outer_product({a, b, c});
    const auto fit = rank1_cp(t);
    EXPECT_LT(fit.residual, 1e-10);
    EXPECT_FALSE(fit.degenerate);
    EXPECT_NEAR(std::abs(fit.factors[0].dot(a)) / (fit.factors[0].norm() * a.norm()), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(fit.factors[1].dot(b)) / b.norm(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(fit.factors[2].dot(c)) / c.norm(), 1.0, 1e-12);
    EXPECT_NEAR(fit.factors[1].norm(), 1.0, 1e-14);
    EXPECT_NEAR(fit.factors[0].norm(), a.norm() * b.norm() * c.norm(), 1e-10);
    EXPECT_LT(max_abs_diff(outer_product(fit.factors), t), 1e-10);
}

TEST(Rank1Cp, TiedTermsAreFlaggedAndOneIsChosen) {
    // Two orthogonal rank-1 terms of equal weight.
    const Vector e0 = Vector::Unit(3, 0), e1 = Vector::Unit(3, 1);
    const auto t = outer_product({e0, e0, e0}) + outer_product({e1, e1, e1});
    const auto fit = rank1_cp(t);
    EXPECT_TRUE(fit.degenerate);
    const double match0 = std::abs(fit.factors[1].dot(e0));
    const double match1 = std::abs(fit.factors[1].dot(e1));
    EXPECT_NEAR(std::max(match0, match1), 1.0, 1e-6);
    EXPECT_NEAR(fit.weight, 1.0, 1e-6);
    for (std::size_t i = 1; i < fit.residual_trace.size(); ++i) {
        EXPECT_LE(fit.residual_trace[i], fit.residual_trace[i - 1] + 1e-12);
    }
}

TEST(Rank1Cp, OrderOneReturnsVector) {
    const DenseTensor t({3}, {1.0, -2.0, 2.0});
    const auto fit = rank1_cp(t);
    ASSERT_EQ(fit.factors.size(), 1u);
    EXPECT_EQ(fit.factors[0], vec(t));
    EXPECT_EQ(fit.residual, 0.0);
}

TEST(Rank1Cp, ZeroTensorThrows) { EXPECT_THROW(rank1_cp(DenseTensor({2, 2})), NumericalError); }

} // namespace
} // namespace mmb
