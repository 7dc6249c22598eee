#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pgb {
namespace {

TEST(MagnitudeImportance, Examples) {
    EXPECT_EQ(importance_magnitude_sq(Matrix{{1, -2}}).scores(), (Matrix{{1, 4}}));
    EXPECT_EQ(importance_magnitude_sq(Matrix(3, 3)).total(), 0.0);
}

TEST(MagnitudeImportance, InvariantUnderSignFlip) {
    std::mt19937_64 rng(5);
    Matrix w = random_matrix(6, 9, rng);
    Matrix flipped = w;
    std::bernoulli_distribution coin(0.5);
    for (double& v : flipped.values())
        if (coin(rng)) v = -v;
    EXPECT_EQ(importance_magnitude_sq(w).scores(), importance_magnitude_sq(flipped).scores());
}

TEST(FisherImportance, Examples) {
    const std::vector<GradientSample> one{Matrix{{3}}};
    EXPECT_DOUBLE_EQ(importance_empirical_fisher(Matrix{{2}}, one)(0, 0), 18.0);

    std::mt19937_64 rng(2);
    const Matrix w = random_matrix(4, 5, rng);
    const std::vector<GradientSample> zero{Matrix(4, 5)};
    EXPECT_EQ(importance_empirical_fisher(w, zero).total(), 0.0);
}

TEST(FisherImportance, TwoSamplesEqualAveragedSquare) {
    std::mt19937_64 rng(9);
    const Matrix w = random_matrix(3, 4, rng);
    const Matrix g1 = random_matrix(3, 4, rng);
    const Matrix g2 = random_matrix(3, 4, rng);
    const auto two = importance_empirical_fisher(w, std::vector<GradientSample>{g1, g2});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const double g_sq = (g1(i, j) * g1(i, j) + g2(i, j) * g2(i, j)) / 2.0;
            EXPECT_NEAR(two(i, j), w(i, j) * w(i, j) * g_sq / 2.0, 1e-14);
        }
}

TEST(FisherImportance, Errors) {
    EXPECT_THROW(importance_empirical_fisher(Matrix(2, 2), std::vector<GradientSample>{}), ValidationError);
    EXPECT_THROW(importance_empirical_fisher(Matrix(2, 2), std::vector<GradientSample>{Matrix(2, 3)}), ShapeError);
}

TEST(FisherImportance, MonotoneInWeightAndGradientMagnitude) {
    std::mt19937_64 rng(4);
    const Matrix w = random_matrix(4, 4, rng);
    const Matrix g = random_matrix(4, 4, rng);
    Matrix w_big = w, g_big = g;
    for (double& v : w_big.values()) v *= 1.5;
    for (double& v : g_big.values()) v *= 2.0;
    const auto base = importance_empirical_fisher(w, std::vector<GradientSample>{g});
    const auto by_w = importance_empirical_fisher(w_big, std::vector<GradientSample>{g});
    const auto by_g = importance_empirical_fisher(w, std::vector<GradientSample>{g_big});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_GE(by_w(i, j), base(i, j));
            EXPECT_GE(by_g(i, j), base(i, j));
        }
}

// Gradient of L(W) = 0.5 * ||X W - Y||^2 by central differences (test-only, <= 8x8).
Matrix finite_difference_gradient(const Matrix& x, Matrix w, const Matrix& y) {
    auto loss = [&](const Matrix& wm) {
        const double d = frobenius_distance(test::naive_matmul(x, wm), y);
        return 0.5 * d * d;
    };
    Matrix g(w.rows(), w.cols());
    const double h = 1e-6;
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double orig = w(i, j);
            w(i, j) = orig + h;
            const double up = loss(w);
            w(i, j) = orig - h;
            const double down = loss(w);
            w(i, j) = orig;
            g(i, j) = (up - down) / (2 * h);
        }
    return g;
}

TEST(FisherImportance, FiniteDifferenceGradientsMatchAnalytic) {
    std::mt19937_64 rng(12);
    const Matrix x = random_matrix(6, 5, rng);
    const Matrix w = random_matrix(5, 4, rng);
    const Matrix y = random_matrix(6, 4, rng);
    const Matrix fd = finite_difference_gradient(x, w, y);
    Matrix resid = test::naive_matmul(x, w);
    for (std::size_t i = 0; i < resid.size(); ++i) resid.data()[i] -= y.data()[i];
    const Matrix analytic = test::naive_matmul(transpose(x), resid);
    EXPECT_LE(max_abs_difference(fd, analytic), 1e-6);
    const auto a = importance_empirical_fisher(w, std::vector<GradientSample>{fd});
    const auto b = importance_empirical_fisher(w, std::vector<GradientSample>{analytic});
    EXPECT_LE(max_abs_difference(a.scores(), b.scores()), 1e-6);
}

TEST(RegionImportance, FourByFourTopLeft) {
    const auto permuted = apply_permutation(test::fixture_4x4(), Permutation({0, 2, 1, 3}), Permutation({0, 3, 1, 2}));
    const ImportanceMatrix imp(permuted);
    EXPECT_EQ(region_importance(imp, {0, 2}, {0, 2}), 6.0);
}

TEST(RegionImportance, FullRangeIsPermutationInvariantTotal) {
    std::mt19937_64 rng(6);
    const auto imp = test::random_importance(7, 5, rng);
    const ImportanceMatrix shuffled(apply_permutation(imp.scores(), test::random_permutation(7, rng), test::random_permutation(5, rng)));
    EXPECT_NEAR(region_importance(imp, {0, 7}, {0, 5}), imp.total(), 1e-12);
    EXPECT_NEAR(region_importance(shuffled, {0, 7}, {0, 5}), imp.total(), 1e-12);
}

TEST(RegionImportance, EmptyAndOutOfRange) {
    const ImportanceMatrix imp(test::fixture_4x4());
    EXPECT_EQ(region_importance(imp, {2, 2}, {0, 4}), 0.0);
    EXPECT_THROW(region_importance(imp, {0, 5}, {0, 1}), ShapeError);
}

TEST(ImportanceMatrix, RejectsNegativeScores) {
    EXPECT_THROW(ImportanceMatrix(Matrix{{-1.0}}), ValidationError);
}

TEST(FfnLayerScore, Examples) {
    EXPECT_EQ(ffn_layer_score(ImportanceMatrix(Matrix(2, 3)), ImportanceMatrix(Matrix(3, 2))), 0.0);
    EXPECT_EQ(ffn_layer_score(ImportanceMatrix(Matrix{{1, 2}}), ImportanceMatrix(Matrix{{4}})), 7.0);
}

TEST(FfnLayerScore, ScalingPreservesRanking) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores, doubled;
        for (int layer = 0; layer < 4; ++layer) {
            const auto i1 = test::random_importance(4, 8, rng);
            const auto i2 = test::random_importance(8, 4, rng);
            Matrix s1 = i1.scores(), s2 = i2.scores();
            for (double& v : s1.values()) v *= 2;
            for (double& v : s2.values()) v *= 2;
            scores.push_back(ffn_layer_score(i1, i2));
            doubled.push_back(ffn_layer_score(ImportanceMatrix(s1), ImportanceMatrix(s2)));
            EXPECT_NEAR(doubled.back(), 2 * scores.back(), 1e-12);
        }
        EXPECT_EQ(std::max_element(scores.begin(), scores.end()) - scores.begin(),
                  std::max_element(doubled.begin(), doubled.end()) - doubled.begin());
    }
}

} // namespace
} // namespace pgb
