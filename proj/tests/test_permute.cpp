#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pgb {
namespace {

TEST(AlternatingSort, FourByFourReachesOptimum) {
    const ImportanceMatrix imp(test::fixture_4x4());
    const auto plan = alternating_sort(imp, 2, 2, 6);
    EXPECT_EQ(plan.captured, 6.0);
    EXPECT_EQ(plan.captured, captured_importance(imp, plan.pr.entries(), plan.pc.entries(), 2, 2));
}

TEST(AlternatingSort, ConcentratedMatrixKeepsIdentity) {
    const ImportanceMatrix imp(Matrix{{5, 5, 0, 0}, {5, 4, 0, 0}, {0, 0, 1, 1}, {0, 0, 1, 1}});
    const auto plan = alternating_sort(imp, 2, 2, 6);
    EXPECT_TRUE(plan.pr.is_identity());
    EXPECT_TRUE(plan.pc.is_identity());
    EXPECT_EQ(plan.captured, 19.0);
}

TEST(AlternatingSort, NeverWorseThanIdentityPlan) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const auto imp = test::random_importance(6, 6, rng);
        const auto plan = alternating_sort(imp, 2, 2, 6);
        EXPECT_GE(plan.captured, region_importance(imp, {0, 2}, {0, 2})) << "seed " << seed;
    }
}

TEST(AlternatingSort, EverySortStepIsMonotone) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 4 + rng() % 30, n = 4 + rng() % 30;
        const auto imp = test::random_importance(m, n, rng);
        double last = captured_importance(imp, Permutation::identity(m).entries(), Permutation::identity(n).entries(), m / 3, n / 3);
        alternating_sort(imp, m / 3, n / 3, 6, [&](double c) {
            EXPECT_GE(c, last - 1e-12);
            last = c;
        });
    }
}

TEST(AlternatingSort, Deterministic) {
    std::mt19937_64 rng(3);
    const auto imp = test::random_importance(12, 9, rng);
    const auto a = alternating_sort(imp, 4, 3, 6);
    const auto b = alternating_sort(imp, 4, 3, 6);
    EXPECT_EQ(a.pr, b.pr);
    EXPECT_EQ(a.pc, b.pc);
    EXPECT_EQ(a.captured, b.captured);
}

TEST(AlternatingSort, ColumnShuffleDoesNotChangeCapture) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 30; ++trial) {
        const auto imp = test::random_importance(10, 12, rng);
        const ImportanceMatrix shuffled(apply_permutation(imp.scores(), Permutation::identity(10), test::random_permutation(12, rng)));
        EXPECT_NEAR(alternating_sort(imp, 5, 4, 6).captured, alternating_sort(shuffled, 5, 4, 6).captured, 1e-12);
    }
}

TEST(AlternatingSort, ZeroBlockRejected) {
    const ImportanceMatrix imp(Matrix(4, 4));
    EXPECT_THROW(alternating_sort(imp, 0, 2, 6), ShapeError);
    EXPECT_THROW(alternating_sort(imp, 5, 2, 6), ShapeError);
    EXPECT_THROW(alternating_sort(imp, 2, 2, 0), ValidationError);
}

TEST(Bruteforce, FourByFour) {
    const auto plan = bruteforce_block_selection(ImportanceMatrix(test::fixture_4x4()), 2, 2);
    EXPECT_EQ(plan.captured, 6.0);
    EXPECT_EQ(plan.pr, Permutation({0, 2, 1, 3}));
    EXPECT_EQ(plan.pc, Permutation({0, 3, 1, 2}));
}

TEST(Bruteforce, UniformMatrix) {
    const ImportanceMatrix imp(Matrix(5, 6, 0.5));
    EXPECT_DOUBLE_EQ(bruteforce_block_selection(imp, 2, 3).captured, 2 * 3 * 0.5);
}

TEST(Bruteforce, BeatsRandomPlans) {
    std::mt19937_64 rng(31);
    const auto imp = test::random_importance(5, 5, rng);
    const auto best = bruteforce_block_selection(imp, 2, 2);
    for (int i = 0; i < 1000; ++i) {
        const auto pr = test::random_permutation(5, rng);
        const auto pc = test::random_permutation(5, rng);
        ASSERT_GE(best.captured + 1e-12, captured_importance(imp, pr.entries(), pc.entries(), 2, 2));
    }
}

TEST(Bruteforce, UpperBoundsHeuristicAndIsEquivariant) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 4 + rng() % 5, n = 4 + rng() % 5;
        const auto imp = test::random_importance(m, n, rng);
        const auto exact = bruteforce_block_selection(imp, 2, 3);
        EXPECT_GE(exact.captured + 1e-12, alternating_sort(imp, 2, 3, 6).captured);
        const ImportanceMatrix shuffled(apply_permutation(imp.scores(), test::random_permutation(m, rng), test::random_permutation(n, rng)));
        EXPECT_NEAR(bruteforce_block_selection(shuffled, 2, 3).captured, exact.captured, 1e-12);
    }
}

TEST(Bruteforce, TooLargeRejected) {
    const ImportanceMatrix imp(Matrix(40, 40));
    EXPECT_THROW(bruteforce_block_selection(imp, 20, 20), ValidationError);
}

TEST(ComposeResidual, IdentityPartialKeepsGlobal) {
    const PermutationPlan global{Permutation({2, 0, 1, 3}), Permutation({1, 3, 0, 2}), 5.0};
    const PermutationPlan partial{Permutation::identity(2), Permutation::identity(2), 1.0};
    const auto out = compose_residual_permutation(global, partial, 2, 2);
    EXPECT_EQ(out.pr, global.pr);
    EXPECT_EQ(out.pc, global.pc);
    EXPECT_EQ(out.captured, 6.0);
}

TEST(ComposeResidual, MatchesSequentialApplication) {
    std::mt19937_64 rng(17);
    const Matrix w = random_matrix(4, 4, rng);
    const PermutationPlan first{Permutation({3, 1, 0, 2}), Permutation({2, 0, 3, 1}), 0.0};
    const PermutationPlan second{Permutation({1, 0}), Permutation({1, 0}), 0.0};

    // Apply first, then permute only the trailing 2x2 residual by the second plan.
    const Matrix step1 = apply_permutation(w, first.pr, first.pc);
    const Matrix step2 = apply_permutation(step1, Permutation({0, 1, 3, 2}), Permutation({0, 1, 3, 2}));

    const PermutationPlan identity{Permutation::identity(4), Permutation::identity(4), 0.0};
    const auto g1 = compose_residual_permutation(identity, first, 0, 0);
    const auto g2 = compose_residual_permutation(g1, second, 2, 2);
    EXPECT_EQ(apply_permutation(w, g2.pr, g2.pc), step2);
    EXPECT_EQ(apply_permutation(apply_permutation(w, g2.pr, g2.pc), inverse_permutation(g2.pr), inverse_permutation(g2.pc)), w);
}

TEST(ComposeResidual, WrongCoverageRejected) {
    const PermutationPlan global{Permutation::identity(4), Permutation::identity(4), 0.0};
    const PermutationPlan partial{Permutation::identity(3), Permutation::identity(2), 0.0};
    EXPECT_THROW(compose_residual_permutation(global, partial, 2, 2), ValidationError);
    EXPECT_THROW(compose_residual_permutation(global, partial, 5, 2), ValidationError);
}

} // namespace
} // namespace pgb
