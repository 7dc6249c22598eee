#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pgb {
namespace {

TEST(PgbLinear, SingleGroupMatchesDense) {
    std::mt19937_64 rng(1);
    const Matrix w = random_matrix(6, 5, rng);
    const Matrix x = random_matrix(4, 6, rng);
    const auto gm = grouped_from_plan(w, 1, Permutation::identity(6), Permutation::identity(5));
    EXPECT_LE(max_abs_difference(pgb_linear(x, gm), test::naive_matmul(x, w)), 1e-12);
}

TEST(PgbLinear, FourByFourIdentityInputGivesRepermutedDense) {
    const Matrix w = test::fixture_4x4();
    PruneConfig cfg;
    cfg.tau = 0.5;
    const auto out = grouped_weight_pruning(w, ImportanceMatrix(w), cfg);
    EXPECT_EQ(pgb_linear(Matrix::identity(4), *out.grouped), repermute_dense(*out.grouped).values);
}

TEST(PgbLinear, Wide768MatchesMaskedDenseAndCountsMacs) {
    std::mt19937_64 rng(2);
    const Matrix w = random_matrix(768, 768, rng);
    const Matrix x = random_matrix(128, 768, rng);
    const auto gm = grouped_from_plan(w, 6, test::random_permutation(768, rng), test::random_permutation(768, rng));
    MacCounter counter;
    const Matrix y = pgb_linear(x, gm, &counter);
    EXPECT_EQ(counter.macs, 128u * 768 * 768 / 6);
    EXPECT_LE(max_abs_difference(y, test::naive_matmul(x, repermute_dense(gm).values)), 1e-4);
}

TEST(PgbLinear, RandomShapesMatchMaskedDense) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> bounded(-10.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t g = 1 + rng() % 6;
        const std::size_t m = g * (1 + rng() % 8), n = g * (1 + rng() % 8), s = 1 + rng() % 9;
        const Matrix w = random_matrix(m, n, rng);
        Matrix x(s, m);
        for (double& v : x.values()) v = bounded(rng);
        const auto gm = grouped_from_plan(w, g, test::random_permutation(m, rng), test::random_permutation(n, rng));
        MacCounter c;
        EXPECT_LE(max_abs_difference(pgb_linear(x, gm, &c), test::naive_matmul(x, repermute_dense(gm).values)), 1e-4);
        EXPECT_EQ(c.macs * g, s * m * n);
    }
}

TEST(PgbLinear, FloatStorageMatchesDoubleOracle) {
    std::mt19937_64 rng(4);
    const Matrix w = random_matrix(12, 18, rng);
    const Matrix x = random_matrix(5, 12, rng);
    const auto gm = grouped_from_plan(w, 3, test::random_permutation(12, rng), test::random_permutation(18, rng));
    const auto yf = pgb_linear(x.cast<float>(), gm.cast<float>());
    EXPECT_LE(max_abs_difference(yf.cast<double>(), pgb_linear(x, gm)), 1e-4);
}

TEST(PgbLinear, WidthMismatchThrows) {
    const auto gm = grouped_from_plan(Matrix(4, 4, 1.0), 2, Permutation::identity(4), Permutation::identity(4));
    EXPECT_THROW(pgb_linear(Matrix(2, 3), gm), ShapeError);
}

LayerWeights layer_of(const ModelDims& dims, std::mt19937_64& rng) {
    LayerWeights lw;
    for (Slot s : kAllSlots) {
        const auto [r, c] = dims.shape(s);
        lw[s] = random_matrix(r, c, rng, 0.5);
    }
    std::normal_distribution<double> n(0.0, 0.1);
    lw.b1.resize(dims.d_ffn);
    lw.b2.resize(dims.d);
    for (double& b : lw.b1) b = n(rng);
    for (double& b : lw.b2) b = n(rng);
    return lw;
}

TEST(Mha, ZeroQueryKeyGivesUniformAttention) {
    std::mt19937_64 rng(5);
    const ModelDims dims{4, 8, 1};
    auto lw = layer_of(dims, rng);
    lw[Slot::Wq] = Matrix(4, 4);
    lw[Slot::Wk] = Matrix(4, 4);
    const Matrix x = random_matrix(3, 4, rng);
    const Matrix vo = test::naive_matmul(test::naive_matmul(x, lw[Slot::Wv]), lw[Slot::Wo]);
    const Matrix out = mha_forward(x, lw, dims);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out(i, c), (vo(0, c) + vo(1, c) + vo(2, c)) / 3.0, 1e-12);
}

// Per-head attention written out directly: sum_h softmax(Q_h K_h^T / sqrt(dh)) V_h W^O_h.
Matrix naive_mha(const Matrix& x, const LayerWeights& lw, std::size_t heads) {
    const std::size_t d = lw[Slot::Wq].cols(), dh = d / heads, s = x.rows();
    const Matrix q = test::naive_matmul(x, lw[Slot::Wq]);
    const Matrix k = test::naive_matmul(x, lw[Slot::Wk]);
    const Matrix v = test::naive_matmul(x, lw[Slot::Wv]);
    Matrix out(s, d);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < s; ++i) {
            std::vector<double> p(s);
            double z = 0.0;
            for (std::size_t j = 0; j < s; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
                p[j] = std::exp(dot / std::sqrt(double(dh)));
                z += p[j];
            }
            for (std::size_t o = 0; o < d; ++o) {
                double acc = 0.0;
                for (std::size_t j = 0; j < s; ++j)
                    for (std::size_t c = 0; c < dh; ++c) acc += p[j] / z * v(j, h * dh + c) * lw[Slot::Wo](h * dh + c, o);
                out(i, o) += acc;
            }
        }
    }
    return out;
}

TEST(Mha, TwoHeadsMatchNaiveOracle) {
    std::mt19937_64 rng(6);
    const ModelDims dims{8, 16, 2};
    const auto lw = layer_of(dims, rng);
    const Matrix x = random_matrix(4, 8, rng);
    EXPECT_LE(max_abs_difference(mha_forward(x, lw, dims), naive_mha(x, lw, 2)), 1e-6);
}

TEST(Mha, HeadCountMustDivideWidth) {
    std::mt19937_64 rng(7);
    const ModelDims dims{6, 8, 4};
    const auto lw = layer_of(ModelDims{6, 8, 1}, rng);
    EXPECT_THROW(mha_forward(Matrix(2, 6), lw, dims), ShapeError);
}

PrunedLayer keep_all(const LayerWeights& lw, const ModelDims& dims) {
    PrunedLayer pl;
    for (Slot s : kAllSlots) {
        const auto [r, c] = dims.shape(s);
        pl[s] = PruneOutcome{grouped_from_plan(lw[s], 1, Permutation::identity(r), Permutation::identity(c))};
    }
    pl.b1 = lw.b1;
    pl.b2 = lw.b2;
    return pl;
}

TEST(Mha, SingleGroupPrunedLayerMatchesDense) {
    std::mt19937_64 rng(8);
    const ModelDims dims{8, 16, 2};
    const auto lw = layer_of(dims, rng);
    const Matrix x = random_matrix(5, 8, rng);
    EXPECT_LE(max_abs_difference(mha_forward(x, keep_all(lw, dims), dims), mha_forward(x, lw, dims)), 1e-6);
}

TEST(Ffn, ZeroWeightsGiveZero) {
    const ModelDims dims{4, 6, 1};
    LayerWeights lw;
    for (Slot s : kAllSlots) lw[s] = Matrix(dims.shape(s).first, dims.shape(s).second);
    lw.b1.assign(6, 0.0);
    lw.b2.assign(4, 0.0);
    std::mt19937_64 rng(9);
    const Matrix out = ffn_forward(random_matrix(3, 4, rng), lw, dims);
    for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Ffn, LargePositiveInputsAreNearlyLinear) {
    const ModelDims dims{3, 3, 1};
    std::mt19937_64 rng(10);
    LayerWeights lw;
    lw[Slot::W1] = Matrix::identity(3);
    for (double& v : lw[Slot::W1].values()) v *= 2.0;
    lw[Slot::W2] = random_matrix(3, 3, rng);
    lw.b1.assign(3, 0.0);
    lw.b2 = {0.1, -0.2, 0.3};
    Matrix a(2, 3);
    std::uniform_real_distribution<double> u(5.0, 8.0);
    for (double& v : a.values()) v = u(rng);
    Matrix expected = test::naive_matmul(test::naive_matmul(a, lw[Slot::W1]), lw[Slot::W2]);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) expected(r, c) += lw.b2[c];
    EXPECT_LE(max_abs_difference(ffn_forward(a, lw, dims), expected), 1e-6);
}

TEST(Ffn, GroupedMatchesMaskedDense) {
    std::mt19937_64 rng(11);
    const ModelDims dims{8, 16, 2};
    const auto lw = layer_of(dims, rng);
    PrunedLayer pl = keep_all(lw, dims);
    LayerWeights masked = lw;
    for (Slot s : kFfnSlots) {
        const auto [r, c] = dims.shape(s);
        const auto gm = grouped_from_plan(lw[s], 2, test::random_permutation(r, rng), test::random_permutation(c, rng));
        pl[s] = PruneOutcome{gm};
        masked[s] = repermute_dense(gm).values;
    }
    const Matrix a = random_matrix(4, 8, rng);
    EXPECT_LE(max_abs_difference(ffn_forward(a, pl, dims), ffn_forward(a, masked, dims)), 1e-5);
}

TEST(Ffn, DroppedFfnIsIdentity) {
    std::mt19937_64 rng(12);
    const ModelDims dims{8, 16, 2};
    PrunedLayer pl = keep_all(layer_of(dims, rng), dims);
    pl[Slot::W1] = PruneOutcome::dropped_outcome();
    pl[Slot::W2] = PruneOutcome::dropped_outcome();
    const Matrix a = random_matrix(3, 8, rng);
    EXPECT_EQ(ffn_forward(a, pl, dims), a);
}

TEST(Gelu, ExactErfForm) {
    EXPECT_EQ(gelu(0.0), 0.0);
    EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
    EXPECT_NEAR(gelu(-1.0), -0.15865525393145707, 1e-15);
    // The tanh approximation stays within 1e-3 of the exact form.
    for (double x = -4.0; x <= 4.0; x += 0.25) {
        const double approx = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
        EXPECT_NEAR(gelu(x), approx, 1e-3);
    }
}

TEST(Encoder, KeepEverythingMatchesDense) {
    const auto model = test::toy_model(13);
    PruneConfig cfg;
    cfg.gamma = 1.0;
    cfg.tau = 0.0;
    const auto pruned = pgb_compress(model, compute_importances<TensorArchive>(model, ImportanceProvider::Magnitude2, nullptr), cfg);
    std::mt19937_64 rng(14);
    const Matrix x = random_matrix(10, 32, rng);
    EXPECT_LE(max_abs_difference(encoder_forward(x, pruned), encoder_forward(x, model)), 1e-5);
    EXPECT_LE(output_discrepancy(x, model, pruned), 1e-5);
    EXPECT_EQ(output_discrepancy(x, model, model), 0.0);
}

TEST(Encoder, AllFfnDroppedEqualsAttentionOnlyStack) {
    const auto model = test::toy_model(15);
    PrunedModel pruned;
    pruned.dims = model.dims;
    for (const auto& lw : model.layers) {
        PrunedLayer pl = keep_all(lw, model.dims);
        pl[Slot::W1] = PruneOutcome::dropped_outcome();
        pl[Slot::W2] = PruneOutcome::dropped_outcome();
        pruned.layers.push_back(pl);
    }
    std::mt19937_64 rng(16);
    const Matrix x = random_matrix(6, 32, rng);
    Matrix h = x;
    for (const auto& lw : model.layers) {
        Matrix sum = naive_mha(h, lw, model.dims.n_heads);
        for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += h.data()[i];
        // Row-wise standardisation written out longhand.
        for (std::size_t r = 0; r < sum.rows(); ++r) {
            double mean = 0.0, var = 0.0;
            for (std::size_t c = 0; c < sum.cols(); ++c) mean += sum(r, c) / double(sum.cols());
            for (std::size_t c = 0; c < sum.cols(); ++c) var += (sum(r, c) - mean) * (sum(r, c) - mean) / double(sum.cols());
            for (std::size_t c = 0; c < sum.cols(); ++c) sum(r, c) = (sum(r, c) - mean) / std::sqrt(var + 1e-12);
        }
        h = sum;
    }
    EXPECT_LE(max_abs_difference(encoder_forward(x, pruned), h), 1e-8);
}

TEST(Encoder, DeterministicAndCountsMacs) {
    const auto model = test::toy_model(17);
    std::mt19937_64 rng(18);
    const Matrix x = random_matrix(7, 32, rng);
    MacCounter c;
    EXPECT_EQ(encoder_forward(x, model, &c), encoder_forward(x, model));
    EXPECT_EQ(c.macs, model_flops(model, 7));
    EXPECT_THROW(encoder_forward(Matrix(2, 31), model), ShapeError);
}

} // namespace
} // namespace pgb
