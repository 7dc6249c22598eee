#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "pgb/errors.hpp"
#include "pgb/grouping.hpp"
#include "pgb/model.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

/// Counts multiply-accumulates issued by the linear kernels.
struct MacCounter {
    std::uint64_t macs = 0;
};

/// Grouped linear: X * W* computed with the G diagonal blocks only.
///
/// The input is gathered by the row permutation (X's width contracts with W's rows),
/// each width slice multiplies its block, and the concatenated output is scattered
/// back through the column permutation. Costs S*M*N/G MACs.
template <typename T>
BasicMatrix<T> pgb_linear(const BasicMatrix<T>& x, const GroupedMatrix<T>& gm, MacCounter* counter = nullptr) {
    if (x.cols() != gm.orig_rows) {
        throw ShapeError("input width " + std::to_string(x.cols()) + " does not match grouped matrix rows " +
                         std::to_string(gm.orig_rows));
    }
    const std::size_t s_len = x.rows();
    const std::size_t m = gm.orig_rows;
    const std::size_t n = gm.orig_cols;
    const std::size_t br = gm.block_rows();
    const std::size_t bc = gm.block_cols();

    BasicMatrix<T> xg(s_len, m);
    for (std::size_t s = 0; s < s_len; ++s) {
        const auto src = x.row(s);
        auto dst = xg.row(s);
        for (std::size_t i = 0; i < m; ++i) dst[i] = src[gm.pr[i]];
    }

    BasicMatrix<T> grouped_out(s_len, n);
    for (std::size_t k = 0; k < gm.group_count; ++k) {
        kernel::gemm_accumulate(s_len, br, bc, xg.data() + k * br, m, gm.blocks[k].data(), bc,
                                grouped_out.data() + k * bc, n);
        if (counter) counter->macs += static_cast<std::uint64_t>(s_len) * br * bc;
    }

    BasicMatrix<T> out(s_len, n);
    for (std::size_t s = 0; s < s_len; ++s) {
        const auto src = grouped_out.row(s);
        auto dst = out.row(s);
        for (std::size_t j = 0; j < n; ++j) dst[gm.pc[j]] = src[j];
    }
    return out;
}

template <typename T>
BasicMatrix<T> dense_linear(const BasicMatrix<T>& x, const BasicMatrix<T>& w, MacCounter* counter = nullptr) {
    auto out = matmul(x, w);
    if (counter) counter->macs += static_cast<std::uint64_t>(x.rows()) * w.rows() * w.cols();
    return out;
}

/// Non-owning handle on one linear: dense weights, a prune outcome, or nothing (zero map).
struct LinearView {
    const Matrix* dense = nullptr;
    const PruneOutcome* pruned = nullptr;
    std::size_t in = 0;
    std::size_t out = 0;

    Matrix apply(const Matrix& x, MacCounter* counter = nullptr) const {
        if (x.cols() != in) throw ShapeError("linear input width mismatch");
        if (dense) return dense_linear(x, *dense, counter);
        if (pruned && pruned->grouped) return pgb_linear(x, *pruned->grouped, counter);
        return Matrix(x.rows(), out);
    }
};

struct LayerView {
    std::array<LinearView, kSlotCount> linear;
    const std::vector<double>* b1 = nullptr;
    const std::vector<double>* b2 = nullptr;
    bool ffn_skip = false;

    const LinearView& operator[](Slot s) const noexcept { return linear[index(s)]; }
};

inline LayerView layer_view(const LayerWeights& lw, const ModelDims& dims) {
    LayerView v;
    for (Slot s : kAllSlots) {
        const auto [r, c] = dims.shape(s);
        v.linear[index(s)] = LinearView{&lw[s], nullptr, r, c};
    }
    v.b1 = &lw.b1;
    v.b2 = &lw.b2;
    return v;
}

inline LayerView layer_view(const PrunedLayer& pl, const ModelDims& dims) {
    LayerView v;
    for (Slot s : kAllSlots) {
        const auto [r, c] = dims.shape(s);
        v.linear[index(s)] = LinearView{nullptr, &pl[s], r, c};
    }
    v.b1 = &pl.b1;
    v.b2 = &pl.b2;
    v.ffn_skip = pl.ffn_skipped();
    return v;
}

/// Inputs seen by each linear of a layer, plus the layer output.
struct LayerTrace {
    std::array<Matrix, kSlotCount> linear_inputs;
    Matrix output;
};

inline void softmax_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline constexpr double kLayerNormEps = 1e-12;

/// Parameter-free layer norm over each row.
inline Matrix layer_norm(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const double n = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < x.cols(); ++c) dst[c] = (row[c] - mean) * inv;
    }
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

/// Multi-head self-attention: softmax(Q_h K_h^T / sqrt(d_h)) V_h per head, heads
/// concatenated and projected by W^O (equivalently, the sum of per-head projections).
inline Matrix mha_forward(const Matrix& x, const LayerView& layer, std::size_t n_heads,
                          MacCounter* counter = nullptr, LayerTrace* trace = nullptr) {
    const std::size_t d = layer[Slot::Wq].out;
    if (n_heads == 0 || d % n_heads != 0) throw ShapeError("head count does not divide the model width");
    const std::size_t dh = d / n_heads;
    const std::size_t s_len = x.rows();

    const Matrix q = layer[Slot::Wq].apply(x, counter);
    const Matrix k = layer[Slot::Wk].apply(x, counter);
    const Matrix v = layer[Slot::Wv].apply(x, counter);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix context(s_len, d);
    Matrix scores(s_len, s_len);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < s_len; ++i) {
            for (std::size_t j = 0; j < s_len; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dot += q(i, off + c) * k(j, off + c);
                scores(i, j) = dot * scale;
            }
        }
        softmax_rows(scores);
        for (std::size_t i = 0; i < s_len; ++i)
            for (std::size_t j = 0; j < s_len; ++j) {
                const double p = scores(i, j);
                for (std::size_t c = 0; c < dh; ++c) context(i, off + c) += p * v(j, off + c);
            }
    }

    if (trace) {
        for (Slot s : {Slot::Wq, Slot::Wk, Slot::Wv}) trace->linear_inputs[index(s)] = x;
        trace->linear_inputs[index(Slot::Wo)] = context;
    }
    return layer[Slot::Wo].apply(context, counter);
}

inline Matrix mha_forward(const Matrix& x, const LayerWeights& lw, const ModelDims& dims) {
    return mha_forward(x, layer_view(lw, dims), dims.n_heads);
}

inline Matrix mha_forward(const Matrix& x, const PrunedLayer& pl, const ModelDims& dims) {
    return mha_forward(x, layer_view(pl, dims), dims.n_heads);
}

/// GeLU(A W1 + b1) W2 + b2; a skipped FFN returns A unchanged.
inline Matrix ffn_forward(const Matrix& a, const LayerView& layer, MacCounter* counter = nullptr,
                          LayerTrace* trace = nullptr) {
    if (layer.ffn_skip) return a;
    Matrix hidden = layer[Slot::W1].apply(a, counter);
    if (layer.b1->size() != hidden.cols() || layer.b2->size() != layer[Slot::W2].out) {
        throw ShapeError("FFN bias length mismatch");
    }
    for (std::size_t r = 0; r < hidden.rows(); ++r) {
        auto row = hidden.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = gelu(row[c] + (*layer.b1)[c]);
    }
    Matrix out = layer[Slot::W2].apply(hidden, counter);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += (*layer.b2)[c];
    }
    if (trace) {
        trace->linear_inputs[index(Slot::W1)] = a;
        trace->linear_inputs[index(Slot::W2)] = std::move(hidden);
    }
    return out;
}

inline Matrix ffn_forward(const Matrix& a, const LayerWeights& lw, const ModelDims& dims) {
    return ffn_forward(a, layer_view(lw, dims));
}

inline Matrix ffn_forward(const Matrix& a, const PrunedLayer& pl, const ModelDims& dims) {
    return ffn_forward(a, layer_view(pl, dims));
}

/// One post-norm encoder layer: A = LN(X + MHA(X)); out = LN(A + FFN(A)), or A when the FFN is skipped.
inline Matrix encoder_layer_forward(const Matrix& x, const LayerView& layer, std::size_t n_heads,
                                    MacCounter* counter = nullptr, LayerTrace* trace = nullptr) {
    const Matrix a = layer_norm(add(x, mha_forward(x, layer, n_heads, counter, trace)));
    Matrix out = layer.ffn_skip ? a : layer_norm(add(a, ffn_forward(a, layer, counter, trace)));
    if (trace) trace->output = out;
    return out;
}

template <typename Model>
Matrix encoder_forward(const Matrix& x, const Model& model, MacCounter* counter = nullptr,
                       std::vector<LayerTrace>* trace = nullptr) {
    if (x.cols() != model.dims.d) throw ShapeError("input width does not match the model width");
    if (trace) trace->assign(model.layers.size(), LayerTrace{});
    Matrix h = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        h = encoder_layer_forward(h, layer_view(model.layers[l], model.dims), model.dims.n_heads, counter,
                                  trace ? &(*trace)[l] : nullptr);
    }
    return h;
}

/// ||F(X; dense) - F(X; pruned)|| (Frobenius).
template <typename ModelA, typename ModelB>
double output_discrepancy(const Matrix& x, const ModelA& reference, const ModelB& candidate) {
    return frobenius_distance(encoder_forward(x, reference), encoder_forward(x, candidate));
}

} // namespace pgb
