#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pgb/errors.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

/// Non-negative per-weight importance scores, shaped like the weight matrix they describe.
class ImportanceMatrix {
public:
    ImportanceMatrix() = default;

    explicit ImportanceMatrix(Matrix scores) : scores_(std::move(scores)) {
        for (double v : scores_.values()) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ValidationError("importance scores must be finite and non-negative");
            }
        }
    }

    std::size_t rows() const noexcept { return scores_.rows(); }
    std::size_t cols() const noexcept { return scores_.cols(); }
    double operator()(std::size_t r, std::size_t c) const noexcept { return scores_(r, c); }
    const Matrix& scores() const noexcept { return scores_; }

    double total() const noexcept {
        double s = 0.0;
        for (double v : scores_.values()) s += v;
        return s;
    }

private:
    Matrix scores_;
};

/// Per-matrix gradient observation used by the Fisher provider.
using GradientSample = Matrix;

enum class ImportanceProvider { Magnitude2, Fisher };

inline std::string to_string(ImportanceProvider p) {
    return p == ImportanceProvider::Fisher ? "fisher" : "magnitude2";
}

inline ImportanceProvider parse_importance_provider(const std::string& s) {
    if (s == "magnitude2") return ImportanceProvider::Magnitude2;
    if (s == "fisher") return ImportanceProvider::Fisher;
    throw ValidationError("unknown importance provider '" + s + "'");
}

/// Data-free fallback: w^2.
inline ImportanceMatrix importance_magnitude_sq(const Matrix& w) {
    Matrix s(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.size(); ++i) s.data()[i] = w.data()[i] * w.data()[i];
    return ImportanceMatrix(std::move(s));
}

/// Diagonal empirical-Fisher saliency: w^2 * mean(g^2) / 2.
inline ImportanceMatrix importance_empirical_fisher(const Matrix& w, std::span<const GradientSample> samples) {
    if (samples.empty()) throw ValidationError("empirical Fisher needs at least one gradient sample");
    Matrix mean_sq(w.rows(), w.cols());
    for (const auto& g : samples) {
        if (g.rows() != w.rows() || g.cols() != w.cols()) {
            throw ShapeError("gradient sample shape does not match weight matrix");
        }
        for (std::size_t i = 0; i < g.size(); ++i) mean_sq.data()[i] += g.data()[i] * g.data()[i];
    }
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double wi = w.data()[i];
        mean_sq.data()[i] = wi * wi * (mean_sq.data()[i] * inv_n) * 0.5;
    }
    return ImportanceMatrix(std::move(mean_sq));
}

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
};

/// Sum of scores inside the rectangle rows x cols.
inline double region_importance(const ImportanceMatrix& imp, IndexRange rows, IndexRange cols) {
    if (rows.begin > rows.end || cols.begin > cols.end || rows.end > imp.rows() || cols.end > imp.cols()) {
        throw ShapeError("region is outside the importance matrix");
    }
    double s = 0.0;
    for (std::size_t i = rows.begin; i < rows.end; ++i)
        for (std::size_t j = cols.begin; j < cols.end; ++j) s += imp(i, j);
    return s;
}

/// Ranking score of one FFN sub-layer: total importance of W1 and W2.
inline double ffn_layer_score(const ImportanceMatrix& w1, const ImportanceMatrix& w2) {
    return w1.total() + w2.total();
}

} // namespace pgb
