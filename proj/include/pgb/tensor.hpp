#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgb/errors.hpp"

namespace pgb {

/// Dense row-major matrix. Shapes are at least 1x1 and values finite.
template <typename T>
class BasicMatrix {
public:
    using value_type = T;

    BasicMatrix() = default;

    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        check_shape();
    }

    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        check_shape();
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
        if (!all_finite()) throw ValidationError("matrix contains non-finite values");
    }

    BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        check_shape();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
        if (!all_finite()) throw ValidationError("matrix contains non-finite values");
    }

    static BasicMatrix identity(std::size_t n) {
        BasicMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    BasicMatrix<U> cast() const {
        BasicMatrix<U> out(rows_, cols_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    friend bool operator==(const BasicMatrix& a, const BasicMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    void check_shape() const {
        if (rows_ == 0 || cols_ == 0) throw ShapeError("matrix dimensions must be at least 1x1");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

/// Gather permutation: entry i names the source index placed at position i.
class Permutation {
public:
    Permutation() = default;

    explicit Permutation(std::vector<std::size_t> entries) : entries_(std::move(entries)) {
        std::vector<char> seen(entries_.size(), 0);
        for (std::size_t e : entries_) {
            if (e >= entries_.size() || seen[e]) {
                throw ValidationError("permutation is not a bijection on [0, " +
                                      std::to_string(entries_.size()) + ")");
            }
            seen[e] = 1;
        }
    }

    static Permutation identity(std::size_t n) {
        std::vector<std::size_t> e(n);
        std::iota(e.begin(), e.end(), std::size_t{0});
        return Permutation(std::move(e));
    }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t operator[](std::size_t i) const noexcept { return entries_[i]; }
    std::span<const std::size_t> entries() const noexcept { return entries_; }

    bool is_identity() const noexcept {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i] != i) return false;
        return true;
    }

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::vector<std::size_t> entries_;
};

/// result[p[i]] = i.
inline Permutation inverse_permutation(const Permutation& p) {
    std::vector<std::size_t> inv(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
    return Permutation(std::move(inv));
}

/// out[i][j] = w[pr[i]][pc[j]].
template <typename T>
BasicMatrix<T> apply_permutation(const BasicMatrix<T>& w, const Permutation& pr, const Permutation& pc) {
    if (pr.size() != w.rows() || pc.size() != w.cols()) {
        throw ShapeError("permutation lengths (" + std::to_string(pr.size()) + ", " +
                         std::to_string(pc.size()) + ") do not match matrix " +
                         std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    }
    BasicMatrix<T> out(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto src = w.row(pr[i]);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) dst[j] = src[pc[j]];
    }
    return out;
}

namespace kernel {

/// c[s, :n] += a[s, :k] * b[:k, :n] over strided row-major views.
template <typename T>
inline void gemm_accumulate(std::size_t s_len, std::size_t k_len, std::size_t n_len,
                            const T* a, std::size_t lda,
                            const T* b, std::size_t ldb,
                            T* c, std::size_t ldc) noexcept {
    for (std::size_t s = 0; s < s_len; ++s) {
        const T* a_row = a + s * lda;
        T* __restrict c_row = c + s * ldc;
        for (std::size_t k = 0; k < k_len; ++k) {
            const T av = a_row[k];
            const T* __restrict b_row = b + k * ldb;
            for (std::size_t n = 0; n < n_len; ++n) c_row[n] += av * b_row[n];
        }
    }
}

} // namespace kernel

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& x, const BasicMatrix<T>& w) {
    if (x.cols() != w.rows()) {
        throw ShapeError("matmul inner dimensions differ: " + std::to_string(x.cols()) +
                         " vs " + std::to_string(w.rows()));
    }
    BasicMatrix<T> out(x.rows(), w.cols());
    kernel::gemm_accumulate(x.rows(), x.cols(), w.cols(), x.data(), x.cols(),
                            w.data(), w.cols(), out.data(), out.cols());
    return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
    BasicMatrix<T> out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

template <typename T>
double frobenius_distance(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("frobenius_distance shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

template <typename T>
double max_abs_difference(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_difference shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return m;
}

} // namespace pgb
