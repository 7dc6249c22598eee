#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "pgb/errors.hpp"
#include "pgb/importance.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

/// Row/column arrangement and the importance it places in the top-left block.
struct PermutationPlan {
    Permutation pr;
    Permutation pc;
    double captured = 0.0;
};

/// Importance inside the top-left block_rows x block_cols block of I permuted by (pr, pc).
inline double captured_importance(const ImportanceMatrix& imp, std::span<const std::size_t> pr,
                                  std::span<const std::size_t> pc, std::size_t block_rows,
                                  std::size_t block_cols) {
    // Summed in ascending index order so equal selections give bit-identical totals.
    std::vector<std::size_t> rows(pr.begin(), pr.begin() + static_cast<std::ptrdiff_t>(block_rows));
    std::vector<std::size_t> cols(pc.begin(), pc.begin() + static_cast<std::ptrdiff_t>(block_cols));
    std::sort(rows.begin(), rows.end());
    std::sort(cols.begin(), cols.end());
    double s = 0.0;
    for (std::size_t r : rows)
        for (std::size_t c : cols) s += imp(r, c);
    return s;
}

namespace detail {

inline void check_block(const ImportanceMatrix& imp, std::size_t block_rows, std::size_t block_cols) {
    if (block_rows == 0 || block_cols == 0) throw ShapeError("block must be at least 1x1");
    if (block_rows > imp.rows() || block_cols > imp.cols()) {
        throw ShapeError("block " + std::to_string(block_rows) + "x" + std::to_string(block_cols) +
                         " exceeds matrix " + std::to_string(imp.rows()) + "x" + std::to_string(imp.cols()));
    }
}

/// Stable descending reorder of `order` by keys[position].
inline void stable_sort_desc(std::vector<std::size_t>& order, const std::vector<double>& keys) {
    std::vector<std::size_t> pos(order.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
    std::vector<std::size_t> next(order.size());
    for (std::size_t i = 0; i < pos.size(); ++i) next[i] = order[pos[i]];
    order.swap(next);
}

} // namespace detail

/// Called after every individual sort step with the capture reached so far.
using SortStepObserver = std::function<void(double captured)>;

/// Alternating-sort heuristic for concentrating importance in the top-left block.
///
/// Starting from the identity, each round first stably sorts columns by their score
/// sum over the current top `block_rows` rows, then stably sorts rows by their sum
/// over the current left `block_cols` columns (both descending). `n_perm` rounds.
/// Each step maximises the block sum along one axis with the other fixed, so the
/// capture never decreases.
inline PermutationPlan alternating_sort(const ImportanceMatrix& imp, std::size_t block_rows,
                                        std::size_t block_cols, std::size_t n_perm,
                                        const SortStepObserver& observer = {}) {
    detail::check_block(imp, block_rows, block_cols);
    if (n_perm == 0) throw ValidationError("n_perm must be at least 1");

    const std::size_t m = imp.rows();
    const std::size_t n = imp.cols();
    std::vector<std::size_t> pr(m), pc(n);
    std::iota(pr.begin(), pr.end(), std::size_t{0});
    std::iota(pc.begin(), pc.end(), std::size_t{0});

    std::vector<double> col_keys(n), row_keys(m);
    for (std::size_t round = 0; round < n_perm; ++round) {
        std::fill(col_keys.begin(), col_keys.end(), 0.0);
        for (std::size_t i = 0; i < block_rows; ++i) {
            const std::size_t r = pr[i];
            for (std::size_t j = 0; j < n; ++j) col_keys[j] += imp(r, pc[j]);
        }
        detail::stable_sort_desc(pc, col_keys);
        if (observer) observer(captured_importance(imp, pr, pc, block_rows, block_cols));

        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < block_cols; ++j) s += imp(pr[i], pc[j]);
            row_keys[i] = s;
        }
        detail::stable_sort_desc(pr, row_keys);
        if (observer) observer(captured_importance(imp, pr, pc, block_rows, block_cols));
    }

    const double captured = captured_importance(imp, pr, pc, block_rows, block_cols);
    return {Permutation(std::move(pr)), Permutation(std::move(pc)), captured};
}

inline constexpr double kBruteforceLimit = 1e6;

/// Exhaustive search over row and column subsets; exact maximiser of the block sum.
/// Selected indices come first (ascending), then the rest (ascending).
inline PermutationPlan bruteforce_block_selection(const ImportanceMatrix& imp, std::size_t block_rows,
                                                  std::size_t block_cols) {
    detail::check_block(imp, block_rows, block_cols);
    const std::size_t m = imp.rows();
    const std::size_t n = imp.cols();

    auto binom = [](std::size_t a, std::size_t b) {
        double r = 1.0;
        for (std::size_t i = 1; i <= b; ++i) r = r * static_cast<double>(a - b + i) / static_cast<double>(i);
        return r;
    };
    if (binom(m, block_rows) * binom(n, block_cols) > kBruteforceLimit) {
        throw ValidationError("instance too large for exhaustive block selection");
    }

    // Advances to the next k-subset in lexicographic order.
    auto next_combination = [](std::vector<std::size_t>& c, std::size_t total) {
        const std::size_t k = c.size();
        std::size_t i = k;
        while (i > 0) {
            --i;
            if (c[i] != i + total - k) {
                ++c[i];
                for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
                return true;
            }
        }
        return false;
    };

    std::vector<std::size_t> rows(block_rows), best_rows, best_cols;
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    double best = -1.0;
    do {
        std::vector<std::size_t> cols(block_cols);
        std::iota(cols.begin(), cols.end(), std::size_t{0});
        do {
            double s = 0.0;
            for (std::size_t r : rows)
                for (std::size_t c : cols) s += imp(r, c);
            if (s > best) {
                best = s;
                best_rows = rows;
                best_cols = cols;
            }
        } while (next_combination(cols, n));
    } while (next_combination(rows, m));

    auto arrange = [](const std::vector<std::size_t>& chosen, std::size_t total) {
        std::vector<std::size_t> out(chosen);
        std::vector<char> used(total, 0);
        for (std::size_t c : chosen) used[c] = 1;
        for (std::size_t i = 0; i < total; ++i)
            if (!used[i]) out.push_back(i);
        return Permutation(std::move(out));
    };
    return {arrange(best_rows, m), arrange(best_cols, n), best};
}

/// Folds a plan computed on the residual sub-matrix (indices >= offsets) into the
/// global plan. The prefix before the offsets stays fixed; `captured` accumulates.
inline PermutationPlan compose_residual_permutation(const PermutationPlan& global, const PermutationPlan& partial,
                                                    std::size_t offset_r, std::size_t offset_c) {
    if (offset_r > global.pr.size() || offset_c > global.pc.size() ||
        partial.pr.size() != global.pr.size() - offset_r || partial.pc.size() != global.pc.size() - offset_c) {
        throw ValidationError("residual plan does not cover exactly the unfixed index range");
    }
    std::vector<std::size_t> pr(global.pr.entries().begin(), global.pr.entries().end());
    std::vector<std::size_t> pc(global.pc.entries().begin(), global.pc.entries().end());
    for (std::size_t i = 0; i < partial.pr.size(); ++i) pr[offset_r + i] = global.pr[offset_r + partial.pr[i]];
    for (std::size_t j = 0; j < partial.pc.size(); ++j) pc[offset_c + j] = global.pc[offset_c + partial.pc[j]];
    return {Permutation(std::move(pr)), Permutation(std::move(pc)), global.captured + partial.captured};
}

} // namespace pgb
