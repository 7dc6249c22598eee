#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgb/errors.hpp"
#include "pgb/importance.hpp"
#include "pgb/permute.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

struct PruneConfig {
    double gamma = 0.5;        ///< kept fraction of prunable parameters, in (0, 1]
    double tau = 1e-5;         ///< importance threshold for n_tau
    std::size_t g_max = 6;
    std::size_t n_perm = 6;    ///< (column, row) sort rounds
    double ridge_lambda = 0.0; ///< compensation ridge strength

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
        if (!(tau >= 0.0)) throw ValidationError("tau must be non-negative");
        if (g_max < 1) throw ValidationError("g_max must be at least 1");
        if (n_perm < 1) throw ValidationError("n_perm must be at least 1");
        if (!(ridge_lambda >= 0.0)) throw ValidationError("ridge lambda must be non-negative");
    }
};

/// A matrix reduced to G diagonal blocks after row/column permutation.
///
/// Block k holds the entries at permuted rows [k*M/G, (k+1)*M/G) and permuted columns
/// [k*N/G, (k+1)*N/G); permuted (i, j) is original (pr[i], pc[j]).
template <typename T>
struct GroupedMatrix {
    std::size_t orig_rows = 0;
    std::size_t orig_cols = 0;
    std::size_t group_count = 0;
    std::vector<BasicMatrix<T>> blocks;
    Permutation pr;
    Permutation pc;

    std::size_t block_rows() const noexcept { return orig_rows / group_count; }
    std::size_t block_cols() const noexcept { return orig_cols / group_count; }
    std::size_t param_count() const noexcept { return orig_rows * orig_cols / group_count; }

    void validate() const {
        if (group_count == 0 || orig_rows % group_count != 0 || orig_cols % group_count != 0) {
            throw ValidationError("group count " + std::to_string(group_count) + " does not divide " +
                                  std::to_string(orig_rows) + "x" + std::to_string(orig_cols));
        }
        if (blocks.size() != group_count) throw ValidationError("block count differs from group count");
        for (const auto& b : blocks) {
            if (b.rows() != block_rows() || b.cols() != block_cols()) {
                throw ValidationError("block shape differs from (M/G)x(N/G)");
            }
        }
        if (pr.size() != orig_rows || pc.size() != orig_cols) {
            throw ValidationError("permutation lengths differ from the original shape");
        }
    }

    template <typename U>
    GroupedMatrix<U> cast() const {
        GroupedMatrix<U> out{orig_rows, orig_cols, group_count, {}, pr, pc};
        out.blocks.reserve(blocks.size());
        for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
        return out;
    }
};

using Grouped = GroupedMatrix<double>;

/// Result of pruning one matrix: grouped, or removed entirely.
struct PruneOutcome {
    std::optional<Grouped> grouped;

    static PruneOutcome dropped_outcome() { return {}; }
    bool dropped() const noexcept { return !grouped.has_value(); }
    std::size_t group_count() const noexcept { return grouped ? grouped->group_count : 0; }
};

/// Adaptive group number; 0 means drop the whole matrix.
///
/// n_tau = #{score > tau}. Drop when n_tau = 0 or M*N/n_tau > g_max, otherwise the
/// largest G <= min(g_max, floor(M*N/n_tau)) dividing both M and N.
inline std::size_t determine_group_count(const ImportanceMatrix& imp, double tau, std::size_t g_max) {
    if (!(tau >= 0.0)) throw ValidationError("tau must be non-negative");
    if (g_max < 1) throw ValidationError("g_max must be at least 1");
    std::uint64_t n_tau = 0;
    for (double v : imp.scores().values())
        if (v > tau) ++n_tau;
    const std::uint64_t m = imp.rows();
    const std::uint64_t n = imp.cols();
    if (n_tau == 0 || m * n > static_cast<std::uint64_t>(g_max) * n_tau) return 0;
    std::size_t g = static_cast<std::size_t>(std::min<std::uint64_t>(g_max, m * n / n_tau));
    while (g > 1 && (m % g != 0 || n % g != 0)) --g;
    return g;
}

/// Cuts the diagonal blocks out of `w` arranged by (pr, pc).
template <typename T>
GroupedMatrix<T> grouped_from_plan(const BasicMatrix<T>& w, std::size_t group_count, Permutation pr, Permutation pc) {
    GroupedMatrix<T> gm{w.rows(), w.cols(), group_count, {}, std::move(pr), std::move(pc)};
    if (group_count == 0 || w.rows() % group_count != 0 || w.cols() % group_count != 0) {
        throw ShapeError("group count must divide both matrix dimensions");
    }
    if (gm.pr.size() != w.rows() || gm.pc.size() != w.cols()) throw ShapeError("permutation length mismatch");
    const std::size_t br = gm.block_rows();
    const std::size_t bc = gm.block_cols();
    gm.blocks.reserve(group_count);
    for (std::size_t k = 0; k < group_count; ++k) {
        BasicMatrix<T> block(br, bc);
        for (std::size_t a = 0; a < br; ++a)
            for (std::size_t b = 0; b < bc; ++b) block(a, b) = w(gm.pr[k * br + a], gm.pc[k * bc + b]);
        gm.blocks.push_back(std::move(block));
    }
    return gm;
}

/// Importance retained by the grouped support.
template <typename T>
double captured_importance(const GroupedMatrix<T>& gm, const ImportanceMatrix& imp) {
    const std::size_t br = gm.block_rows();
    const std::size_t bc = gm.block_cols();
    double s = 0.0;
    for (std::size_t k = 0; k < gm.group_count; ++k)
        for (std::size_t a = 0; a < br; ++a)
            for (std::size_t b = 0; b < bc; ++b) s += imp(gm.pr[k * br + a], gm.pc[k * bc + b]);
    return s;
}

/// Permute, extract the top-left block, shrink the residual; G times.
///
/// The residual is re-planned every iteration with the fixed (M/G)x(N/G) block size.
/// Inside each extracted group and inside the residual, indices are kept in ascending
/// original order; that ordering does not affect which weights are captured.
inline PruneOutcome grouped_weight_pruning(const Matrix& w, const ImportanceMatrix& imp, const PruneConfig& cfg) {
    if (w.rows() != imp.rows() || w.cols() != imp.cols()) {
        throw ShapeError("importance shape does not match weight matrix");
    }
    const std::size_t g = determine_group_count(imp, cfg.tau, cfg.g_max);
    if (g == 0) return PruneOutcome::dropped_outcome();

    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    const std::size_t br = m / g;
    const std::size_t bc = n / g;

    PermutationPlan global{Permutation::identity(m), Permutation::identity(n), 0.0};
    for (std::size_t k = 0; k + 1 < g; ++k) {
        const std::size_t off_r = k * br;
        const std::size_t off_c = k * bc;
        Matrix residual(m - off_r, n - off_c);
        for (std::size_t i = off_r; i < m; ++i)
            for (std::size_t j = off_c; j < n; ++j) residual(i - off_r, j - off_c) = imp(global.pr[i], global.pc[j]);

        const auto partial = alternating_sort(ImportanceMatrix(std::move(residual)), br, bc, cfg.n_perm);
        global = compose_residual_permutation(global, partial, off_r, off_c);

        auto canonical = [](const Permutation& p, std::size_t begin, std::size_t mid) {
            std::vector<std::size_t> e(p.entries().begin(), p.entries().end());
            std::sort(e.begin() + static_cast<std::ptrdiff_t>(begin), e.begin() + static_cast<std::ptrdiff_t>(mid));
            std::sort(e.begin() + static_cast<std::ptrdiff_t>(mid), e.end());
            return Permutation(std::move(e));
        };
        global.pr = canonical(global.pr, off_r, off_r + br);
        global.pc = canonical(global.pc, off_c, off_c + bc);
    }
    auto grouped = grouped_from_plan(w, g, std::move(global.pr), std::move(global.pc));
    if (g == 1) return {std::move(grouped)};

    // Greedy extraction can lose to the unpermuted split on small inputs; keep whichever captures more.
    auto plain = grouped_from_plan(w, g, Permutation::identity(m), Permutation::identity(n));
    if (captured_importance(plain, imp) > captured_importance(grouped, imp)) return {std::move(plain)};
    return {std::move(grouped)};
}

/// Dense matrix with an explicit support mask (mask[i*cols + j] != 0 where retained).
template <typename T>
struct MaskedMatrix {
    BasicMatrix<T> values;
    std::vector<std::uint8_t> mask;

    std::size_t retained() const {
        return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    }
};

/// Puts every block entry back at its original (row, col); everything else is zero.
template <typename T>
MaskedMatrix<T> repermute_dense(const GroupedMatrix<T>& gm) {
    gm.validate();
    MaskedMatrix<T> out{BasicMatrix<T>(gm.orig_rows, gm.orig_cols), std::vector<std::uint8_t>(gm.orig_rows * gm.orig_cols, 0)};
    const std::size_t br = gm.block_rows();
    const std::size_t bc = gm.block_cols();
    for (std::size_t k = 0; k < gm.group_count; ++k) {
        for (std::size_t a = 0; a < br; ++a) {
            const std::size_t r = gm.pr[k * br + a];
            for (std::size_t b = 0; b < bc; ++b) {
                const std::size_t c = gm.pc[k * bc + b];
                out.values(r, c) = gm.blocks[k](a, b);
                out.mask[r * gm.orig_cols + c] = 1;
            }
        }
    }
    return out;
}

inline std::size_t param_count(const PruneOutcome& o) noexcept {
    return o.grouped ? o.grouped->param_count() : 0;
}

} // namespace pgb
