#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "pgb/errors.hpp"
#include "pgb/grouping.hpp"
#include "pgb/importance.hpp"
#include "pgb/infer.hpp"
#include "pgb/model.hpp"
#include "pgb/parallel.hpp"

namespace pgb {

/// Budgeted whole-model compression.
///
/// Budget C = gamma * (prunable params). Every attention matrix is grouped first and
/// its retained size charged to C; the attention phase alone overshooting C is an
/// error. FFN layers are then taken greedily by descending importance (ties: lower
/// index) while C > 0, both matrices charged; the last layer may overshoot. FFN
/// layers never selected are dropped.
inline PrunedModel pgb_compress(const ModelSpec& model, const ModelImportance& importances, const PruneConfig& cfg,
                                std::size_t threads = 0, std::string importance_id = "magnitude2") {
    model.validate();
    cfg.validate();
    if (importances.size() != model.layers.size()) throw ValidationError("importances do not cover every layer");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Slot s : kAllSlots) {
            const auto& imp = importances[l][index(s)];
            const auto& w = model.layers[l][s];
            if (imp.rows() != w.rows() || imp.cols() != w.cols()) {
                throw ShapeError("importance for " + tensor_name(l, s) + " has the wrong shape");
            }
        }
    }

    const std::size_t n_layers = model.layers.size();
    PrunedModel out;
    out.dims = model.dims;
    out.provenance = {cfg, std::move(importance_id), {}};
    out.layers.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        out.layers[l].b1 = model.layers[l].b1;
        out.layers[l].b2 = model.layers[l].b2;
    }

    double budget = cfg.gamma * static_cast<double>(model_param_count(model));

    parallel_for(n_layers * kAttentionSlots.size(), threads, [&](std::size_t task) {
        const std::size_t l = task / kAttentionSlots.size();
        const Slot s = kAttentionSlots[task % kAttentionSlots.size()];
        out.layers[l][s] = grouped_weight_pruning(model.layers[l][s], importances[l][index(s)], cfg);
    });
    for (const auto& layer : out.layers)
        for (Slot s : kAttentionSlots) budget -= static_cast<double>(param_count(layer[s]));
    if (budget < 0.0) {
        throw BudgetInfeasible("attention pruning alone exceeds the parameter budget by " +
                               std::to_string(static_cast<std::uint64_t>(-budget)) + " parameters",
                               -budget);
    }

    std::vector<double> scores(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        scores[l] = ffn_layer_score(importances[l][index(Slot::W1)], importances[l][index(Slot::W2)]);
    }
    std::vector<char> used(n_layers, 0);
    for (std::size_t l = 0; l < n_layers; ++l)
        for (Slot s : kFfnSlots) out.layers[l][s] = PruneOutcome::dropped_outcome();

    while (budget > 0.0) {
        std::size_t best = n_layers;
        for (std::size_t l = 0; l < n_layers; ++l) {
            if (!used[l] && (best == n_layers || scores[l] > scores[best])) best = l;
        }
        if (best == n_layers) break;
        used[best] = 1;
        out.provenance.ffn_selection.push_back(best);
        for (Slot s : kFfnSlots) {
            out.layers[best][s] = grouped_weight_pruning(model.layers[best][s], importances[best][index(s)], cfg);
            budget -= static_cast<double>(param_count(out.layers[best][s]));
        }
    }
    return out;
}

struct CompensationResult {
    Grouped matrix;
    double error_before = 0.0;  ///< ||X W*_pruned - X W||_F^2 before the update
    double error_after = 0.0;
    std::size_t fallbacks = 0;  ///< column groups solved with the fallback ridge
};

inline constexpr double kFallbackRidgeScale = 1e-6;

/// Ridge least-squares fit of the retained weights to a target output.
///
/// For every output column c with retained input rows R:
///   z = argmin ||X[:,R] z - Y[:,c]||^2 + lambda ||z - z0||^2,  z0 = current entries,
/// solved through the normal equations (X_R^T X_R + lambda I) z = X_R^T Y[:,c] + lambda z0.
/// Columns of one group share R, so each group factors once. When the normal matrix is
/// not positive definite the solve retries with lambda + 1e-6 * trace / |R|.
/// A column keeps z0 if roundoff would make the update raise its error.
inline CompensationResult fit_to_target(const Grouped& gm, const Matrix& x, const Matrix& y, double lambda,
                                        std::size_t threads = 0) {
    gm.validate();
    if (x.cols() != gm.orig_rows) throw ShapeError("calibration width does not match the weight rows");
    if (y.rows() != x.rows() || y.cols() != gm.orig_cols) throw ShapeError("target shape does not match the calibration output");
    if (!(lambda >= 0.0)) throw ValidationError("ridge lambda must be non-negative");

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> xe(x.data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
    const Eigen::Map<const RowMajor> ye(y.data(), static_cast<Eigen::Index>(y.rows()), static_cast<Eigen::Index>(y.cols()));
    const Eigen::MatrixXd gram = xe.transpose() * xe;
    const Eigen::MatrixXd cross = xe.transpose() * ye;

    const std::size_t br = gm.block_rows();
    const std::size_t bc = gm.block_cols();
    const auto s_len = static_cast<Eigen::Index>(x.rows());

    CompensationResult result{gm, 0.0, 0.0, 0};
    std::vector<double> before(gm.group_count, 0.0), after(gm.group_count, 0.0);
    std::vector<std::size_t> fallback(gm.group_count, 0);

    parallel_for(gm.group_count, threads, [&](std::size_t k) {
        std::vector<Eigen::Index> rows(br);
        for (std::size_t a = 0; a < br; ++a) rows[a] = static_cast<Eigen::Index>(gm.pr[k * br + a]);
        const auto nr = static_cast<Eigen::Index>(br);
        auto row_at = [&](Eigen::Index a) { return rows[static_cast<std::size_t>(a)]; };

        Eigen::MatrixXd x_r(s_len, nr);
        for (Eigen::Index a = 0; a < nr; ++a) x_r.col(a) = xe.col(row_at(a));
        Eigen::MatrixXd normal(nr, nr);
        for (Eigen::Index a = 0; a < nr; ++a)
            for (Eigen::Index b = 0; b < nr; ++b) normal(a, b) = gram(row_at(a), row_at(b));

        double ridge = lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(normal + ridge * Eigen::MatrixXd::Identity(nr, nr));
        if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
            const double tr = normal.trace() / static_cast<double>(nr);
            ridge = lambda + kFallbackRidgeScale * (tr > 0.0 ? tr : 1.0);
            llt.compute(normal + ridge * Eigen::MatrixXd::Identity(nr, nr));
            fallback[k] = 1;
        }

        auto& block = result.matrix.blocks[k];
        for (std::size_t b = 0; b < bc; ++b) {
            const auto col = static_cast<Eigen::Index>(gm.pc[k * bc + b]);
            Eigen::VectorXd z0(nr), rhs(nr);
            for (Eigen::Index a = 0; a < nr; ++a) {
                z0(a) = gm.blocks[k](static_cast<std::size_t>(a), b);
                rhs(a) = cross(row_at(a), col) + ridge * z0(a);
            }
            const Eigen::VectorXd z = llt.solve(rhs);
            const double e0 = (x_r * z0 - ye.col(col)).squaredNorm();
            const double e1 = (x_r * z - ye.col(col)).squaredNorm();
            const bool take = z.allFinite() && e1 <= e0;
            before[k] += e0;
            after[k] += take ? e1 : e0;
            if (take)
                for (Eigen::Index a = 0; a < nr; ++a) block(static_cast<std::size_t>(a), b) = z(a);
        }
    });

    for (std::size_t k = 0; k < gm.group_count; ++k) {
        result.error_before += before[k];
        result.error_after += after[k];
        result.fallbacks += fallback[k];
    }
    return result;
}

/// Reconstruction of X * W_orig from the grouped support: error ||X W* - X W_orig||_F^2.
inline CompensationResult weight_compensation(const Grouped& gm, const Matrix& w_orig, const Matrix& x, double lambda,
                                              std::size_t threads = 0) {
    if (w_orig.rows() != gm.orig_rows || w_orig.cols() != gm.orig_cols) {
        throw ShapeError("original weights do not match the grouped matrix shape");
    }
    if (x.cols() != gm.orig_rows) throw ShapeError("calibration width does not match the weight rows");
    return fit_to_target(gm, x, matmul(x, w_orig), lambda, threads);
}

struct ModelCompensationReport {
    struct Entry {
        std::size_t layer;
        Slot slot;
        double error_before;
        double error_after;
        std::size_t fallbacks;
    };
    std::vector<Entry> entries;
};

/// Compensates every grouped matrix in forward order.
///
/// Each linear is fitted on the inputs it sees in the partially compensated pruned
/// model, towards the dense model's output at the same linear. Upstream compensation
/// therefore feeds the downstream fits.
inline PrunedModel compensate_model(const PrunedModel& pruned, const ModelSpec& dense, const Matrix& calibration,
                                    double lambda, std::size_t threads = 0, ModelCompensationReport* report = nullptr) {
    if (pruned.layers.size() != dense.layers.size() || !(pruned.dims == dense.dims)) {
        throw ShapeError("pruned model structure does not match the dense model");
    }
    std::vector<LayerTrace> dense_trace;
    encoder_forward(calibration, dense, nullptr, &dense_trace);

    // Slots whose inputs are fixed once the earlier stages are final.
    constexpr std::array<std::array<Slot, 3>, 4> kStages{{{Slot::Wq, Slot::Wk, Slot::Wv},
                                                          {Slot::Wo, Slot::Wo, Slot::Wo},
                                                          {Slot::W1, Slot::W1, Slot::W1},
                                                          {Slot::W2, Slot::W2, Slot::W2}}};
    constexpr std::array<std::size_t, 4> kStageWidth{3, 1, 1, 1};

    PrunedModel out = pruned;
    Matrix h = calibration;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        auto& layer = out.layers[l];
        for (std::size_t st = 0; st < kStages.size(); ++st) {
            LayerTrace t;
            encoder_layer_forward(h, layer_view(layer, out.dims), out.dims.n_heads, nullptr, &t);
            for (std::size_t i = 0; i < kStageWidth[st]; ++i) {
                const Slot s = kStages[st][i];
                auto& o = layer[s];
                if (o.dropped()) continue;
                const Matrix& x = t.linear_inputs[index(s)];
                if (x.rows() == 0) continue;  // FFN skipped: no inputs recorded
                const Matrix target = matmul(dense_trace[l].linear_inputs[index(s)], dense.layers[l][s]);
                auto res = fit_to_target(*o.grouped, x, target, lambda, threads);
                if (report) report->entries.push_back({l, s, res.error_before, res.error_after, res.fallbacks});
                o.grouped = std::move(res.matrix);
            }
        }
        h = encoder_layer_forward(h, layer_view(layer, out.dims), out.dims.n_heads);
    }
    return out;
}

/// Same group counts and dropped set as `pruned`, but uniformly random permutations.
template <typename Rng>
PrunedModel random_grouping_baseline(const PrunedModel& pruned, const ModelSpec& dense, Rng& rng) {
    PrunedModel out = pruned;
    auto shuffled = [&](std::size_t n) {
        std::vector<std::size_t> e(n);
        std::iota(e.begin(), e.end(), std::size_t{0});
        std::shuffle(e.begin(), e.end(), rng);
        return Permutation(std::move(e));
    };
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        for (Slot s : kAllSlots) {
            auto& o = out.layers[l][s];
            if (o.dropped()) continue;
            const auto& w = dense.layers[l][s];
            o.grouped = grouped_from_plan(w, o.grouped->group_count, shuffled(w.rows()), shuffled(w.cols()));
        }
    }
    return out;
}

/// Importance for every prunable matrix. Fisher reads samples `<tensor>.grad.<k>`, k = 0, 1, ...
template <typename GradientSource>
ModelImportance compute_importances(const ModelSpec& model, ImportanceProvider provider, const GradientSource* grads) {
    ModelImportance out(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Slot s : kAllSlots) {
            const auto& w = model.layers[l][s];
            if (provider == ImportanceProvider::Magnitude2) {
                out[l][index(s)] = importance_magnitude_sq(w);
                continue;
            }
            if (!grads) throw ValidationError("the fisher importance provider needs a gradient archive");
            std::vector<GradientSample> samples;
            const std::string base = tensor_name(l, s) + ".grad.";
            for (std::size_t k = 0; grads->contains(base + std::to_string(k)); ++k) {
                samples.push_back(grads->matrix(base + std::to_string(k)));
            }
            if (samples.empty()) throw ValidationError("no gradient samples for " + tensor_name(l, s));
            out[l][index(s)] = importance_empirical_fisher(w, samples);
        }
    }
    return out;
}

} // namespace pgb
