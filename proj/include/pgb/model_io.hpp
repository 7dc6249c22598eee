#pragma once

// Model <-> .pgbt mapping.
//
// Dense:  "model": {"kind": "dense", d, d_ffn, n_heads, n_layers}
//         layer<i>.{Wq,Wk,Wv,Wo,W1,W2} (2-D), layer<i>.{b1,b2} (1-D)
// Pruned: "model": {"kind": "pruned", ...}, "provenance": {...}
//         grouped tensor: blocks stacked vertically, shape [M, N/G], plus
//           "group": {"G", "block": [M/G, N/G], "orig_shape": [M, N], "pr": [...], "pc": [...]}
//         dropped tensor: shape [0], "dropped": true, "orig_shape": [M, N]

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pgb/archive.hpp"
#include "pgb/grouping.hpp"
#include "pgb/model.hpp"

namespace pgb {

inline constexpr int kReportSchema = 1;

inline json dims_json(const ModelDims& dims, std::size_t n_layers, const char* kind) {
    return {{"kind", kind}, {"d", dims.d}, {"d_ffn", dims.d_ffn}, {"n_heads", dims.n_heads}, {"n_layers", n_layers}};
}

inline std::pair<ModelDims, std::size_t> read_dims(const TensorArchive& a, const char* kind) {
    const auto& meta = a.meta();
    if (!meta.contains("model") || !meta["model"].is_object()) throw FormatError("archive has no 'model' block");
    const auto& m = meta["model"];
    try {
        if (m.at("kind").get<std::string>() != kind) {
            throw FormatError(std::string("archive is not a ") + kind + " model");
        }
        ModelDims dims{m.at("d").get<std::size_t>(), m.at("d_ffn").get<std::size_t>(), m.at("n_heads").get<std::size_t>()};
        return {dims, m.at("n_layers").get<std::size_t>()};
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed 'model' block: ") + e.what());
    }
}

inline TensorArchive to_archive(const ModelSpec& model) {
    model.validate();
    TensorArchive a;
    a.meta()["model"] = dims_json(model.dims, model.layers.size(), "dense");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Slot s : kAllSlots) a.add_matrix(tensor_name(l, s), model.layers[l][s]);
        a.add_vector<double>("layer" + std::to_string(l) + ".b1", model.layers[l].b1);
        a.add_vector<double>("layer" + std::to_string(l) + ".b2", model.layers[l].b2);
    }
    return a;
}

inline ModelSpec model_from_archive(const TensorArchive& a) {
    const auto [dims, n_layers] = read_dims(a, "dense");
    ModelSpec model{dims, std::vector<LayerWeights>(n_layers)};
    for (std::size_t l = 0; l < n_layers; ++l) {
        for (Slot s : kAllSlots) model.layers[l][s] = a.matrix(tensor_name(l, s));
        model.layers[l].b1 = a.vector("layer" + std::to_string(l) + ".b1");
        model.layers[l].b2 = a.vector("layer" + std::to_string(l) + ".b2");
    }
    model.validate();
    return model;
}

inline json provenance_json(const PrunedModel& m) {
    const auto& cfg = m.provenance.config;
    json layers = json::array();
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        json entry{{"index", l}, {"ffn_skipped", m.layers[l].ffn_skipped()}};
        for (Slot s : kAllSlots) {
            const auto& o = m.layers[l][s];
            entry[std::string(slot_name(s))] = o.dropped() ? json("dropped") : json(o.group_count());
        }
        layers.push_back(std::move(entry));
    }
    return {{"schema", kReportSchema},
            {"gamma", cfg.gamma},
            {"tau", cfg.tau},
            {"g_max", cfg.g_max},
            {"n_perm", cfg.n_perm},
            {"lambda", cfg.ridge_lambda},
            {"importance", m.provenance.importance},
            {"ffn_selection", m.provenance.ffn_selection},
            {"layers", std::move(layers)}};
}

inline TensorArchive to_archive(const PrunedModel& model) {
    model.validate();
    TensorArchive a;
    a.meta()["model"] = dims_json(model.dims, model.layers.size(), "pruned");
    a.meta()["provenance"] = provenance_json(model);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Slot s : kAllSlots) {
            const auto& o = model.layers[l][s];
            const auto [rows, cols] = model.dims.shape(s);
            if (o.dropped()) {
                a.add_tombstone(tensor_name(l, s), {{"orig_shape", {rows, cols}}});
                continue;
            }
            const auto& gm = *o.grouped;
            std::vector<float> stacked;
            stacked.reserve(gm.param_count());
            for (const auto& b : gm.blocks)
                for (double v : b.values()) stacked.push_back(static_cast<float>(v));
            json group{{"G", gm.group_count},
                       {"block", {gm.block_rows(), gm.block_cols()}},
                       {"orig_shape", {gm.orig_rows, gm.orig_cols}},
                       {"pr", std::vector<std::size_t>(gm.pr.entries().begin(), gm.pr.entries().end())},
                       {"pc", std::vector<std::size_t>(gm.pc.entries().begin(), gm.pc.entries().end())}};
            a.add(tensor_name(l, s), {gm.orig_rows, gm.block_cols()}, stacked, {{"group", std::move(group)}});
        }
        a.add_vector<double>("layer" + std::to_string(l) + ".b1", model.layers[l].b1);
        a.add_vector<double>("layer" + std::to_string(l) + ".b2", model.layers[l].b2);
    }
    return a;
}

/// Decodes one grouped tensor entry; permutation and shape problems name the tensor.
inline Grouped grouped_from_entry(const TensorArchive& a, const TensorEntry& e) {
    const auto& g = e.extra.at("group");
    Grouped gm;
    try {
        gm.group_count = g.at("G").get<std::size_t>();
        const auto orig = g.at("orig_shape").get<std::vector<std::size_t>>();
        if (orig.size() != 2) throw FormatError("orig_shape must have two entries");
        gm.orig_rows = orig[0];
        gm.orig_cols = orig[1];
        gm.pr = Permutation(g.at("pr").get<std::vector<std::size_t>>());
        gm.pc = Permutation(g.at("pc").get<std::vector<std::size_t>>());
    } catch (const json::exception& ex) {
        throw FormatError("tensor '" + e.name + "': malformed group metadata: " + ex.what());
    } catch (const ValidationError& ex) {
        throw ValidationError("tensor '" + e.name + "': " + ex.what());
    }
    if (gm.group_count == 0 || gm.orig_rows % gm.group_count || gm.orig_cols % gm.group_count) {
        throw ValidationError("tensor '" + e.name + "': group count does not divide the original shape");
    }
    const std::size_t br = gm.block_rows();
    const std::size_t bc = gm.block_cols();
    if (e.shape != std::vector<std::uint64_t>{gm.orig_rows, bc}) {
        throw ValidationError("tensor '" + e.name + "': stored shape does not match its group metadata");
    }
    const auto v = a.values(e);
    for (std::size_t k = 0; k < gm.group_count; ++k) {
        std::vector<double> block(v.begin() + static_cast<std::ptrdiff_t>(k * br * bc),
                                  v.begin() + static_cast<std::ptrdiff_t>((k + 1) * br * bc));
        gm.blocks.emplace_back(br, bc, std::move(block));
    }
    try {
        gm.validate();
    } catch (const ValidationError& ex) {
        throw ValidationError("tensor '" + e.name + "': " + ex.what());
    }
    return gm;
}

inline PrunedModel pruned_from_archive(const TensorArchive& a) {
    const auto [dims, n_layers] = read_dims(a, "pruned");
    PrunedModel model{dims, std::vector<PrunedLayer>(n_layers), {}};
    if (a.meta().contains("provenance")) {
        const auto& p = a.meta()["provenance"];
        try {
            model.provenance.config.gamma = p.at("gamma").get<double>();
            model.provenance.config.tau = p.at("tau").get<double>();
            model.provenance.config.g_max = p.at("g_max").get<std::size_t>();
            model.provenance.config.n_perm = p.at("n_perm").get<std::size_t>();
            model.provenance.config.ridge_lambda = p.at("lambda").get<double>();
            model.provenance.importance = p.at("importance").get<std::string>();
            model.provenance.ffn_selection = p.at("ffn_selection").get<std::vector<std::size_t>>();
        } catch (const json::exception& e) {
            throw FormatError(std::string("malformed provenance block: ") + e.what());
        }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        for (Slot s : kAllSlots) {
            const auto& e = a.at(tensor_name(l, s));
            if (e.extra.value("dropped", false)) {
                model.layers[l][s] = PruneOutcome::dropped_outcome();
            } else if (e.extra.contains("group")) {
                model.layers[l][s] = PruneOutcome{grouped_from_entry(a, e)};
            } else {
                throw FormatError("tensor '" + e.name + "' has neither group metadata nor a dropped marker");
            }
        }
        model.layers[l].b1 = a.vector("layer" + std::to_string(l) + ".b1");
        model.layers[l].b2 = a.vector("layer" + std::to_string(l) + ".b2");
    }
    model.validate();
    return model;
}

} // namespace pgb
