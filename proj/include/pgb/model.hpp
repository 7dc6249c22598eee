#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pgb/errors.hpp"
#include "pgb/grouping.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

/// The six prunable matrices of one encoder layer.
enum class Slot : std::size_t { Wq = 0, Wk, Wv, Wo, W1, W2 };

inline constexpr std::size_t kSlotCount = 6;
inline constexpr std::array<Slot, kSlotCount> kAllSlots{Slot::Wq, Slot::Wk, Slot::Wv, Slot::Wo, Slot::W1, Slot::W2};
inline constexpr std::array<Slot, 4> kAttentionSlots{Slot::Wq, Slot::Wk, Slot::Wv, Slot::Wo};
inline constexpr std::array<Slot, 2> kFfnSlots{Slot::W1, Slot::W2};
inline constexpr std::array<std::string_view, kSlotCount> kSlotNames{"Wq", "Wk", "Wv", "Wo", "W1", "W2"};

constexpr std::size_t index(Slot s) noexcept { return static_cast<std::size_t>(s); }
constexpr std::string_view slot_name(Slot s) noexcept { return kSlotNames[index(s)]; }

inline std::string tensor_name(std::size_t layer, Slot s) {
    return "layer" + std::to_string(layer) + "." + std::string(slot_name(s));
}

struct ModelDims {
    std::size_t d = 0;
    std::size_t d_ffn = 0;
    std::size_t n_heads = 0;

    /// (rows, cols) of a slot: d x d for attention, d x d_ffn and d_ffn x d for the FFN.
    std::pair<std::size_t, std::size_t> shape(Slot s) const noexcept {
        switch (s) {
        case Slot::W1: return {d, d_ffn};
        case Slot::W2: return {d_ffn, d};
        default: return {d, d};
        }
    }

    void validate() const {
        if (d == 0 || d_ffn == 0 || n_heads == 0) throw ValidationError("model dimensions must be positive");
        if (d % n_heads != 0) throw ShapeError("d is not divisible by the number of heads");
    }

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct LayerWeights {
    std::array<Matrix, kSlotCount> w;
    std::vector<double> b1;  ///< d_ffn
    std::vector<double> b2;  ///< d

    Matrix& operator[](Slot s) noexcept { return w[index(s)]; }
    const Matrix& operator[](Slot s) const noexcept { return w[index(s)]; }
};

struct ModelSpec {
    ModelDims dims;
    std::vector<LayerWeights> layers;

    void validate() const {
        dims.validate();
        if (layers.empty()) throw ValidationError("model has no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (Slot s : kAllSlots) {
                const auto [r, c] = dims.shape(s);
                if (layers[l][s].rows() != r || layers[l][s].cols() != c) {
                    throw ShapeError(tensor_name(l, s) + " has the wrong shape");
                }
            }
            if (layers[l].b1.size() != dims.d_ffn || layers[l].b2.size() != dims.d) {
                throw ShapeError("layer" + std::to_string(l) + " bias lengths are wrong");
            }
        }
    }
};

struct PrunedLayer {
    std::array<PruneOutcome, kSlotCount> slots;
    std::vector<double> b1;
    std::vector<double> b2;

    PruneOutcome& operator[](Slot s) noexcept { return slots[index(s)]; }
    const PruneOutcome& operator[](Slot s) const noexcept { return slots[index(s)]; }

    /// With both FFN matrices dropped the FFN sub-layer is skipped entirely.
    bool ffn_skipped() const noexcept { return (*this)[Slot::W1].dropped() && (*this)[Slot::W2].dropped(); }
};

struct Provenance {
    PruneConfig config;
    std::string importance = "magnitude2";
    std::vector<std::size_t> ffn_selection;  ///< FFN layers in the order they were taken
};

struct PrunedModel {
    ModelDims dims;
    std::vector<PrunedLayer> layers;
    Provenance provenance;

    void validate() const {
        dims.validate();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (Slot s : kAllSlots) {
                const auto& o = layers[l][s];
                if (o.dropped()) continue;
                o.grouped->validate();
                const auto [r, c] = dims.shape(s);
                if (o.grouped->orig_rows != r || o.grouped->orig_cols != c) {
                    throw ShapeError(tensor_name(l, s) + " has the wrong original shape");
                }
            }
            if (layers[l].b1.size() != dims.d_ffn || layers[l].b2.size() != dims.d) {
                throw ShapeError("layer" + std::to_string(l) + " bias lengths are wrong");
            }
        }
    }
};

/// Prunable weight count (weight matrices only; biases excluded).
inline std::uint64_t model_param_count(const ModelSpec& m) {
    std::uint64_t total = 0;
    for (std::size_t l = 0; l < m.layers.size(); ++l)
        for (Slot s : kAllSlots) total += m.layers[l][s].size();
    return total;
}

inline std::uint64_t model_param_count(const PrunedModel& m) {
    std::uint64_t total = 0;
    for (const auto& layer : m.layers)
        for (const auto& o : layer.slots) total += param_count(o);
    return total;
}

/// Multiply-accumulates of every linear at sequence length S: S*M*N/G per matrix.
inline std::uint64_t model_flops(const ModelSpec& m, std::uint64_t seq_len) {
    return seq_len * model_param_count(m);
}

inline std::uint64_t model_flops(const PrunedModel& m, std::uint64_t seq_len) {
    return seq_len * model_param_count(m);
}

/// Per-matrix importance, indexed [layer][slot].
using ModelImportance = std::vector<std::array<ImportanceMatrix, kSlotCount>>;

} // namespace pgb
