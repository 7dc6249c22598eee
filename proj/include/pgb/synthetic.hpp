#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <string>

#include "pgb/model.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

/// Seed from the PGB_SEED environment variable, else `fallback`.
inline std::uint64_t seed_from_env(std::uint64_t fallback) {
    if (const char* s = std::getenv("PGB_SEED"); s && *s) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw ValidationError(std::string("PGB_SEED is not an unsigned integer: ") + s);
        }
    }
    return fallback;
}

template <typename Rng>
Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

/// Gaussian weights scaled by 1/sqrt(fan_in) and by log-normal per-row and
/// per-column factors, so importance is unevenly spread across rows and columns
/// the way trained checkpoints tend to be.
template <typename Rng>
Matrix synthetic_weight(std::size_t rows, std::size_t cols, Rng& rng, double scale_spread = 0.75) {
    std::lognormal_distribution<double> spread(0.0, scale_spread);
    std::vector<double> row_scale(rows), col_scale(cols);
    for (double& s : row_scale) s = spread(rng);
    for (double& s : col_scale) s = spread(rng);
    Matrix m = random_matrix(rows, cols, rng, 1.0 / std::sqrt(static_cast<double>(rows)));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) *= row_scale[i] * col_scale[j];
    return m;
}

template <typename Rng>
ModelSpec synthetic_model(const ModelDims& dims, std::size_t n_layers, Rng& rng, double scale_spread = 0.75) {
    dims.validate();
    ModelSpec model{dims, std::vector<LayerWeights>(n_layers)};
    std::normal_distribution<double> bias(0.0, 0.02);
    for (auto& layer : model.layers) {
        for (Slot s : kAllSlots) {
            const auto [r, c] = dims.shape(s);
            layer[s] = synthetic_weight(r, c, rng, scale_spread);
        }
        layer.b1.resize(dims.d_ffn);
        layer.b2.resize(dims.d);
        for (double& b : layer.b1) b = bias(rng);
        for (double& b : layer.b2) b = bias(rng);
    }
    return model;
}

} // namespace pgb
