#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleddg/tensor.hpp"

namespace styleddg {

// Default variance guard inside sqrt for sigma used in normalization.
// Checks of the raw statistics are run with eps_var = 0.
inline constexpr double kEpsVar = 1e-5;

// Per-instance per-channel spatial mean and standard deviation.
struct InstanceStats {
    int batch = 0;
    int channels = 0;
    std::vector<double> mu;     // batch*channels, row-major [b][c]
    std::vector<double> sigma;  // same layout, >= 0

    double mu_at(int b, int c) const { return mu[static_cast<std::size_t>(b) * channels + c]; }
    double sigma_at(int b, int c) const {
        return sigma[static_cast<std::size_t>(b) * channels + c];
    }
};

// mu[b,c] = spatial mean, sigma[b,c] = sqrt(spatial population variance + eps_var)
InstanceStats instance_stats(const Tensor4& x, double eps_var = kEpsVar);

// Per-channel population variance across the batch of mu and sigma (divisor B).
struct SecondOrderStats {
    std::vector<double> var_mu;     // channels
    std::vector<double> var_sigma;  // channels
};
SecondOrderStats second_order_stats(const InstanceStats& s);

// One hooked layer's slice of the shareable style vector.
struct StyleLayerSlice {
    std::vector<double> mu_bar;     // channels
    std::vector<double> sigma_bar;  // channels
    std::vector<double> var_mu;     // channels; >= 0
    std::vector<double> var_sigma;  // channels; >= 0

    int channels() const { return static_cast<int>(mu_bar.size()); }
};

// The object exchanged between neighbors: four per-channel statistics per
// hooked layer, always detached data in the receiver's graph.
struct StyleVector {
    std::vector<StyleLayerSlice> layers;

    int layer_count() const { return static_cast<int>(layers.size()); }
    int scalar_count() const;

    // flat little-endian doubles in layer order, each layer ordered
    // (mu_bar, sigma_bar, var_mu, var_sigma), preceded by a uint32 header
    // of (L, C_1..C_L)
    std::vector<std::uint8_t> serialize() const;
    static StyleVector deserialize(const std::vector<std::uint8_t>& bytes);
    std::size_t byte_size() const;
};

// Batch-level style statistics of captured activations: mu_bar/sigma_bar are
// batch averages of the instance stats, var_* their across-batch variances.
StyleLayerSlice layer_style_slice(const Tensor4& activation, double eps_var = kEpsVar);

// Bound check report on a style vector given per-layer activation bounds
// U_l = max |activation| observed on the same batch.
struct Lemma1Report {
    struct Layer {
        bool pass = true;
        double margin_mu = 0.0;     // U - max|mu_bar|
        double margin_sigma = 0.0;  // sqrt(2)*U - max|sigma_bar|
    };
    std::vector<Layer> layers;
    bool all_pass = true;
};
Lemma1Report check_lemma1_bounds(const StyleVector& sv, const std::vector<double>& u_per_layer);

}  // namespace styleddg
