#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "pafnet/signal_align.hpp"
#include "pafnet/tensor.hpp"

namespace pafnet::model {

enum class Ablation { full, no_pa, no_fi, no_fd, no_pa_fi };

std::string_view to_string(Ablation ablation);
Ablation parse_ablation(std::string_view name);

struct ModelConfig {
    std::size_t M = 1;  // processes
    std::size_t T = 96; // lookback
    std::size_t H = 12; // horizon
    std::size_t K = 1;  // neighbors per target
    std::size_t F = 1;  // frequency bands
    std::size_t P = 64; // patch length
    std::size_t D = 64; // embedding width
    std::uint64_t seed = 0;
    Ablation ablation = Ablation::full;
    bool per_frequency_cross = false; // one W^c set per band instead of a shared set

    /// Throws InvalidConfig (or KTooLarge / FTooLarge) when a bound is violated.
    void validate() const;
};

/// What the forward pass actually runs once the ablation flag is applied.
struct Architecture {
    std::size_t bands = 1;        // F, forced to 1 without frequency decomposition
    bool shift_neighbors = true;  // false: neighbors keep their selection but lag 0
    bool mixed_cross = false;     // true: cross attention over all (slot, band) pairs
    std::size_t patch_count = 1;  // ceil(T / P)
    std::size_t cross_sets = 1;   // number of W^c triples
};

Architecture apply_ablation(const ModelConfig& config);

struct ModelParameters {
    Tensor patch_q; // [F x D x P]
    Tensor patch_k;
    Tensor patch_v;
    Tensor cross_q; // [C x D x D], C = F with per-frequency cross projections, else 1
    Tensor cross_k;
    Tensor cross_v;
    Tensor head_w1; // [D x D]
    Tensor head_b1; // [D]
    Tensor head_w2; // [H x D]
    Tensor head_b2; // [H]

    /// Zero-filled parameters shaped for `config`.
    static ModelParameters zeros(const ModelConfig& config);

    template <typename Fn>
    void for_each(Fn&& fn) {
        fn("patch_q", patch_q);
        fn("patch_k", patch_k);
        fn("patch_v", patch_v);
        fn("cross_q", cross_q);
        fn("cross_k", cross_k);
        fn("cross_v", cross_v);
        fn("head_w1", head_w1);
        fn("head_b1", head_b1);
        fn("head_w2", head_w2);
        fn("head_b2", head_b2);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        const_cast<ModelParameters*>(this)->for_each(
            [&](const char* name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
    }

    std::size_t count() const;
    bool all_finite() const;
    bool operator==(const ModelParameters& other) const;
};

/// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
ModelParameters initialize(const ModelConfig& config);

/// Lag-aligned [M x (K+1) x T] panel with the ablation's shift policy applied.
Tensor aligned_input(const Tensor& window, const align::NeighborPlan& plan, const ModelConfig& config);

/// Band reconstructions of every aligned series: [M x S x T] -> [M x S x F x T].
Tensor decompose_panel(const Tensor& aligned, std::size_t bands);

/// Non-overlapping patches, last one zero-padded: [M x S x F x T] -> [M x S x F x Np x P].
Tensor patchify(const Tensor& bands, std::size_t patch_length);

/// align -> band decomposition -> patchify; the non-trainable front of the network.
Tensor prepare_patches(const Tensor& window, const align::NeighborPlan& plan, const ModelConfig& config);

struct PatchAttentionOutput {
    Tensor embedding; // E, [M x S x F x D]
    Tensor weights;   // A, [M x S x F x Np x Np]
};

PatchAttentionOutput patch_attention(const Tensor& patches, const ModelParameters& params);

struct CrossAttentionOutput {
    Tensor per_band; // E_a, [M x F x D]
    Tensor pooled;   // sum over bands, [M x D]
    Tensor weights;  // [M x F x S] decoupled, [M x F x (S*F)] mixed
};

CrossAttentionOutput cross_attention(const Tensor& embedding, const ModelParameters& params,
                                     bool mixed_frequencies);

/// Shared two-layer perceptron applied per process: [M x D] -> [M x H].
Tensor head(const Tensor& pooled, const ModelParameters& params);

Tensor forward_patches(const Tensor& patches, const ModelParameters& params, const ModelConfig& config);

/// Full forward pass for one window [M x T]; returns predictions [M x H].
Tensor forward(const Tensor& window, const align::NeighborPlan& plan, const ModelParameters& params,
               const ModelConfig& config);

/// Predictions paired with ground truth, both [B x M x H].
struct ForecastBatch {
    Tensor predictions;
    Tensor targets;
};

/// Mean squared error over every entry of the batch.
double mse_loss(const ForecastBatch& batch);
double mse_loss(const Tensor& predictions, const Tensor& targets);

/// Adds `weight * dL/dtheta` of the single-window loss L = mean((y_hat - y)^2) into
/// `gradient` and returns L.
double accumulate_gradient(const Tensor& patches, const Tensor& targets, const ModelParameters& params,
                           const ModelConfig& config, ModelParameters& gradient, double weight = 1.0);

/// Gradient of the single-window MSE with respect to every parameter.
ModelParameters backward(const Tensor& window, const align::NeighborPlan& plan,
                         const ModelParameters& params, const Tensor& targets, const ModelConfig& config);

} // namespace pafnet::model
