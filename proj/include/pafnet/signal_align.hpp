#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "pafnet/tensor.hpp"

namespace pafnet::align {

using Complex = std::complex<double>;

/// Absolute clamp for the cross-spectrum magnitude.
inline constexpr double kDefaultEps = 1e-12;

/// Forward DFT, no normalization: X[k] = sum_t x[t] exp(-2 pi i k t / T).
std::vector<Complex> dft(std::span<const double> x);
std::vector<Complex> dft(std::span<const Complex> x);

/// Inverse DFT carrying the 1/T factor.
std::vector<Complex> inverse_dft(std::span<const Complex> spectrum);

struct PhaseCorrelogram {
    std::vector<double> values; // one entry per circular lag
    std::size_t target = 0;
    std::size_t candidate = 0;

    /// Lowest lag attaining the maximum.
    std::size_t peak_lag() const;
    double peak() const;
};

/// Amplitude-normalized circular cross-correlation of x_j against x_i.
///
/// The arg-max is the lag tau for which x_j[(t + tau) mod T] best matches x_i[t],
/// i.e. the shift that align() consumes directly.
PhaseCorrelogram phase_correlation(std::span<const double> x_i, std::span<const double> x_j,
                                   double eps = kDefaultEps);

/// Per-target neighbor indices, circular lags and peak scores.
struct NeighborPlan {
    std::size_t processes = 0;
    std::size_t neighbors_per_target = 0; // K
    std::size_t length = 0;               // series length the lags are defined against
    std::vector<std::size_t> neighbors;   // [M x K]
    std::vector<std::size_t> lags;        // [M x K], in [0, length)
    std::vector<double> scores;           // [M x K], non-increasing per row

    std::size_t neighbor(std::size_t target, std::size_t rank) const {
        return neighbors[target * neighbors_per_target + rank];
    }
    std::size_t lag(std::size_t target, std::size_t rank) const {
        return lags[target * neighbors_per_target + rank];
    }
    double score(std::size_t target, std::size_t rank) const {
        return scores[target * neighbors_per_target + rank];
    }

    bool operator==(const NeighborPlan&) const = default;
};

/// Top-K neighbors for every target from the phase-correlation peaks.
///
/// `panel` is [M x T]. Ties are broken by lower candidate index, then lower lag.
NeighborPlan select_neighbors(const Tensor& panel, std::size_t K, double eps = kDefaultEps);

/// Re-expresses the lags of a plan computed over a longer series for windows of
/// length `window_length`. Lags are read as signed offsets in (-length/2, length/2]
/// and wrapped modulo the window length.
NeighborPlan rebase(const NeighborPlan& plan, std::size_t window_length);

/// Same neighbors with every lag set to zero.
NeighborPlan without_shifts(const NeighborPlan& plan);

/// Lag-aligned panel [M x (K+1) x T]; slot 0 is the target itself.
Tensor align(const Tensor& window, const NeighborPlan& plan);

/// CSV with header `target,rank,neighbor,lag,score`.
void write_plan_csv(std::ostream& out, const NeighborPlan& plan);

} // namespace pafnet::align
