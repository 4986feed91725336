#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pafnet::spectral {

/// Orthonormal DCT-II coefficients of a length-T series (all T of them).
struct DctSpectrum {
    std::vector<double> coeffs;

    std::size_t length() const { return coeffs.size(); }
};

/// Orthonormal scale factor: sqrt(1/T) for f = 0, sqrt(2/T) otherwise.
double dct_scale(std::size_t f, std::size_t length);

/// coeffs[f] = a_f * sum_s x[s] cos(pi f (2s+1) / 2T). Uses a cached cosine table.
DctSpectrum dct2(std::span<const double> x);

/// Inverse (orthonormal DCT-III): x[t] = sum_f a_f coeffs[f] cos(pi f (2t+1) / 2T).
std::vector<double> idct2(const DctSpectrum& spectrum);

// Reference versions evaluating every cosine directly, O(T^2).
DctSpectrum dct2_naive(std::span<const double> x);
std::vector<double> idct2_naive(const DctSpectrum& spectrum);

/// Half-open range of coefficient indices [begin, end).
struct BandRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const BandRange&) const = default;
};

/// F contiguous disjoint ranges covering [0, T); sizes differ by at most one and the
/// remainder goes to the lowest-frequency bands.
std::vector<BandRange> band_partition(std::size_t length, std::size_t bands);

/// Per-band time-domain reconstructions; their sum is the original series.
struct BandDecomposition {
    std::size_t length = 0;
    std::vector<BandRange> ranges;
    std::vector<double> values; // [F x T]

    std::size_t band_count() const { return ranges.size(); }
    std::span<const double> band(std::size_t f) const {
        return std::span<const double>(values).subspan(f * length, length);
    }
};

BandDecomposition band_reconstruct(const DctSpectrum& spectrum, const std::vector<BandRange>& ranges);

/// dct2 -> band_partition -> band_reconstruct, writing [F x T] into `out`.
void decompose_into(std::span<const double> x, std::size_t bands, std::span<double> out);

BandDecomposition decompose(std::span<const double> x, std::size_t bands);

} // namespace pafnet::spectral
