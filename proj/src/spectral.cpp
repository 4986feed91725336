#include "pafnet/spectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "pafnet/errors.hpp"

namespace pafnet::spectral {

namespace {

// basis[f * T + t] = a_f cos(pi f (2t+1) / 2T)
using Basis = std::vector<double>;

std::shared_ptr<const Basis> basis_for(std::size_t length) {
    static std::mutex mutex;
    static std::map<std::size_t, std::shared_ptr<const Basis>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[length];
    if (!slot) {
        auto basis = std::make_shared<Basis>(length * length);
        const double n = static_cast<double>(length);
        for (std::size_t f = 0; f < length; ++f) {
            const double scale = dct_scale(f, length);
            for (std::size_t t = 0; t < length; ++t) {
                (*basis)[f * length + t] =
                    scale * std::cos(std::numbers::pi * static_cast<double>(f) *
                                     (2.0 * static_cast<double>(t) + 1.0) / (2.0 * n));
            }
        }
        slot = std::move(basis);
    }
    return slot;
}

double cosine(std::size_t f, std::size_t t, std::size_t length) {
    return std::cos(std::numbers::pi * static_cast<double>(f) * (2.0 * static_cast<double>(t) + 1.0) /
                    (2.0 * static_cast<double>(length)));
}

} // namespace

double dct_scale(std::size_t f, std::size_t length) {
    const double n = static_cast<double>(length);
    return f == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
}

DctSpectrum dct2(std::span<const double> x) {
    const std::size_t n = x.size();
    DctSpectrum out{std::vector<double>(n, 0.0)};
    if (n == 0) {
        return out;
    }
    const auto basis = basis_for(n);
    for (std::size_t f = 0; f < n; ++f) {
        const double* row = basis->data() + f * n;
        double acc = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            acc += row[s] * x[s];
        }
        out.coeffs[f] = acc;
    }
    return out;
}

std::vector<double> idct2(const DctSpectrum& spectrum) {
    const std::size_t n = spectrum.length();
    std::vector<double> x(n, 0.0);
    if (n == 0) {
        return x;
    }
    const auto basis = basis_for(n);
    for (std::size_t f = 0; f < n; ++f) {
        const double c = spectrum.coeffs[f];
        const double* row = basis->data() + f * n;
        for (std::size_t t = 0; t < n; ++t) {
            x[t] += c * row[t];
        }
    }
    return x;
}

DctSpectrum dct2_naive(std::span<const double> x) {
    const std::size_t n = x.size();
    DctSpectrum out{std::vector<double>(n, 0.0)};
    for (std::size_t f = 0; f < n; ++f) {
        double acc = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            acc += x[s] * cosine(f, s, n);
        }
        out.coeffs[f] = dct_scale(f, n) * acc;
    }
    return out;
}

std::vector<double> idct2_naive(const DctSpectrum& spectrum) {
    const std::size_t n = spectrum.length();
    std::vector<double> x(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::size_t f = 0; f < n; ++f) {
            acc += dct_scale(f, n) * spectrum.coeffs[f] * cosine(f, t, n);
        }
        x[t] = acc;
    }
    return x;
}

std::vector<BandRange> band_partition(std::size_t length, std::size_t bands) {
    if (bands < 1) {
        throw InvalidConfig("band_partition: need at least one band");
    }
    if (bands > length) {
        throw FTooLarge("band_partition: F = " + std::to_string(bands) + " exceeds T = " +
                        std::to_string(length));
    }
    const std::size_t base = length / bands;
    const std::size_t extra = length % bands;
    std::vector<BandRange> ranges;
    ranges.reserve(bands);
    std::size_t begin = 0;
    for (std::size_t f = 0; f < bands; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        ranges.push_back({begin, begin + size});
        begin += size;
    }
    return ranges;
}

BandDecomposition band_reconstruct(const DctSpectrum& spectrum, const std::vector<BandRange>& ranges) {
    const std::size_t n = spectrum.length();
    std::size_t expected = 0;
    for (const auto& r : ranges) {
        if (r.begin != expected || r.end <= r.begin) {
            throw RangeMismatch("band_reconstruct: ranges must be contiguous and non-empty");
        }
        expected = r.end;
    }
    if (ranges.empty() || expected != n) {
        throw RangeMismatch("band_reconstruct: ranges do not cover a length-" + std::to_string(n) +
                            " spectrum");
    }

    BandDecomposition out;
    out.length = n;
    out.ranges = ranges;
    out.values.assign(ranges.size() * n, 0.0);
    const auto basis = basis_for(n);
    for (std::size_t b = 0; b < ranges.size(); ++b) {
        double* dst = out.values.data() + b * n;
        for (std::size_t f = ranges[b].begin; f < ranges[b].end; ++f) {
            const double c = spectrum.coeffs[f];
            const double* row = basis->data() + f * n;
            for (std::size_t t = 0; t < n; ++t) {
                dst[t] += c * row[t];
            }
        }
    }
    return out;
}

void decompose_into(std::span<const double> x, std::size_t bands, std::span<double> out) {
    const auto d = band_reconstruct(dct2(x), band_partition(x.size(), bands));
    if (out.size() != d.values.size()) {
        throw ShapeMismatch("decompose_into: output buffer has the wrong size");
    }
    std::copy(d.values.begin(), d.values.end(), out.begin());
}

BandDecomposition decompose(std::span<const double> x, std::size_t bands) {
    return band_reconstruct(dct2(x), band_partition(x.size(), bands));
}

} // namespace pafnet::spectral
