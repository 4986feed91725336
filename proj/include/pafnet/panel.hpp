#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pafnet/tensor.hpp"

namespace pafnet {

/// Multivariate quality series: one row per process, one column per timestamp.
struct SeriesPanel {
    Tensor values; // [M x T_total]
    std::vector<std::string> channel_names;
    std::vector<std::string> timestamps; // optional, empty when the source had none
    std::string sampling_note;

    std::size_t processes() const { return values.rank() == 2 ? values.dim(0) : 0; }
    std::size_t length() const { return values.rank() == 2 ? values.dim(1) : 0; }

    std::span<const double> series(std::size_t process) const { return values.slice(process); }
    std::span<double> series(std::size_t process) { return values.slice(process); }

    /// Columns [begin, end) as a new panel; timestamps are carried along when present.
    SeriesPanel segment(std::size_t begin, std::size_t end) const;

    /// Throws InputError unless M >= 1, T >= 2 and every value is finite.
    void validate() const;
};

/// Default channel names "p0", "p1", ...
std::vector<std::string> default_channel_names(std::size_t count);

} // namespace pafnet
