#include "pafnet/panel.hpp"

#include <cmath>

namespace pafnet {

SeriesPanel SeriesPanel::segment(std::size_t begin, std::size_t end) const {
    if (begin > end || end > length()) {
        throw InputError("panel segment out of range");
    }
    const std::size_t m = processes();
    SeriesPanel out;
    out.values = Tensor({m, end - begin});
    for (std::size_t i = 0; i < m; ++i) {
        auto src = series(i);
        std::copy(src.begin() + begin, src.begin() + end, out.values.slice(i).begin());
    }
    out.channel_names = channel_names;
    if (!timestamps.empty()) {
        out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
    }
    out.sampling_note = sampling_note;
    return out;
}

void SeriesPanel::validate() const {
    if (values.rank() != 2 || processes() < 1 || length() < 2) {
        throw InputError("panel needs at least one process and two timestamps, got " +
                         values.shape_string());
    }
    if (channel_names.size() != processes()) {
        throw InputError("channel name count does not match process count");
    }
    for (double v : values.data()) {
        if (!std::isfinite(v)) {
            throw InputError("panel contains a non-finite value");
        }
    }
}

std::vector<std::string> default_channel_names(std::size_t count) {
    std::vector<std::string> names;
    names.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        names.push_back("p" + std::to_string(i));
    }
    return names;
}

} // namespace pafnet
