#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "pafnet/model.hpp"
#include "pafnet/signal_align.hpp"
#include "pafnet/training.hpp"

namespace pafnet::checkpoint {

inline constexpr std::string_view kFormatTag = "pafnet-ckpt-v1";

/// Everything needed to reproduce forecasts from a trained model.
///
/// On disk: the format tag and a newline, an 8-byte little-endian header length, a JSON
/// header (config, plan indices, tensor directory), then every tensor as little-endian
/// IEEE-754 doubles in directory order.
struct Checkpoint {
    model::ModelConfig config;
    model::ModelParameters params;
    align::NeighborPlan plan;
    training::Normalizer normalizer;
    bool per_window_plan = false;
    std::size_t best_epoch = 0;
};

void write(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read(std::istream& in);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

} // namespace pafnet::checkpoint
