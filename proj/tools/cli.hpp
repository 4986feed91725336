#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pafnet/data_io.hpp"
#include "pafnet/model.hpp"
#include "pafnet/training.hpp"

namespace pafnet::cli {

enum ExitCode : int {
    kSuccess = 0,
    kInputError = 2,
    kStateError = 3,
    kNumericFailure = 4,
};

/// Fully resolved run settings; the flat dotted keys of the config file.
struct RunConfig {
    std::filesystem::path manifest;            // data.manifest
    model::ModelConfig model;                  // model.*, M comes from the data
    training::SplitSpec split;                 // split.*
    training::TrainOptions train;              // train.*
    std::size_t stride = 1;                    // train.stride
    bool per_window_alignment = false;         // align.per_window
    double eps = align::kDefaultEps;           // align.eps
    std::vector<std::size_t> grid_k{1, 2, 3, 4, 5, 6, 7};
    std::vector<std::size_t> grid_f{1, 2, 3, 4, 5};
    bool normalized_sigmoid = false;           // output.normalized_sigmoid
    std::uint64_t seed = 0;

    /// Defaults: lr 1e-3, batch 32, 100 epochs, D = P = 64.
    static RunConfig defaults();

    /// Applies every recognized key; unknown keys are an InvalidConfig error.
    void apply(const io::KeyValues& values);
    io::KeyValues to_key_values() const;

    training::ExperimentSpec experiment(std::size_t processes) const;
};

/// Runs one command line (argv[0] is the program name) and returns the process exit code.
int run(const std::vector<std::string>& args);

} // namespace pafnet::cli
