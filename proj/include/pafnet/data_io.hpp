#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pafnet/panel.hpp"
#include "pafnet/tensor.hpp"

namespace pafnet::io {

// ---------------------------------------------------------------------------
// Flat `key = value` text files (manifests, run configs). `#` starts a comment.

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in, const std::string& source = "<stream>");
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& out, const KeyValues& values);

std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::string trim(std::string_view text);

// ---------------------------------------------------------------------------
// CSV ingestion

enum class DropPolicy { error, forward_fill, drop_row };

std::string to_string(DropPolicy policy);
DropPolicy parse_drop_policy(const std::string& name);

struct DatasetManifest {
    std::filesystem::path path;
    std::optional<std::string> timestamp_column;
    std::vector<std::string> channel_columns;
    DropPolicy drop_policy = DropPolicy::forward_fill;
    std::optional<std::size_t> expected_rows;

    void validate() const;
};

/// Reads a manifest file; a relative `path` is resolved against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(std::ostream& out, const DatasetManifest& manifest);

struct LoadReport {
    std::size_t rows_read = 0;
    std::size_t cells_filled = 0;
    std::size_t rows_dropped = 0;
};

/// Loads the manifest's channels in manifest order; rows are taken as time order.
SeriesPanel load_csv(const DatasetManifest& manifest, LoadReport* report = nullptr);
SeriesPanel load_csv(std::istream& in, const DatasetManifest& manifest, LoadReport* report = nullptr);

/// Header row then one row per timestamp, values with 17 significant digits.
void write_panel_csv(std::ostream& out, const SeriesPanel& panel, const std::string& timestamp_column = "timestamp");

// ---------------------------------------------------------------------------
// Synthetic generator

struct Component {
    std::size_t process = 0;
    double frequency = 0.0; // DCT index over the full series: cos(pi f (2t+1) / 2N + phase)
    double amplitude = 1.0;
    double phase = 0.0;
};

/// target(t) += weight * source_clean(t - lag)
struct Coupling {
    std::size_t source = 0;
    std::size_t target = 0;
    std::size_t lag = 0;
    double weight = 1.0;
};

/// Stochastic AR(1) driver e(t) = ar * e(t-1) + std * n(t), part of the coupled signal.
struct Drive {
    std::size_t process = 0;
    double stddev = 0.0;
    double ar = 0.0;
};

struct SyntheticSpec {
    std::size_t processes = 1;
    std::size_t length = 2;
    std::vector<Component> components;
    std::vector<Coupling> couplings; // must form a DAG
    std::vector<Drive> drives;
    double noise_std = 0.0; // observation noise, not propagated through couplings
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticTruth {
    std::vector<Coupling> couplings;
    std::vector<Component> components;

    /// Circular lag that re-aligns `source` onto `target` in a window of length T.
    static std::size_t aligning_lag(const Coupling& c, std::size_t window_length);
};

struct SyntheticData {
    SeriesPanel panel;
    SyntheticTruth truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

SyntheticSpec parse_synthetic_spec(std::istream& in);
SyntheticSpec read_synthetic_spec(const std::filesystem::path& path);
void write_synthetic_spec(std::ostream& out, const SyntheticSpec& spec);

/// Four processes with lagged stochastic couplings (lags longer than a typical horizon).
SyntheticSpec planted_lag_preset(std::uint64_t seed, std::size_t length = 1600);

/// Four processes, each a low- and a high-frequency periodic component plus band-limited
/// stochastic drivers shared between processes in distinct frequency bands.
SyntheticSpec compound_periodicity_preset(std::uint64_t seed, std::size_t length = 1600);

// ---------------------------------------------------------------------------

/// Rows `window_start,process,h,y_true,y_pred`; tensors are [B x M x H].
void write_predictions_csv(std::ostream& out, const std::vector<std::size_t>& window_starts,
                           const Tensor& truth, const Tensor& predictions);

} // namespace pafnet::io
