#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pafnet/model.hpp"
#include "pafnet/panel.hpp"
#include "pafnet/signal_align.hpp"
#include "pafnet/tensor.hpp"

namespace pafnet::training {

// ---------------------------------------------------------------------------
// Splits and windows

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    void validate() const;
};

struct Segments {
    SeriesPanel train;
    SeriesPanel val;
    SeriesPanel test;
    std::size_t val_offset = 0;  // absolute start of the validation segment
    std::size_t test_offset = 0; // absolute start of the test segment
};

/// Contiguous chronological split with lengths floor(train*N), floor(val*N) and the
/// remainder. Throws TooShort when the training segment cannot hold one T+H window.
Segments chronological_split(const SeriesPanel& panel, const SplitSpec& spec, std::size_t lookback,
                             std::size_t horizon);

struct WindowDataset {
    Tensor inputs;                   // [B x M x T]
    Tensor targets;                  // [B x M x H]
    std::vector<std::size_t> starts; // window start within the segment
    std::size_t stride = 1;

    std::size_t size() const { return starts.size(); }
    Tensor input(std::size_t b) const;
    Tensor target(std::size_t b) const;
};

/// B = floor((len - T - H) / stride) + 1 windows over a [M x len] segment.
WindowDataset make_windows(const Tensor& segment, std::size_t lookback, std::size_t horizon,
                           std::size_t stride = 1);

// ---------------------------------------------------------------------------
// Normalization

class Normalizer {
public:
    static constexpr double kStdFloor = 1e-8;

    Normalizer() = default;
    Normalizer(std::vector<double> mean, std::vector<double> stddev);

    /// Per-channel mean and population standard deviation of a [M x N] segment.
    static Normalizer fit(const Tensor& train_segment);

    /// z = (x - mean) / std along the channel axis (`channel_axis` of `values`).
    Tensor apply(const Tensor& values, std::size_t channel_axis = 0) const;
    Tensor invert(const Tensor& values, std::size_t channel_axis = 0) const;

    double invert_value(double z, std::size_t channel) const { return z * stddev_[channel] + mean_[channel]; }

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return stddev_; }
    std::size_t channels() const { return mean_.size(); }

    bool operator==(const Normalizer&) const = default;

private:
    Tensor map(const Tensor& values, std::size_t channel_axis, bool forward) const;

    std::vector<double> mean_;
    std::vector<double> stddev_;
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over a flat list of parameter vectors.
class Adam {
public:
    Adam() = default;
    Adam(AdamOptions options, const std::vector<std::size_t>& sizes);

    /// In-place update of every parameter block from its gradient block.
    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads);

    AdamOptions& options() { return options_; }
    const AdamOptions& options() const { return options_; }
    std::size_t steps() const { return step_; }
    const std::vector<std::vector<double>>& first_moment() const { return m_; }
    const std::vector<std::vector<double>>& second_moment() const { return v_; }

private:
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
    double lr = 1e-3;
    std::size_t batch = 32;
    std::size_t epochs = 100;
    bool lr_plateau = false;         // halve lr after `plateau_patience` epochs without improvement
    std::size_t plateau_patience = 10;
    std::uint64_t seed = 0;          // batch shuffling
};

/// Windows pushed through the fixed (non-trainable) front of the network.
struct EncodedSplit {
    std::vector<Tensor> patches; // one [M x S x F x Np x P] per window
    Tensor targets;              // [B x M x H]

    std::size_t size() const { return patches.size(); }
};

/// Encodes every window with the given plan. A plan whose length differs from the
/// lookback is rebased first; with `per_window` a fresh plan is selected on each window.
EncodedSplit encode(const WindowDataset& windows, const align::NeighborPlan& plan,
                    const model::ModelConfig& config, bool per_window = false,
                    double eps = align::kDefaultEps);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainState {
    model::ModelParameters params;
    Adam adam;
    std::size_t step = 0;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;
    model::ModelParameters best_params;
    std::mt19937_64 rng;
    std::vector<EpochRecord> history;
};

/// Adam training with per-epoch shuffling and a snapshot at the best validation MSE.
/// `on_epoch`, when set, is called after each epoch.
TrainState train(const model::ModelConfig& config, const TrainOptions& options, const EncodedSplit& train_set,
                 const EncodedSplit& val_set,
                 const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Initializes parameters and runs `steps` Adam steps on full batches of `train_set`.
TrainState train_steps(const model::ModelConfig& config, const TrainOptions& options,
                       const EncodedSplit& train_set, std::size_t steps);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> mse_per_horizon;
    std::vector<double> mae_per_horizon;
};

/// MSE/MAE over all (window, process, step) entries; shapes [B x M x H].
Metrics compute_metrics(const Tensor& predictions, const Tensor& targets);

Tensor predict(const model::ModelParameters& params, const model::ModelConfig& config, const EncodedSplit& split);

Metrics evaluate(const model::ModelParameters& params, const model::ModelConfig& config, const EncodedSplit& split);

// ---------------------------------------------------------------------------
// Reference forecasters

/// Repeats the last observed value of every channel over the horizon.
Tensor persistence_forecast(const WindowDataset& windows, std::size_t horizon);

/// Per-channel least-squares map from the lookback window (plus intercept) to the horizon.
class LinearRegressionBaseline {
public:
    static LinearRegressionBaseline fit(const WindowDataset& train, double ridge = 1e-6);
    Tensor predict(const WindowDataset& windows) const;

private:
    std::size_t lookback_ = 0;
    std::size_t horizon_ = 0;
    std::vector<std::vector<double>> weights_; // per channel [(T+1) x H]
};

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentSpec {
    model::ModelConfig model;
    TrainOptions train;
    SplitSpec split;
    std::size_t stride = 1;
    bool per_window_plan = false;
    double eps = align::kDefaultEps;
};

/// Normalizer and plan fitted on the training split only, plus normalized windows.
struct PreparedData {
    Normalizer normalizer;
    align::NeighborPlan plan; // over the full training segment
    WindowDataset train;
    WindowDataset val;
    WindowDataset test;
    std::size_t val_offset = 0;
    std::size_t test_offset = 0;
};

PreparedData prepare_data(const SeriesPanel& panel, const ExperimentSpec& spec);

/// Neighbor plan for K computed from the normalized training windows' source segment.
align::NeighborPlan training_plan(const Tensor& normalized_train, std::size_t K, double eps);

struct ExperimentResult {
    TrainState state;
    Metrics val;
    Metrics test;
    double wall_seconds = 0.0;
};

ExperimentResult run_experiment(const PreparedData& data, const ExperimentSpec& spec,
                                const std::function<void(const EpochRecord&)>& on_epoch = {});

struct ResultRow {
    std::string label;
    std::size_t K = 0;
    std::size_t F = 0;
    std::size_t H = 0;
    std::optional<double> val_mse;
    std::optional<double> test_mse;
    std::optional<double> test_mae;
    std::size_t epochs_run = 0;
    double wall_seconds = 0.0;
    std::string note; // why a row has no metrics
};

/// One model per (K, F) cell; cells with K > M-1 or F > T are skipped with a note.
std::vector<ResultRow> grid_search(const SeriesPanel& panel, const ExperimentSpec& base,
                                   const std::vector<std::size_t>& k_values,
                                   const std::vector<std::size_t>& f_values);

/// Index of the row with the lowest validation MSE, if any row has metrics.
std::optional<std::size_t> best_row(const std::vector<ResultRow>& rows);

/// full, no_pa, no_fi, no_fd and no_pa_fi trained with identical seed, split and normalization.
std::vector<ResultRow> ablation_suite(const SeriesPanel& panel, const ExperimentSpec& base);

/// `variant_or_cell,K,F,H,val_mse,test_mse,test_mae,epochs_run,wall_seconds`
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

/// Column-wise z-score across rows followed by a logistic squash into (0, 1).
std::vector<ResultRow> normalized_sigmoid(const std::vector<ResultRow>& rows);

} // namespace pafnet::training
