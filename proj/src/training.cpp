#include "pafnet/training.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace pafnet::training {

void SplitSpec::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0) || std::abs(train + val + test - 1.0) > 1e-9) {
        throw InvalidConfig("split ratios must be positive and sum to 1");
    }
}

Segments chronological_split(const SeriesPanel& panel, const SplitSpec& spec, std::size_t lookback,
                             std::size_t horizon) {
    spec.validate();
    const std::size_t n = panel.length();
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n)));
    if (n_train < lookback + horizon) {
        throw TooShort("training segment of " + std::to_string(n_train) +
                       " timestamps cannot hold one window of T + H = " +
                       std::to_string(lookback + horizon));
    }
    Segments s;
    s.train = panel.segment(0, n_train);
    s.val = panel.segment(n_train, n_train + n_val);
    s.test = panel.segment(n_train + n_val, n);
    s.val_offset = n_train;
    s.test_offset = n_train + n_val;
    return s;
}

Tensor WindowDataset::input(std::size_t b) const {
    const auto src = inputs.slice(b);
    return Tensor({inputs.dim(1), inputs.dim(2)}, std::vector<double>(src.begin(), src.end()));
}

Tensor WindowDataset::target(std::size_t b) const {
    const auto src = targets.slice(b);
    return Tensor({targets.dim(1), targets.dim(2)}, std::vector<double>(src.begin(), src.end()));
}

WindowDataset make_windows(const Tensor& segment, std::size_t lookback, std::size_t horizon,
                           std::size_t stride) {
    if (segment.rank() != 2) {
        throw ShapeMismatch("make_windows: segment must be [M x len]");
    }
    if (stride < 1 || lookback < 1 || horizon < 1) {
        throw InvalidConfig("make_windows: T, H and stride must be positive");
    }
    const std::size_t m = segment.dim(0);
    const std::size_t len = segment.dim(1);
    if (len < lookback + horizon) {
        throw TooShort("segment of " + std::to_string(len) + " timestamps is shorter than T + H = " +
                       std::to_string(lookback + horizon));
    }
    const std::size_t count = (len - lookback - horizon) / stride + 1;
    WindowDataset ds;
    ds.stride = stride;
    ds.inputs = Tensor({count, m, lookback});
    ds.targets = Tensor({count, m, horizon});
    for (std::size_t b = 0; b < count; ++b) {
        const std::size_t start = b * stride;
        ds.starts.push_back(start);
        for (std::size_t i = 0; i < m; ++i) {
            const auto row = segment.slice(i);
            std::copy(row.begin() + start, row.begin() + start + lookback, ds.inputs.slice(b, i).begin());
            std::copy(row.begin() + start + lookback, row.begin() + start + lookback + horizon,
                      ds.targets.slice(b, i).begin());
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
    if (mean_.size() != stddev_.size()) {
        throw ShapeMismatch("normalizer mean/std size mismatch");
    }
}

Normalizer Normalizer::fit(const Tensor& train_segment) {
    if (train_segment.rank() != 2 || train_segment.dim(1) == 0) {
        throw InputError("normalizer needs a non-empty [M x N] training segment");
    }
    const std::size_t m = train_segment.dim(0);
    const auto n = static_cast<double>(train_segment.dim(1));
    std::vector<double> mean(m), stddev(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = train_segment.slice(i);
        double sum = 0.0;
        for (double v : row) {
            sum += v;
        }
        mean[i] = sum / n;
        double ss = 0.0;
        for (double v : row) {
            ss += (v - mean[i]) * (v - mean[i]);
        }
        stddev[i] = std::max(std::sqrt(ss / n), kStdFloor);
    }
    return Normalizer(std::move(mean), std::move(stddev));
}

Tensor Normalizer::map(const Tensor& values, std::size_t channel_axis, bool forward) const {
    if (channel_axis >= values.rank() || values.dim(channel_axis) != mean_.size()) {
        throw ShapeMismatch("normalizer has " + std::to_string(mean_.size()) + " channels, tensor is " +
                            values.shape_string());
    }
    std::size_t inner = 1;
    for (std::size_t a = channel_axis + 1; a < values.rank(); ++a) {
        inner *= values.dim(a);
    }
    const std::size_t channels = mean_.size();
    Tensor out = values;
    for (std::size_t n = 0; n < out.size(); ++n) {
        const std::size_t c = (n / inner) % channels;
        out[n] = forward ? (out[n] - mean_[c]) / stddev_[c] : out[n] * stddev_[c] + mean_[c];
    }
    return out;
}

Tensor Normalizer::apply(const Tensor& values, std::size_t channel_axis) const {
    return map(values, channel_axis, true);
}

Tensor Normalizer::invert(const Tensor& values, std::size_t channel_axis) const {
    return map(values, channel_axis, false);
}

// ---------------------------------------------------------------------------

Adam::Adam(AdamOptions options, const std::vector<std::size_t>& sizes) : options_(options) {
    for (std::size_t s : sizes) {
        m_.emplace_back(s, 0.0);
        v_.emplace_back(s, 0.0);
    }
}

void Adam::step(const std::vector<std::span<double>>& params,
                const std::vector<std::span<const double>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ShapeMismatch("adam: parameter block count changed");
    }
    ++step_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& m = m_[b];
        auto& v = v_[b];
        for (std::size_t n = 0; n < m.size(); ++n) {
            const double g = grads[b][n];
            m[n] = options_.beta1 * m[n] + (1.0 - options_.beta1) * g;
            v[n] = options_.beta2 * v[n] + (1.0 - options_.beta2) * g * g;
            params[b][n] -= options_.lr * (m[n] / c1) / (std::sqrt(v[n] / c2) + options_.eps);
        }
    }
}

// ---------------------------------------------------------------------------

EncodedSplit encode(const WindowDataset& windows, const align::NeighborPlan& plan,
                    const model::ModelConfig& config, bool per_window, double eps) {
    EncodedSplit out;
    out.targets = windows.targets;
    out.patches.reserve(windows.size());
    const align::NeighborPlan window_plan =
        plan.length == config.T ? plan : align::rebase(plan, config.T);
    for (std::size_t b = 0; b < windows.size(); ++b) {
        const Tensor input = windows.input(b);
        if (per_window) {
            out.patches.push_back(
                model::prepare_patches(input, align::select_neighbors(input, config.K, eps), config));
        } else {
            out.patches.push_back(model::prepare_patches(input, window_plan, config));
        }
    }
    return out;
}

namespace {

std::vector<std::span<double>> blocks(model::ModelParameters& p) {
    std::vector<std::span<double>> out;
    p.for_each([&](const char*, Tensor& t) { out.push_back(t.span()); });
    return out;
}

std::vector<std::span<const double>> const_blocks(const model::ModelParameters& p) {
    std::vector<std::span<const double>> out;
    p.for_each([&](const char*, const Tensor& t) { out.push_back(t.span()); });
    return out;
}

std::vector<std::size_t> block_sizes(const model::ModelParameters& p) {
    std::vector<std::size_t> out;
    p.for_each([&](const char*, const Tensor& t) { out.push_back(t.size()); });
    return out;
}

TrainState fresh_state(const model::ModelConfig& config, const TrainOptions& options) {
    TrainState state;
    state.params = model::initialize(config);
    state.adam = Adam(AdamOptions{options.lr}, block_sizes(state.params));
    state.best_params = state.params;
    state.best_val_loss = std::numeric_limits<double>::infinity();
    state.rng.seed(options.seed);
    return state;
}

Tensor window_targets(const EncodedSplit& split, std::size_t b) {
    const auto src = split.targets.slice(b);
    return Tensor({split.targets.dim(1), split.targets.dim(2)}, std::vector<double>(src.begin(), src.end()));
}

// One Adam step on the mean loss over `indices`; returns the mean loss.
double batch_step(TrainState& state, const model::ModelConfig& config, const EncodedSplit& split,
                  std::span<const std::size_t> indices, model::ModelParameters& grad) {
    grad.for_each([](const char*, Tensor& t) { t.fill(0.0); });
    const double weight = 1.0 / static_cast<double>(indices.size());
    double loss = 0.0;
    for (std::size_t b : indices) {
        loss += model::accumulate_gradient(split.patches[b], window_targets(split, b), state.params, config,
                                           grad, weight);
    }
    loss *= weight;
    if (std::isfinite(loss)) {
        state.adam.step(blocks(state.params), const_blocks(grad));
        ++state.step;
    }
    return loss;
}

} // namespace

TrainState train(const model::ModelConfig& config, const TrainOptions& options, const EncodedSplit& train_set,
                 const EncodedSplit& val_set, const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw TooShort("training and validation sets must each hold at least one window");
    }
    if (options.batch < 1) {
        throw InvalidConfig("batch size must be positive");
    }
    TrainState state = fresh_state(config, options);
    auto grad = model::ModelParameters::zeros(config);
    std::vector<std::size_t> order(train_set.size());
    std::size_t since_improvement = 0;

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), state.rng);
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + options.batch);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const double loss = batch_step(state, config, train_set, idx, grad);
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss(epoch, batch_index, loss);
            }
            epoch_loss += loss * static_cast<double>(idx.size());
        }
        epoch_loss /= static_cast<double>(order.size());

        const double val_loss = evaluate(state.params, config, val_set).mse;
        if (!std::isfinite(val_loss)) {
            throw NonFiniteLoss(epoch, batch_index, val_loss);
        }
        if (val_loss < state.best_val_loss) {
            state.best_val_loss = val_loss;
            state.best_params = state.params;
            state.best_epoch = epoch;
            since_improvement = 0;
        } else if (++since_improvement >= options.plateau_patience && options.lr_plateau) {
            state.adam.options().lr *= 0.5;
            since_improvement = 0;
        }
        EpochRecord record{epoch, epoch_loss, val_loss, state.adam.options().lr};
        state.history.push_back(record);
        if (on_epoch) {
            on_epoch(record);
        }
    }
    return state;
}

TrainState train_steps(const model::ModelConfig& config, const TrainOptions& options,
                       const EncodedSplit& train_set, std::size_t steps) {
    config.validate();
    TrainState state = fresh_state(config, options);
    auto grad = model::ModelParameters::zeros(config);
    std::vector<std::size_t> all(train_set.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t s = 0; s < steps; ++s) {
        const double loss = batch_step(state, config, train_set, all, grad);
        if (!std::isfinite(loss)) {
            throw NonFiniteLoss(0, s, loss);
        }
        state.history.push_back({s + 1, loss, 0.0, options.lr});
    }
    return state;
}

Metrics compute_metrics(const Tensor& predictions, const Tensor& targets) {
    if (!predictions.same_shape(targets) || predictions.rank() != 3 || predictions.size() == 0) {
        throw ShapeMismatch("metrics: predictions " + predictions.shape_string() + " vs targets " +
                            targets.shape_string());
    }
    const std::size_t h = predictions.dim(2);
    Metrics m;
    m.mse_per_horizon.assign(h, 0.0);
    m.mae_per_horizon.assign(h, 0.0);
    for (std::size_t n = 0; n < predictions.size(); ++n) {
        const double r = predictions[n] - targets[n];
        m.mse += r * r;
        m.mae += std::abs(r);
        m.mse_per_horizon[n % h] += r * r;
        m.mae_per_horizon[n % h] += std::abs(r);
    }
    const auto total = static_cast<double>(predictions.size());
    m.mse /= total;
    m.mae /= total;
    for (std::size_t s = 0; s < h; ++s) {
        m.mse_per_horizon[s] /= total / static_cast<double>(h);
        m.mae_per_horizon[s] /= total / static_cast<double>(h);
    }
    return m;
}

Tensor predict(const model::ModelParameters& params, const model::ModelConfig& config, const EncodedSplit& split) {
    Tensor out({split.size(), config.M, config.H});
    for (std::size_t b = 0; b < split.size(); ++b) {
        const Tensor y = model::forward_patches(split.patches[b], params, config);
        std::copy(y.data().begin(), y.data().end(), out.slice(b).begin());
    }
    return out;
}

Metrics evaluate(const model::ModelParameters& params, const model::ModelConfig& config, const EncodedSplit& split) {
    return compute_metrics(predict(params, config, split), split.targets);
}

// ---------------------------------------------------------------------------

Tensor persistence_forecast(const WindowDataset& windows, std::size_t horizon) {
    const std::size_t b = windows.inputs.dim(0);
    const std::size_t m = windows.inputs.dim(1);
    const std::size_t t = windows.inputs.dim(2);
    Tensor out({b, m, horizon});
    for (std::size_t w = 0; w < b; ++w) {
        for (std::size_t i = 0; i < m; ++i) {
            const double last = windows.inputs(w, i, t - 1);
            for (std::size_t s = 0; s < horizon; ++s) {
                out(w, i, s) = last;
            }
        }
    }
    return out;
}

LinearRegressionBaseline LinearRegressionBaseline::fit(const WindowDataset& train, double ridge) {
    LinearRegressionBaseline model;
    const std::size_t b = train.inputs.dim(0);
    const std::size_t m = train.inputs.dim(1);
    model.lookback_ = train.inputs.dim(2);
    model.horizon_ = train.targets.dim(2);
    const std::size_t features = model.lookback_ + 1;
    for (std::size_t i = 0; i < m; ++i) {
        Eigen::MatrixXd x(b, features);
        Eigen::MatrixXd y(b, model.horizon_);
        for (std::size_t w = 0; w < b; ++w) {
            for (std::size_t s = 0; s < model.lookback_; ++s) {
                x(w, s) = train.inputs(w, i, s);
            }
            x(w, model.lookback_) = 1.0;
            for (std::size_t s = 0; s < model.horizon_; ++s) {
                y(w, s) = train.targets(w, i, s);
            }
        }
        Eigen::MatrixXd gram = x.transpose() * x;
        gram.diagonal().array() += ridge * static_cast<double>(b);
        const Eigen::MatrixXd coef = gram.ldlt().solve(x.transpose() * y);
        model.weights_.emplace_back(coef.data(), coef.data() + coef.size());
    }
    return model;
}

Tensor LinearRegressionBaseline::predict(const WindowDataset& windows) const {
    const std::size_t b = windows.inputs.dim(0);
    const std::size_t m = windows.inputs.dim(1);
    if (m != weights_.size() || windows.inputs.dim(2) != lookback_) {
        throw ShapeMismatch("linear baseline: window shape does not match the fitted model");
    }
    const std::size_t features = lookback_ + 1;
    Tensor out({b, m, horizon_});
    for (std::size_t w = 0; w < b; ++w) {
        for (std::size_t i = 0; i < m; ++i) {
            const auto& coef = weights_[i]; // column-major [features x H]
            for (std::size_t s = 0; s < horizon_; ++s) {
                double acc = coef[s * features + lookback_];
                for (std::size_t l = 0; l < lookback_; ++l) {
                    acc += coef[s * features + l] * windows.inputs(w, i, l);
                }
                out(w, i, s) = acc;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

align::NeighborPlan training_plan(const Tensor& normalized_train, std::size_t K, double eps) {
    return align::select_neighbors(normalized_train, K, eps);
}

PreparedData prepare_data(const SeriesPanel& panel, const ExperimentSpec& spec) {
    panel.validate();
    spec.model.validate();
    if (panel.processes() != spec.model.M) {
        throw InvalidConfig("model M = " + std::to_string(spec.model.M) + " but the panel has " +
                            std::to_string(panel.processes()) + " processes");
    }
    const auto segments = chronological_split(panel, spec.split, spec.model.T, spec.model.H);
    PreparedData data;
    data.normalizer = Normalizer::fit(segments.train.values);
    const Tensor train = data.normalizer.apply(segments.train.values);
    const Tensor val = data.normalizer.apply(segments.val.values);
    const Tensor test = data.normalizer.apply(segments.test.values);
    data.plan = training_plan(train, spec.model.K, spec.eps);
    data.train = make_windows(train, spec.model.T, spec.model.H, spec.stride);
    try {
        data.val = make_windows(val, spec.model.T, spec.model.H, 1);
        data.test = make_windows(test, spec.model.T, spec.model.H, 1);
    } catch (const TooShort& e) {
        throw TooShort(std::string("validation/test segment: ") + e.what());
    }
    data.val_offset = segments.val_offset;
    data.test_offset = segments.test_offset;
    return data;
}

ExperimentResult run_experiment(const PreparedData& data, const ExperimentSpec& spec,
                                const std::function<void(const EpochRecord&)>& on_epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto& cfg = spec.model;
    const auto enc_train = encode(data.train, data.plan, cfg, spec.per_window_plan, spec.eps);
    const auto enc_val = encode(data.val, data.plan, cfg, spec.per_window_plan, spec.eps);
    const auto enc_test = encode(data.test, data.plan, cfg, spec.per_window_plan, spec.eps);
    ExperimentResult result;
    result.state = train(cfg, spec.train, enc_train, enc_val, on_epoch);
    result.val = evaluate(result.state.best_params, cfg, enc_val);
    result.test = evaluate(result.state.best_params, cfg, enc_test);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

namespace {

ResultRow run_row(const std::string& label, const SeriesPanel& panel, const ExperimentSpec& spec,
                  const PreparedData* shared) {
    ResultRow row;
    row.label = label;
    row.K = spec.model.K;
    row.F = spec.model.F;
    row.H = spec.model.H;
    try {
        ExperimentResult r;
        if (shared != nullptr) {
            PreparedData data = *shared;
            if (data.plan.neighbors_per_target != spec.model.K) {
                const Tensor train = data.normalizer.apply(
                    chronological_split(panel, spec.split, spec.model.T, spec.model.H).train.values);
                data.plan = training_plan(train, spec.model.K, spec.eps);
            }
            r = run_experiment(data, spec);
        } else {
            r = run_experiment(prepare_data(panel, spec), spec);
        }
        row.val_mse = r.val.mse;
        row.test_mse = r.test.mse;
        row.test_mae = r.test.mae;
        row.epochs_run = r.state.history.size();
        row.wall_seconds = r.wall_seconds;
    } catch (const Error& e) {
        row.note = e.what();
    }
    return row;
}

} // namespace

std::vector<ResultRow> grid_search(const SeriesPanel& panel, const ExperimentSpec& base,
                                   const std::vector<std::size_t>& k_values,
                                   const std::vector<std::size_t>& f_values) {
    std::vector<ResultRow> rows;
    for (std::size_t k : k_values) {
        for (std::size_t f : f_values) {
            ExperimentSpec spec = base;
            spec.model.K = k;
            spec.model.F = f;
            const std::string label = "K" + std::to_string(k) + "_F" + std::to_string(f);
            if (k < 1 || k + 1 > panel.processes()) {
                rows.push_back({label, k, f, spec.model.H, {}, {}, {}, 0, 0.0, "skipped: K > M-1"});
                continue;
            }
            if (f < 1 || f > spec.model.T) {
                rows.push_back({label, k, f, spec.model.H, {}, {}, {}, 0, 0.0, "skipped: F > T"});
                continue;
            }
            rows.push_back(run_row(label, panel, spec, nullptr));
        }
    }
    return rows;
}

std::optional<std::size_t> best_row(const std::vector<ResultRow>& rows) {
    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].val_mse && (!best || *rows[r].val_mse < *rows[*best].val_mse)) {
            best = r;
        }
    }
    return best;
}

std::vector<ResultRow> ablation_suite(const SeriesPanel& panel, const ExperimentSpec& base) {
    std::vector<ResultRow> rows;
    std::optional<PreparedData> shared;
    try {
        shared = prepare_data(panel, base);
    } catch (const Error& e) {
        for (auto a : {model::Ablation::full, model::Ablation::no_pa, model::Ablation::no_fi,
                       model::Ablation::no_fd, model::Ablation::no_pa_fi}) {
            rows.push_back({std::string(model::to_string(a)), base.model.K, base.model.F, base.model.H, {}, {},
                            {}, 0, 0.0, e.what()});
        }
        return rows;
    }
    for (auto a : {model::Ablation::full, model::Ablation::no_pa, model::Ablation::no_fi, model::Ablation::no_fd,
                   model::Ablation::no_pa_fi}) {
        ExperimentSpec spec = base;
        spec.model.ablation = a;
        rows.push_back(run_row(std::string(model::to_string(a)), panel, spec, &*shared));
    }
    return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << "variant_or_cell,K,F,H,val_mse,test_mse,test_mae,epochs_run,wall_seconds\n";
    auto cell = [&](const std::optional<double>& v) {
        if (v) {
            out << std::setprecision(17) << *v;
        } else {
            out << "NA";
        }
    };
    for (const auto& r : rows) {
        out << r.label << ',' << r.K << ',' << r.F << ',' << r.H << ',';
        cell(r.val_mse);
        out << ',';
        cell(r.test_mse);
        out << ',';
        cell(r.test_mae);
        out << ',' << r.epochs_run << ',' << std::setprecision(6) << r.wall_seconds << '\n';
    }
}

std::vector<ResultRow> normalized_sigmoid(const std::vector<ResultRow>& rows) {
    std::vector<ResultRow> out = rows;
    auto squash = [&](auto member) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (r.*member) {
                sum += *(r.*member);
                ++n;
            }
        }
        if (n == 0) {
            return;
        }
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& r : rows) {
            if (r.*member) {
                ss += (*(r.*member) - mean) * (*(r.*member) - mean);
            }
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        for (auto& r : out) {
            if (r.*member) {
                const double z = sd > 0.0 ? (*(r.*member) - mean) / sd : 0.0;
                r.*member = 1.0 / (1.0 + std::exp(-z));
            }
        }
    };
    squash(&ResultRow::val_mse);
    squash(&ResultRow::test_mse);
    squash(&ResultRow::test_mae);
    return out;
}

} // namespace pafnet::training
