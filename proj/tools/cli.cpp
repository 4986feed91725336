#include "cli.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "pafnet/checkpoint.hpp"
#include "pafnet/spectral.hpp"

namespace pafnet::cli {

namespace {

std::string format_double(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

std::string format_list(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += (i ? "," : "") + std::to_string(values[i]);
    }
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const auto n = std::stoull(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument(v);
        }
        return n;
    } catch (const std::exception&) {
        throw InvalidConfig(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw InvalidConfig(key + ": expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw InvalidConfig(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : io::split_list(v)) {
        out.push_back(to_size(key, item));
    }
    return out;
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.model.T = 96;
    c.model.H = 12;
    c.model.K = 1;
    c.model.F = 1;
    c.model.P = 64;
    c.model.D = 64;
    c.train.lr = 1e-3;
    c.train.batch = 32;
    c.train.epochs = 100;
    return c;
}

void RunConfig::apply(const io::KeyValues& values) {
    const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
        {"data.manifest", [&](auto&, auto& v) { manifest = v; }},
        {"model.T", [&](auto& k, auto& v) { model.T = to_size(k, v); }},
        {"model.H", [&](auto& k, auto& v) { model.H = to_size(k, v); }},
        {"model.K", [&](auto& k, auto& v) { model.K = to_size(k, v); }},
        {"model.F", [&](auto& k, auto& v) { model.F = to_size(k, v); }},
        {"model.P", [&](auto& k, auto& v) { model.P = to_size(k, v); }},
        {"model.D", [&](auto& k, auto& v) { model.D = to_size(k, v); }},
        {"model.ablation", [&](auto&, auto& v) { model.ablation = model::parse_ablation(v); }},
        {"model.per_frequency_cross", [&](auto& k, auto& v) { model.per_frequency_cross = to_bool(k, v); }},
        {"split.train", [&](auto& k, auto& v) { split.train = to_double(k, v); }},
        {"split.val", [&](auto& k, auto& v) { split.val = to_double(k, v); }},
        {"split.test", [&](auto& k, auto& v) { split.test = to_double(k, v); }},
        {"train.lr", [&](auto& k, auto& v) { train.lr = to_double(k, v); }},
        {"train.batch", [&](auto& k, auto& v) { train.batch = to_size(k, v); }},
        {"train.epochs", [&](auto& k, auto& v) { train.epochs = to_size(k, v); }},
        {"train.lr_plateau", [&](auto& k, auto& v) { train.lr_plateau = to_bool(k, v); }},
        {"train.plateau_patience", [&](auto& k, auto& v) { train.plateau_patience = to_size(k, v); }},
        {"train.stride", [&](auto& k, auto& v) { stride = to_size(k, v); }},
        {"align.per_window", [&](auto& k, auto& v) { per_window_alignment = to_bool(k, v); }},
        {"align.eps", [&](auto& k, auto& v) { eps = to_double(k, v); }},
        {"grid.K", [&](auto& k, auto& v) { grid_k = to_size_list(k, v); }},
        {"grid.F", [&](auto& k, auto& v) { grid_f = to_size_list(k, v); }},
        {"output.normalized_sigmoid", [&](auto& k, auto& v) { normalized_sigmoid = to_bool(k, v); }},
        {"seed", [&](auto& k, auto& v) { seed = to_size(k, v); }},
    };
    for (const auto& [key, value] : values) {
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw InvalidConfig("unknown config key '" + key + "'");
        }
        it->second(key, value);
    }
}

io::KeyValues RunConfig::to_key_values() const {
    return {
        {"data.manifest", manifest.string()},
        {"model.T", std::to_string(model.T)},
        {"model.H", std::to_string(model.H)},
        {"model.K", std::to_string(model.K)},
        {"model.F", std::to_string(model.F)},
        {"model.P", std::to_string(model.P)},
        {"model.D", std::to_string(model.D)},
        {"model.ablation", std::string(model::to_string(model.ablation))},
        {"model.per_frequency_cross", model.per_frequency_cross ? "true" : "false"},
        {"split.train", format_double(split.train)},
        {"split.val", format_double(split.val)},
        {"split.test", format_double(split.test)},
        {"train.lr", format_double(train.lr)},
        {"train.batch", std::to_string(train.batch)},
        {"train.epochs", std::to_string(train.epochs)},
        {"train.lr_plateau", train.lr_plateau ? "true" : "false"},
        {"train.plateau_patience", std::to_string(train.plateau_patience)},
        {"train.stride", std::to_string(stride)},
        {"align.per_window", per_window_alignment ? "true" : "false"},
        {"align.eps", format_double(eps)},
        {"grid.K", format_list(grid_k)},
        {"grid.F", format_list(grid_f)},
        {"output.normalized_sigmoid", normalized_sigmoid ? "true" : "false"},
        {"seed", std::to_string(seed)},
    };
}

training::ExperimentSpec RunConfig::experiment(std::size_t processes) const {
    training::ExperimentSpec spec;
    spec.model = model;
    spec.model.M = processes;
    spec.model.seed = seed;
    spec.train = train;
    spec.train.seed = seed;
    spec.split = split;
    spec.stride = stride;
    spec.per_window_plan = per_window_alignment;
    spec.eps = eps;
    return spec;
}

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::string manifest;
    std::optional<std::uint64_t> seed;
    bool per_window = false;
    bool per_frequency_cross = false;
    bool lr_plateau = false;
    bool normalized_sigmoid = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool training_flags) {
    cmd->add_option("-c,--config", o.config_path, "Run config file (flat dotted keys)");
    cmd->add_option("--set", o.overrides, "Override a config key: key=value (repeatable)");
    cmd->add_option("-o,--out", o.out_dir, "Fresh output directory")->required();
    cmd->add_option("-m,--manifest", o.manifest, "Dataset manifest (overrides data.manifest)");
    cmd->add_option("--seed", o.seed, "Seed for every random choice");
    if (training_flags) {
        cmd->add_flag("--per-window-alignment", o.per_window, "Re-select neighbors and lags on every window");
        cmd->add_flag("--per-frequency-cross", o.per_frequency_cross, "One cross-attention projection set per band");
        cmd->add_flag("--lr-plateau", o.lr_plateau, "Halve the learning rate when validation MSE stalls");
        cmd->add_flag("--normalized-sigmoid", o.normalized_sigmoid,
                      "Also write z-scored, sigmoid-squashed copies of result tables");
    }
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig cfg = RunConfig::defaults();
    if (!o.config_path.empty()) {
        const fs::path path = o.config_path;
        auto kv = io::read_key_values(path);
        auto it = kv.find("data.manifest");
        if (it != kv.end() && !it->second.empty() && fs::path(it->second).is_relative()) {
            it->second = (path.parent_path() / it->second).string();
        }
        cfg.apply(kv);
    }
    io::KeyValues overrides;
    for (const auto& item : o.overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig("--set expects key=value, got '" + item + "'");
        }
        overrides[io::trim(item.substr(0, eq))] = io::trim(item.substr(eq + 1));
    }
    cfg.apply(overrides);
    if (!o.manifest.empty()) {
        cfg.manifest = o.manifest;
    }
    if (o.seed) {
        cfg.seed = *o.seed;
    }
    cfg.per_window_alignment = cfg.per_window_alignment || o.per_window;
    cfg.model.per_frequency_cross = cfg.model.per_frequency_cross || o.per_frequency_cross;
    cfg.train.lr_plateau = cfg.train.lr_plateau || o.lr_plateau;
    cfg.normalized_sigmoid = cfg.normalized_sigmoid || o.normalized_sigmoid;
    if (!cfg.manifest.empty()) {
        cfg.manifest = fs::absolute(cfg.manifest).lexically_normal();
    }
    return cfg;
}

/// Output directory bookkeeping: created fresh, records every file written.
class RunOutput {
public:
    RunOutput(const fs::path& dir, std::string command) : dir_(dir), command_(std::move(command)) {
        if (fs::exists(dir_)) {
            if (!fs::is_directory(dir_) || !fs::is_empty(dir_)) {
                throw FileError("output directory " + dir_.string() + " exists and is not empty");
            }
        } else {
            fs::create_directories(dir_);
        }
    }

    std::ofstream open(const std::string& name, bool binary = false) {
        files_.push_back(name);
        std::ofstream out(dir_ / name, binary ? std::ios::binary : std::ios::out);
        if (!out) {
            throw FileError("cannot write " + (dir_ / name).string());
        }
        return out;
    }

    fs::path path(const std::string& name) {
        files_.push_back(name);
        return dir_ / name;
    }

    void echo_config(const RunConfig& cfg) {
        auto out = open("resolved_config.txt");
        out << "# resolved configuration for `" << command_ << "`; rerun with --config\n";
        io::write_key_values(out, cfg.to_key_values());
    }

    void note(const std::string& line) { notes_.push_back(line); }

    void finish() {
        std::ofstream out(dir_ / "run_manifest.txt");
        out << "command = " << command_ << '\n';
        out << "files = ";
        for (std::size_t i = 0; i < files_.size(); ++i) {
            out << (i ? "," : "") << files_[i];
        }
        out << '\n';
        for (std::size_t i = 0; i < notes_.size(); ++i) {
            out << "note." << i << " = " << notes_[i] << '\n';
        }
    }

private:
    fs::path dir_;
    std::string command_;
    std::vector<std::string> files_;
    std::vector<std::string> notes_;
};

SeriesPanel load_panel(const RunConfig& cfg, RunOutput* run = nullptr) {
    if (cfg.manifest.empty()) {
        throw InvalidConfig("no dataset manifest given (data.manifest or --manifest)");
    }
    if (!fs::exists(cfg.manifest)) {
        throw FileError("manifest not found: " + cfg.manifest.string());
    }
    io::LoadReport report;
    auto panel = io::load_csv(io::read_manifest(cfg.manifest), &report);
    if (run != nullptr && report.cells_filled + report.rows_dropped > 0) {
        run->note("forward-filled " + std::to_string(report.cells_filled) + " cells, dropped " +
                  std::to_string(report.rows_dropped) + " rows");
    }
    return panel;
}

void write_metrics(std::ostream& out, const std::string& split, const training::Metrics& m) {
    out << std::setprecision(17);
    out << split << ",all," << m.mse << ',' << m.mae << '\n';
    for (std::size_t h = 0; h < m.mse_per_horizon.size(); ++h) {
        out << split << ',' << h + 1 << ',' << m.mse_per_horizon[h] << ',' << m.mae_per_horizon[h] << '\n';
    }
}

void write_tables(RunOutput& run, const std::string& stem, const std::vector<training::ResultRow>& rows,
                  bool sigmoid) {
    {
        auto out = run.open(stem + ".csv");
        training::write_results_csv(out, rows);
    }
    if (sigmoid) {
        auto out = run.open(stem + "_sigmoid.csv");
        training::write_results_csv(out, training::normalized_sigmoid(rows));
    }
    for (const auto& r : rows) {
        if (!r.note.empty()) {
            run.note(r.label + ": " + r.note);
        }
    }
}

int cmd_align(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    RunOutput run(o.out_dir, "align");
    run.echo_config(cfg);
    const auto spec = cfg.experiment(panel.processes());
    const auto segments = training::chronological_split(panel, spec.split, spec.model.T, spec.model.H);
    const auto normalizer = training::Normalizer::fit(segments.train.values);
    const auto plan = training::training_plan(normalizer.apply(segments.train.values), spec.model.K, spec.eps);
    auto out = run.open("neighbor_plan.csv");
    align::write_plan_csv(out, plan);
    run.note("lags are circular over the " + std::to_string(plan.length) + "-timestamp training split");
    run.finish();
    return kSuccess;
}

int cmd_decompose(const CommonOptions& o, const std::string& channel, std::size_t start,
                  std::optional<std::size_t> length) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    RunOutput run(o.out_dir, "decompose");
    run.echo_config(cfg);
    std::size_t index = 0;
    if (!channel.empty()) {
        auto it = std::find(panel.channel_names.begin(), panel.channel_names.end(), channel);
        if (it == panel.channel_names.end()) {
            throw MissingColumn("no channel named '" + channel + "'");
        }
        index = static_cast<std::size_t>(it - panel.channel_names.begin());
    }
    const std::size_t len = length.value_or(panel.length() - std::min(start, panel.length()));
    if (start + len > panel.length() || len == 0) {
        throw InputError("decompose: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") is outside the series");
    }
    const auto series = panel.series(index).subspan(start, len);
    const auto bands = spectral::decompose(series, cfg.model.F);
    auto out = run.open("bands.csv");
    out << "t";
    for (std::size_t f = 0; f < bands.band_count(); ++f) {
        out << ",band_" << f;
    }
    out << ",sum,original\n" << std::setprecision(17);
    for (std::size_t t = 0; t < len; ++t) {
        out << start + t;
        double sum = 0.0;
        for (std::size_t f = 0; f < bands.band_count(); ++f) {
            out << ',' << bands.band(f)[t];
            sum += bands.band(f)[t];
        }
        out << ',' << sum << ',' << series[t] << '\n';
    }
    run.finish();
    return kSuccess;
}

int cmd_train(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    RunOutput run(o.out_dir, "train");
    run.echo_config(cfg);
    const auto spec = cfg.experiment(panel.processes());
    const auto data = training::prepare_data(panel, spec);
    auto log = run.open("loss_log.csv");
    log << "epoch,train_loss,val_loss,lr\n" << std::setprecision(17);
    const auto result = training::run_experiment(data, spec, [&](const training::EpochRecord& r) {
        log << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << '\n';
        log.flush();
    });
    checkpoint::Checkpoint ckpt{spec.model, result.state.best_params, data.plan, data.normalizer,
                                spec.per_window_plan, result.state.best_epoch};
    checkpoint::save(run.path("checkpoint.bin"), ckpt);
    auto metrics = run.open("metrics.csv");
    metrics << "split,h,mse,mae\n";
    write_metrics(metrics, "val", result.val);
    write_metrics(metrics, "test", result.test);
    run.note("best epoch " + std::to_string(result.state.best_epoch));
    run.finish();
    return kSuccess;
}

struct Restored {
    checkpoint::Checkpoint ckpt;
    training::PreparedData data;
    training::ExperimentSpec spec;
};

Restored restore(const RunConfig& cfg, const std::string& checkpoint_path, const SeriesPanel& panel) {
    Restored r;
    r.ckpt = checkpoint::load(checkpoint_path);
    r.spec = cfg.experiment(panel.processes());
    const auto& a = r.ckpt.config;
    const auto& b = r.spec.model;
    if (a.M != b.M || a.T != b.T || a.H != b.H || a.K != b.K || a.F != b.F || a.P != b.P || a.D != b.D ||
        a.ablation != b.ablation || a.per_frequency_cross != b.per_frequency_cross) {
        throw CheckpointMismatch("checkpoint model (M=" + std::to_string(a.M) + ", T=" + std::to_string(a.T) +
                                 ", H=" + std::to_string(a.H) + ", K=" + std::to_string(a.K) +
                                 ", F=" + std::to_string(a.F) + ") does not match the run config");
    }
    r.spec.model = a;
    r.spec.per_window_plan = r.ckpt.per_window_plan;
    const auto segments = training::chronological_split(panel, r.spec.split, a.T, a.H);
    const Tensor val = r.ckpt.normalizer.apply(segments.val.values);
    const Tensor test = r.ckpt.normalizer.apply(segments.test.values);
    r.data.normalizer = r.ckpt.normalizer;
    r.data.plan = r.ckpt.plan;
    r.data.val = training::make_windows(val, a.T, a.H, 1);
    r.data.test = training::make_windows(test, a.T, a.H, 1);
    r.data.val_offset = segments.val_offset;
    r.data.test_offset = segments.test_offset;
    return r;
}

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint_path) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    const auto r = restore(cfg, checkpoint_path, panel);
    RunOutput run(o.out_dir, "evaluate");
    run.echo_config(cfg);
    const auto& m = r.spec.model;
    const auto val = training::encode(r.data.val, r.data.plan, m, r.spec.per_window_plan, r.spec.eps);
    const auto test = training::encode(r.data.test, r.data.plan, m, r.spec.per_window_plan, r.spec.eps);
    auto metrics = run.open("metrics.csv");
    metrics << "split,h,mse,mae\n";
    write_metrics(metrics, "val", training::evaluate(r.ckpt.params, m, val));
    write_metrics(metrics, "test", training::evaluate(r.ckpt.params, m, test));
    run.finish();
    return kSuccess;
}

int cmd_predict(const CommonOptions& o, const std::string& checkpoint_path) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    const auto r = restore(cfg, checkpoint_path, panel);
    RunOutput run(o.out_dir, "predict");
    run.echo_config(cfg);
    const auto& m = r.spec.model;
    const auto test = training::encode(r.data.test, r.data.plan, m, r.spec.per_window_plan, r.spec.eps);
    const Tensor pred = training::predict(r.ckpt.params, m, test);
    std::vector<std::size_t> starts;
    for (std::size_t s : r.data.test.starts) {
        starts.push_back(r.data.test_offset + s);
    }
    {
        auto out = run.open("predictions.csv");
        io::write_predictions_csv(out, starts, r.data.test.targets, pred);
    }
    {
        auto out = run.open("predictions_raw.csv");
        io::write_predictions_csv(out, starts, r.ckpt.normalizer.invert(r.data.test.targets, 1),
                                  r.ckpt.normalizer.invert(pred, 1));
    }
    run.finish();
    return kSuccess;
}

int cmd_ablate(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    RunOutput run(o.out_dir, "ablate");
    run.echo_config(cfg);
    const auto rows = training::ablation_suite(panel, cfg.experiment(panel.processes()));
    write_tables(run, "ablation", rows, cfg.normalized_sigmoid);
    run.finish();
    const bool any = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.val_mse.has_value(); });
    return any ? kSuccess : kNumericFailure;
}

int cmd_gridsearch(const CommonOptions& o) {
    const RunConfig cfg = resolve(o);
    const auto panel = load_panel(cfg);
    RunOutput run(o.out_dir, "gridsearch");
    run.echo_config(cfg);
    const auto rows = training::grid_search(panel, cfg.experiment(panel.processes()), cfg.grid_k, cfg.grid_f);
    write_tables(run, "gridsearch", rows, cfg.normalized_sigmoid);
    if (const auto best = training::best_row(rows)) {
        run.note("best cell " + rows[*best].label);
    }
    run.finish();
    const bool any = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.val_mse.has_value(); });
    return any ? kSuccess : kNumericFailure;
}

int cmd_synth(const std::string& out_dir, const std::string& spec_path, const std::string& preset,
              std::optional<std::uint64_t> seed, std::size_t length) {
    io::SyntheticSpec spec;
    if (!spec_path.empty()) {
        if (!fs::exists(spec_path)) {
            throw FileError("synthetic spec not found: " + spec_path);
        }
        spec = io::read_synthetic_spec(spec_path);
        if (seed) {
            spec.seed = *seed;
        }
    } else if (preset == "planted_lag") {
        spec = io::planted_lag_preset(seed.value_or(0), length);
    } else if (preset == "compound_periodicity") {
        spec = io::compound_periodicity_preset(seed.value_or(0), length);
    } else {
        throw InvalidConfig("synth needs --spec or --preset planted_lag|compound_periodicity");
    }
    const auto data = io::generate_synthetic(spec);
    RunOutput run(out_dir, "synth");
    {
        auto out = run.open("spec.json");
        io::write_synthetic_spec(out, spec);
    }
    {
        auto out = run.open("data.csv");
        io::write_panel_csv(out, data.panel);
    }
    {
        io::DatasetManifest manifest;
        manifest.path = "data.csv";
        manifest.channel_columns = data.panel.channel_names;
        manifest.drop_policy = io::DropPolicy::error;
        manifest.expected_rows = data.panel.length();
        auto out = run.open("manifest.txt");
        write_manifest(out, manifest);
    }
    {
        auto out = run.open("truth.csv");
        out << "source,target,lag,weight\n" << std::setprecision(17);
        for (const auto& c : data.truth.couplings) {
            out << c.source << ',' << c.target << ',' << c.lag << ',' << c.weight << '\n';
        }
    }
    run.finish();
    return kSuccess;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"pafnet: phase-aligned, frequency-decoupled forecasting for multi-process quality series"};
    app.require_subcommand(1);

    CommonOptions align_o, decomp_o, train_o, eval_o, predict_o, ablate_o, grid_o;
    auto* align_cmd = app.add_subcommand("align", "Neighbor/lag table for the training split");
    add_common(align_cmd, align_o, false);

    auto* decomp_cmd = app.add_subcommand("decompose", "DCT band reconstructions of one channel");
    add_common(decomp_cmd, decomp_o, false);
    std::string channel;
    std::size_t start = 0;
    std::optional<std::size_t> length;
    decomp_cmd->add_option("--channel", channel, "Channel name (default: first)");
    decomp_cmd->add_option("--start", start, "First timestamp");
    decomp_cmd->add_option("--length", length, "Number of timestamps (default: to the end)");

    auto* train_cmd = app.add_subcommand("train", "Train and write a checkpoint");
    add_common(train_cmd, train_o, true);

    std::string eval_ckpt, predict_ckpt;
    auto* eval_cmd = app.add_subcommand("evaluate", "Validation/test MSE and MAE per horizon");
    add_common(eval_cmd, eval_o, true);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint from `train`")->required();

    auto* predict_cmd = app.add_subcommand("predict", "Test-window forecasts");
    add_common(predict_cmd, predict_o, true);
    predict_cmd->add_option("--checkpoint", predict_ckpt, "Checkpoint from `train`")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "Train every ablation variant");
    add_common(ablate_cmd, ablate_o, true);

    auto* grid_cmd = app.add_subcommand("gridsearch", "Train one model per (K, F) cell");
    add_common(grid_cmd, grid_o, true);

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_out, synth_spec, synth_preset;
    std::optional<std::uint64_t> synth_seed;
    std::size_t synth_length = 1600;
    synth_cmd->add_option("-o,--out", synth_out, "Fresh output directory")->required();
    synth_cmd->add_option("--spec", synth_spec, "SyntheticSpec JSON file");
    synth_cmd->add_option("--preset", synth_preset, "planted_lag or compound_periodicity");
    synth_cmd->add_option("--seed", synth_seed, "Generator seed");
    synth_cmd->add_option("--length", synth_length, "Timestamps (presets only)");

    std::vector<std::string> argv_copy(args.rbegin(), args.rend());
    if (!argv_copy.empty()) {
        argv_copy.pop_back(); // program name
    }
    try {
        app.parse(argv_copy);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        if (*align_cmd) {
            return cmd_align(align_o);
        }
        if (*decomp_cmd) {
            return cmd_decompose(decomp_o, channel, start, length);
        }
        if (*train_cmd) {
            return cmd_train(train_o);
        }
        if (*eval_cmd) {
            return cmd_evaluate(eval_o, eval_ckpt);
        }
        if (*predict_cmd) {
            return cmd_predict(predict_o, predict_ckpt);
        }
        if (*ablate_cmd) {
            return cmd_ablate(ablate_o);
        }
        if (*grid_cmd) {
            return cmd_gridsearch(grid_o);
        }
        if (*synth_cmd) {
            return cmd_synth(synth_out, synth_spec, synth_preset, synth_seed, synth_length);
        }
    } catch (const NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericFailure;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kStateError;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

} // namespace pafnet::cli
