#include "pafnet/data_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace pafnet::io {

std::string trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(text);
    while (std::getline(in, field, sep)) {
        out.push_back(trim(field));
    }
    if (!text.empty() && text.back() == sep) {
        out.emplace_back();
    }
    return out;
}

KeyValues parse_key_values(std::istream& in, const std::string& source) {
    KeyValues values;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig(source + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) {
            throw InvalidConfig(source + ":" + std::to_string(number) + ": empty key");
        }
        values[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return values;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FileError("cannot open " + path.string());
    }
    return parse_key_values(in, path.string());
}

void write_key_values(std::ostream& out, const KeyValues& values) {
    for (const auto& [key, value] : values) {
        out << key << " = " << value << '\n';
    }
}

// ---------------------------------------------------------------------------

std::string to_string(DropPolicy policy) {
    switch (policy) {
    case DropPolicy::error:
        return "error";
    case DropPolicy::forward_fill:
        return "forward_fill";
    case DropPolicy::drop_row:
        return "drop_row";
    }
    return "error";
}

DropPolicy parse_drop_policy(const std::string& name) {
    if (name == "error") {
        return DropPolicy::error;
    }
    if (name == "forward_fill") {
        return DropPolicy::forward_fill;
    }
    if (name == "drop_row") {
        return DropPolicy::drop_row;
    }
    throw InvalidConfig("unknown drop_policy '" + name + "'");
}

void DatasetManifest::validate() const {
    if (channel_columns.empty()) {
        throw InvalidConfig("manifest lists no channel columns");
    }
    std::set<std::string> seen;
    for (const auto& c : channel_columns) {
        if (c.empty() || !seen.insert(c).second) {
            throw InvalidConfig("manifest channel columns must be non-empty and unique ('" + c + "')");
        }
    }
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
    const auto kv = read_key_values(manifest_path);
    DatasetManifest m;
    const auto get = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() || it->second.empty() ? nullptr : &it->second;
    };
    if (const auto* p = get("path")) {
        m.path = *p;
        if (m.path.is_relative()) {
            m.path = manifest_path.parent_path() / m.path;
        }
    } else {
        throw InvalidConfig(manifest_path.string() + ": manifest needs a 'path'");
    }
    if (const auto* t = get("timestamp_column")) {
        m.timestamp_column = *t;
    }
    if (const auto* c = get("channel_columns")) {
        m.channel_columns = split_list(*c);
    }
    if (const auto* d = get("drop_policy")) {
        m.drop_policy = parse_drop_policy(*d);
    }
    if (const auto* r = get("expected_rows")) {
        m.expected_rows = std::stoull(*r);
    }
    m.validate();
    return m;
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
    out << "path = " << manifest.path.string() << '\n';
    if (manifest.timestamp_column) {
        out << "timestamp_column = " << *manifest.timestamp_column << '\n';
    }
    out << "channel_columns = ";
    for (std::size_t i = 0; i < manifest.channel_columns.size(); ++i) {
        out << (i ? "," : "") << manifest.channel_columns[i];
    }
    out << "\ndrop_policy = " << to_string(manifest.drop_policy) << '\n';
    if (manifest.expected_rows) {
        out << "expected_rows = " << *manifest.expected_rows << '\n';
    }
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            fields.push_back(trim(field));
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    fields.push_back(trim(field));
    return fields;
}

bool is_missing(const std::string& cell) {
    static const std::set<std::string> tokens{"", "NA", "N/A", "NaN", "nan", "NAN", "null", "NULL"};
    return tokens.count(cell) > 0;
}

std::optional<double> parse_number(const std::string& cell) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = cell.data() + cell.size();
    if (begin != end && *begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

} // namespace

SeriesPanel load_csv(const DatasetManifest& manifest, LoadReport* report) {
    std::ifstream in(manifest.path);
    if (!in) {
        throw FileError("cannot open data file " + manifest.path.string());
    }
    return load_csv(in, manifest, report);
}

SeriesPanel load_csv(std::istream& in, const DatasetManifest& manifest, LoadReport* report) {
    manifest.validate();
    std::string line;
    if (!std::getline(in, line)) {
        throw InputError("CSV is empty");
    }
    const auto header = split_csv_row(line);
    auto column_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw MissingColumn("CSV has no column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> columns;
    for (const auto& name : manifest.channel_columns) {
        columns.push_back(column_of(name));
    }
    std::optional<std::size_t> ts_column;
    if (manifest.timestamp_column) {
        ts_column = column_of(*manifest.timestamp_column);
    }

    const std::size_t m = columns.size();
    std::vector<std::vector<double>> series(m);
    std::vector<std::string> timestamps;
    LoadReport stats;
    std::vector<std::optional<double>> row_values(m);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        ++row;
        const auto fields = split_csv_row(line);
        bool drop = false;
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t col = columns[c];
            const std::string cell = col < fields.size() ? fields[col] : std::string();
            if (is_missing(cell)) {
                row_values[c] = std::nullopt;
                continue;
            }
            row_values[c] = parse_number(cell);
            if (!row_values[c]) {
                throw NonNumericCell(row, col, header[col], cell);
            }
        }
        for (std::size_t c = 0; c < m && !drop; ++c) {
            if (row_values[c]) {
                continue;
            }
            switch (manifest.drop_policy) {
            case DropPolicy::error:
                throw UnhandledGap("missing value at row " + std::to_string(row) + ", column '" +
                                   header[columns[c]] + "'");
            case DropPolicy::forward_fill:
                if (series[c].empty()) {
                    throw UnhandledGap("missing value at row " + std::to_string(row) + ", column '" +
                                       header[columns[c]] + "' with nothing to forward-fill from");
                }
                row_values[c] = series[c].back();
                ++stats.cells_filled;
                break;
            case DropPolicy::drop_row:
                drop = true;
                break;
            }
        }
        if (drop) {
            ++stats.rows_dropped;
            continue;
        }
        for (std::size_t c = 0; c < m; ++c) {
            series[c].push_back(*row_values[c]);
        }
        if (ts_column) {
            timestamps.push_back(*ts_column < fields.size() ? fields[*ts_column] : std::string());
        }
    }
    stats.rows_read = row;

    const std::size_t n = series.front().size();
    if (manifest.expected_rows && *manifest.expected_rows != n) {
        throw RowCountMismatch("expected " + std::to_string(*manifest.expected_rows) + " rows, loaded " +
                               std::to_string(n));
    }
    SeriesPanel panel;
    panel.values = Tensor({m, n});
    for (std::size_t c = 0; c < m; ++c) {
        std::copy(series[c].begin(), series[c].end(), panel.values.slice(c).begin());
    }
    panel.channel_names = manifest.channel_columns;
    panel.timestamps = std::move(timestamps);
    panel.sampling_note = manifest.path.filename().string();
    panel.validate();
    if (report != nullptr) {
        *report = stats;
    }
    return panel;
}

void write_panel_csv(std::ostream& out, const SeriesPanel& panel, const std::string& timestamp_column) {
    const bool with_ts = !panel.timestamps.empty();
    if (with_ts) {
        out << timestamp_column << ',';
    }
    for (std::size_t i = 0; i < panel.processes(); ++i) {
        out << (i ? "," : "") << panel.channel_names[i];
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < panel.length(); ++t) {
        if (with_ts) {
            out << panel.timestamps[t] << ',';
        }
        for (std::size_t i = 0; i < panel.processes(); ++i) {
            out << (i ? "," : "") << panel.values(i, t);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (processes < 1 || length < 2) {
        throw InvalidConfig("synthetic spec needs M >= 1 and length >= 2");
    }
    if (!(noise_std >= 0.0)) {
        throw InvalidConfig("noise_std must be non-negative");
    }
    for (const auto& c : components) {
        if (c.process >= processes || c.frequency < 0.0 ||
            c.frequency >= static_cast<double>(length) / 2.0) {
            throw InvalidConfig("component out of range (process " + std::to_string(c.process) +
                                ", frequency " + std::to_string(c.frequency) + ")");
        }
    }
    for (const auto& c : couplings) {
        if (c.source >= processes || c.target >= processes || c.source == c.target || c.lag >= length) {
            throw InvalidConfig("coupling out of range");
        }
    }
    for (const auto& d : drives) {
        if (d.process >= processes || d.stddev < 0.0 || std::abs(d.ar) >= 1.0) {
            throw InvalidConfig("drive out of range");
        }
    }
}

std::size_t SyntheticTruth::aligning_lag(const Coupling& c, std::size_t window_length) {
    return (window_length - c.lag % window_length) % window_length;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t m = spec.processes;
    const std::size_t n = spec.length;

    // Topological order over the coupling graph.
    std::vector<std::size_t> indegree(m, 0);
    for (const auto& c : spec.couplings) {
        ++indegree[c.target];
    }
    std::vector<std::size_t> order;
    std::vector<bool> done(m, false);
    while (order.size() < m) {
        bool progressed = false;
        for (std::size_t i = 0; i < m; ++i) {
            if (!done[i] && indegree[i] == 0) {
                done[i] = true;
                order.push_back(i);
                progressed = true;
                for (const auto& c : spec.couplings) {
                    if (c.source == i) {
                        --indegree[c.target];
                    }
                }
            }
        }
        if (!progressed) {
            throw InvalidConfig("synthetic couplings contain a cycle");
        }
    }

    // History long enough for any chain of lags.
    std::size_t history = 0;
    for (const auto& c : spec.couplings) {
        history += c.lag;
    }
    const std::size_t total = history + n;
    const auto at = [&](std::size_t ext) { return static_cast<double>(ext) - static_cast<double>(history); };

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> clean(m, std::vector<double>(total, 0.0));
    for (const auto& d : spec.drives) {
        double state = 0.0;
        auto& row = clean[d.process];
        for (std::size_t e = 0; e < total; ++e) {
            state = d.ar * state + d.stddev * normal(rng);
            row[e] += state;
        }
    }
    for (const auto& c : spec.components) {
        auto& row = clean[c.process];
        for (std::size_t e = 0; e < total; ++e) {
            row[e] += c.amplitude * std::cos(std::numbers::pi * c.frequency * (2.0 * at(e) + 1.0) /
                                                 (2.0 * static_cast<double>(n)) +
                                             c.phase);
        }
    }
    for (std::size_t target : order) {
        for (const auto& c : spec.couplings) {
            if (c.target != target) {
                continue;
            }
            for (std::size_t e = c.lag; e < total; ++e) {
                clean[target][e] += c.weight * clean[c.source][e - c.lag];
            }
        }
    }

    SyntheticData out;
    out.panel.values = Tensor({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < n; ++t) {
            out.panel.values(i, t) = clean[i][history + t];
        }
    }
    if (spec.noise_std > 0.0) {
        for (double& v : out.panel.values.data()) {
            v += spec.noise_std * normal(rng);
        }
    }
    out.panel.channel_names = default_channel_names(m);
    out.panel.sampling_note = "synthetic seed " + std::to_string(spec.seed);
    out.truth.couplings = spec.couplings;
    out.truth.components = spec.components;
    return out;
}

namespace {

using nlohmann::json;

SyntheticSpec spec_from_json(const json& j) {
    SyntheticSpec s;
    s.processes = j.at("processes").get<std::size_t>();
    s.length = j.at("length").get<std::size_t>();
    s.noise_std = j.value("noise_std", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.value("components", json::array())) {
        s.components.push_back({c.at("process").get<std::size_t>(), c.at("frequency").get<double>(),
                                c.value("amplitude", 1.0), c.value("phase", 0.0)});
    }
    for (const auto& c : j.value("couplings", json::array())) {
        s.couplings.push_back({c.at("source").get<std::size_t>(), c.at("target").get<std::size_t>(),
                               c.at("lag").get<std::size_t>(), c.value("weight", 1.0)});
    }
    for (const auto& d : j.value("drives", json::array())) {
        s.drives.push_back({d.at("process").get<std::size_t>(), d.value("stddev", 1.0), d.value("ar", 0.0)});
    }
    s.validate();
    return s;
}

} // namespace

SyntheticSpec parse_synthetic_spec(std::istream& in) {
    try {
        return spec_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw InvalidConfig(std::string("synthetic spec: ") + e.what());
    }
}

SyntheticSpec read_synthetic_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FileError("cannot open " + path.string());
    }
    return parse_synthetic_spec(in);
}

void write_synthetic_spec(std::ostream& out, const SyntheticSpec& spec) {
    json j;
    j["processes"] = spec.processes;
    j["length"] = spec.length;
    j["noise_std"] = spec.noise_std;
    j["seed"] = spec.seed;
    j["components"] = json::array();
    for (const auto& c : spec.components) {
        j["components"].push_back(
            {{"process", c.process}, {"frequency", c.frequency}, {"amplitude", c.amplitude}, {"phase", c.phase}});
    }
    j["couplings"] = json::array();
    for (const auto& c : spec.couplings) {
        j["couplings"].push_back({{"source", c.source}, {"target", c.target}, {"lag", c.lag}, {"weight", c.weight}});
    }
    j["drives"] = json::array();
    for (const auto& d : spec.drives) {
        j["drives"].push_back({{"process", d.process}, {"stddev", d.stddev}, {"ar", d.ar}});
    }
    out << j.dump(2) << '\n';
}

SyntheticSpec planted_lag_preset(std::uint64_t seed, std::size_t length) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const double n = static_cast<double>(length);
    SyntheticSpec s;
    s.processes = 4;
    s.length = length;
    s.seed = seed;
    s.noise_std = 0.1;
    // one slow periodic component per process, period in timestamps
    const double periods[] = {48.0, 36.0, 60.0, 40.0};
    for (std::size_t i = 0; i < 4; ++i) {
        s.components.push_back({i, 2.0 * n / periods[i], 0.6, phase(rng)});
    }
    s.drives = {{0, 1.0, 0.5}, {1, 0.3, 0.5}, {2, 0.3, 0.5}, {3, 0.3, 0.5}};
    s.couplings = {{0, 1, 20, 0.9}, {0, 2, 40, 0.8}, {1, 3, 30, 0.8}};
    return s;
}

SyntheticSpec compound_periodicity_preset(std::uint64_t seed, std::size_t length) {
    std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const double n = static_cast<double>(length);
    SyntheticSpec s;
    s.processes = 4;
    s.length = length;
    s.seed = seed;
    s.noise_std = 0.1;
    const double slow[] = {64.0, 80.0, 72.0, 96.0};
    const double fast[] = {8.0, 6.0, 5.0, 7.0};
    for (std::size_t i = 0; i < 4; ++i) {
        s.components.push_back({i, 2.0 * n / slow[i], 0.4, phase(rng)});
        s.components.push_back({i, 2.0 * n / fast[i], i == 0 ? 0.4 : 1.0, phase(rng)});
    }
    // slow red-noise driver on the root; children carry their own fast cycles plus the lagged driver
    s.drives = {{0, 1.0, 0.8}, {1, 0.3, 0.0}, {2, 0.3, 0.0}, {3, 0.3, 0.0}};
    s.couplings = {{0, 1, 15, 0.8}, {0, 2, 25, 0.8}, {1, 3, 18, 0.8}};
    return s;
}

void write_predictions_csv(std::ostream& out, const std::vector<std::size_t>& window_starts, const Tensor& truth,
                           const Tensor& predictions) {
    if (!truth.same_shape(predictions) || truth.rank() != 3 || truth.dim(0) != window_starts.size()) {
        throw ShapeMismatch("predictions CSV: shapes disagree");
    }
    out << "window_start,process,h,y_true,y_pred\n" << std::setprecision(17);
    for (std::size_t b = 0; b < truth.dim(0); ++b) {
        for (std::size_t i = 0; i < truth.dim(1); ++i) {
            for (std::size_t h = 0; h < truth.dim(2); ++h) {
                out << window_starts[b] << ',' << i << ',' << h + 1 << ',' << truth(b, i, h) << ','
                    << predictions(b, i, h) << '\n';
            }
        }
    }
}

} // namespace pafnet::io
