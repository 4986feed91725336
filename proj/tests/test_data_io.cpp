#include "doctest.h"

#include <cmath>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pafnet/data_io.hpp"
#include "pafnet/errors.hpp"
#include "pafnet/signal_align.hpp"
#include "pafnet/spectral.hpp"

using namespace pafnet;
using namespace pafnet::io;

namespace {

DatasetManifest manifest_for(std::vector<std::string> channels, DropPolicy policy = DropPolicy::forward_fill) {
    DatasetManifest m;
    m.path = "inline.csv";
    m.channel_columns = std::move(channels);
    m.drop_policy = policy;
    return m;
}

SeriesPanel load_string(const std::string& text, const DatasetManifest& m, LoadReport* report = nullptr) {
    std::istringstream in(text);
    return load_csv(in, m, report);
}

} // namespace

TEST_CASE("key value files") {
    std::istringstream in("# comment\nmodel.K = 3\n\n  train.lr=0.01  # trailing\n");
    const auto kv = parse_key_values(in);
    CHECK(kv.size() == 2);
    CHECK(kv.at("model.K") == "3");
    CHECK(kv.at("train.lr") == "0.01");
    std::istringstream bad("just words\n");
    CHECK_THROWS_AS(parse_key_values(bad), InvalidConfig);
    std::ostringstream out;
    write_key_values(out, kv);
    std::istringstream again(out.str());
    CHECK(parse_key_values(again) == kv);
    CHECK(split_list(" a, b ,c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("csv loads manifest channels in manifest order") {
    auto m = manifest_for({"b", "a"});
    m.timestamp_column = "time";
    LoadReport report;
    const auto p = load_string("time,a,b,c\n1,1.5,2,x\n2,3,4,y\n", m, &report);
    CHECK(p.processes() == 2);
    CHECK(p.length() == 2);
    CHECK(p.values(0, 0) == 2.0);
    CHECK(p.values(1, 1) == 3.0);
    CHECK(p.channel_names == std::vector<std::string>{"b", "a"});
    CHECK(p.timestamps == std::vector<std::string>{"1", "2"});
    CHECK(report.rows_read == 2);
}

TEST_CASE("missing column") {
    CHECK_THROWS_AS(load_string("a,b\n1,2\n", manifest_for({"a", "z"})), MissingColumn);
}

TEST_CASE("non-numeric cell reports row and column") {
    try {
        load_string("a,b\n1,2\n3,oops\n", manifest_for({"a", "b"}));
        FAIL("expected NonNumericCell");
    } catch (const NonNumericCell& e) {
        CHECK(e.row() == 2);
        CHECK(e.column() == 1);
        CHECK(std::string(e.what()).find("oops") != std::string::npos);
    }
}

TEST_CASE("gap policies") {
    const std::string text = "a,b\n1,2\n,4\n5,NA\n7,8\n";
    LoadReport report;
    const auto filled = load_string(text, manifest_for({"a", "b"}), &report);
    CHECK(filled.length() == 4);
    CHECK(filled.values(0, 1) == 1.0);
    CHECK(filled.values(1, 2) == 4.0);
    CHECK(report.cells_filled == 2);
    const auto dropped = load_string(text, manifest_for({"a", "b"}, DropPolicy::drop_row), &report);
    CHECK(dropped.length() == 2);
    CHECK(dropped.values(0, 1) == 7.0);
    CHECK(report.rows_dropped == 2);
    CHECK_THROWS_AS(load_string(text, manifest_for({"a", "b"}, DropPolicy::error)), UnhandledGap);
    CHECK_THROWS_AS(load_string("a,b\n,1\n2,3\n", manifest_for({"a", "b"})), UnhandledGap);
}

TEST_CASE("expected row count") {
    auto m = manifest_for({"a"});
    m.expected_rows = 3;
    CHECK_THROWS_AS(load_string("a\n1\n2\n", m), RowCountMismatch);
}

TEST_CASE("manifest and csv round trip through files") {
    const auto dir = std::filesystem::temp_directory_path() / "pafnet_io_roundtrip";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    SeriesPanel p;
    p.values = Tensor({2, 3}, std::vector<double>{0.1, 1.0 / 3.0, -2e-9, 4.0, 5.5, 1e10});
    p.channel_names = {"x", "y"};
    {
        std::ofstream out(dir / "data.csv");
        write_panel_csv(out, p, "t");
    }
    DatasetManifest m = manifest_for({"x", "y"}, DropPolicy::error);
    m.path = "data.csv";
    m.expected_rows = 3;
    {
        std::ofstream out(dir / "manifest.txt");
        write_manifest(out, m);
    }
    const auto read = read_manifest(dir / "manifest.txt");
    CHECK(read.path == dir / "data.csv");
    CHECK(read.drop_policy == DropPolicy::error);
    const auto back = load_csv(read);
    CHECK(back.values.data() == p.values.data());
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(read_manifest(dir / "manifest.txt"), FileError);
}

TEST_CASE("synthetic generator is seeded and adds components") {
    SyntheticSpec s;
    s.processes = 2;
    s.length = 64;
    s.components = {{0, 4.0, 2.0, 0.0}};
    s.seed = 3;
    const auto data = generate_synthetic(s);
    for (std::size_t t = 0; t < 64; ++t) {
        CHECK(data.panel.values(0, t) ==
              doctest::Approx(2.0 * std::cos(std::numbers::pi * 4.0 * (2.0 * t + 1.0) / 128.0)));
        CHECK(data.panel.values(1, t) == 0.0);
    }
    s.noise_std = 0.5;
    CHECK(generate_synthetic(s).panel.values.data() == generate_synthetic(s).panel.values.data());
    auto other = s;
    other.seed = 4;
    CHECK(generate_synthetic(s).panel.values.data() != generate_synthetic(other).panel.values.data());
}

TEST_CASE("synthetic couplings plant lags") {
    SyntheticSpec s;
    s.processes = 2;
    s.length = 512;
    s.drives = {{0, 1.0, 0.0}};
    s.couplings = {{0, 1, 7, 1.0}};
    const auto data = generate_synthetic(s);
    for (std::size_t t = 7; t < 512; ++t) {
        CHECK(data.panel.values(1, t) == data.panel.values(0, t - 7));
    }
    const auto plan = align::select_neighbors(data.panel.values, 1);
    CHECK(plan.neighbor(1, 0) == 0);
    CHECK(plan.lag(1, 0) == SyntheticTruth::aligning_lag(s.couplings[0], 512));
}

TEST_CASE("synthetic spec validation and json round trip") {
    SyntheticSpec s;
    s.processes = 3;
    s.length = 100;
    s.couplings = {{0, 1, 2, 0.5}, {1, 2, 3, 0.5}, {2, 0, 1, 0.5}};
    CHECK_THROWS_AS(generate_synthetic(s), InvalidConfig);
    s.couplings.pop_back();
    s.components = {{2, 5.0, 1.0, 0.25}};
    s.drives = {{1, 0.5, 0.3}};
    s.noise_std = 0.2;
    s.seed = 99;
    std::ostringstream out;
    write_synthetic_spec(out, s);
    std::istringstream in(out.str());
    const auto back = parse_synthetic_spec(in);
    CHECK(back.processes == 3);
    CHECK(back.couplings.size() == 2);
    CHECK(back.components[0].phase == 0.25);
    CHECK(back.drives[0].ar == 0.3);
    CHECK(generate_synthetic(back).panel.values.data() == generate_synthetic(s).panel.values.data());
    std::istringstream broken("{\"processes\": \"three\"}");
    CHECK_THROWS_AS(parse_synthetic_spec(broken), InvalidConfig);
    s.drives[0].ar = 1.0;
    CHECK_THROWS_AS(generate_synthetic(s), InvalidConfig);
}

TEST_CASE("presets are valid") {
    for (const auto& s : {planted_lag_preset(1), compound_periodicity_preset(1)}) {
        CHECK_NOTHROW(s.validate());
        const auto data = generate_synthetic(s);
        CHECK(data.panel.processes() == 4);
        CHECK(data.panel.length() == 1600);
    }
}

TEST_CASE("predictions csv") {
    Tensor y({1, 2, 1}, std::vector<double>{1.0, 2.0});
    Tensor p({1, 2, 1}, std::vector<double>{0.5, 2.5});
    std::ostringstream out;
    write_predictions_csv(out, {40}, y, p);
    CHECK(out.str() == "window_start,process,h,y_true,y_pred\n40,0,1,1,0.5\n40,1,1,2,2.5\n");
}

TEST_CASE("empty synthetic spec gives zeros") {
    SyntheticSpec s;
    s.processes = 3;
    s.length = 20;
    const auto data = generate_synthetic(s);
    for (double v : data.panel.values.data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("a single component lands in its band") {
    SyntheticSpec s;
    s.processes = 1;
    s.length = 96;
    s.components = {{0, 30.0, 1.0, 0.0}};
    const auto data = generate_synthetic(s);
    const auto d = spectral::decompose(data.panel.series(0), 4);
    // coefficient 30 sits in the second of four 24-wide bands
    for (std::size_t f = 0; f < 4; ++f) {
        double energy = 0.0;
        for (double v : d.band(f)) {
            energy += v * v;
        }
        if (f == 1) {
            CHECK(energy == doctest::Approx(48.0));
        } else {
            CHECK(energy < 1e-20);
        }
    }
}

TEST_CASE("manifest row and channel expectations at dataset scale") {
    std::ostringstream csv;
    DatasetManifest m;
    for (int c = 0; c < 11; ++c) {
        m.channel_columns.push_back("q" + std::to_string(c));
        csv << (c ? "," : "") << "q" << c;
    }
    csv << '\n';
    for (int r = 0; r < 4377; ++r) {
        for (int c = 0; c < 11; ++c) {
            csv << (c ? "," : "") << r * 0.5 + c;
        }
        csv << '\n';
    }
    m.expected_rows = 4377;
    const auto p = load_string(csv.str(), m);
    CHECK(p.processes() == 11);
    CHECK(p.length() == 4377);
    m.expected_rows = 3958;
    CHECK_THROWS_AS(load_string(csv.str(), m), RowCountMismatch);
}
