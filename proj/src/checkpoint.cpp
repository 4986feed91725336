#include "pafnet/checkpoint.hpp"

#include "json.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

namespace pafnet::checkpoint {

namespace {

using nlohmann::json;

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes{};
    for (std::size_t b = 0; b < 8; ++b) {
        bytes[b] = static_cast<char>((v >> (8 * b)) & 0xffU);
    }
    out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) {
        throw CheckpointMismatch("checkpoint truncated");
    }
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < 8; ++b) {
        v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    }
    return v;
}

json config_to_json(const model::ModelConfig& c) {
    return {{"M", c.M}, {"T", c.T}, {"H", c.H}, {"K", c.K}, {"F", c.F}, {"P", c.P}, {"D", c.D},
            {"seed", c.seed}, {"ablation", std::string(model::to_string(c.ablation))},
            {"per_frequency_cross", c.per_frequency_cross}};
}

model::ModelConfig config_from_json(const json& j) {
    model::ModelConfig c;
    c.M = j.at("M");
    c.T = j.at("T");
    c.H = j.at("H");
    c.K = j.at("K");
    c.F = j.at("F");
    c.P = j.at("P");
    c.D = j.at("D");
    c.seed = j.at("seed");
    c.ablation = model::parse_ablation(j.at("ablation").get<std::string>());
    c.per_frequency_cross = j.at("per_frequency_cross");
    return c;
}

// Tensors stored after the header, in this order.
std::vector<std::pair<std::string, Tensor>> payload(const Checkpoint& ckpt) {
    std::vector<std::pair<std::string, Tensor>> out;
    ckpt.params.for_each([&](const char* name, const Tensor& t) { out.emplace_back(name, t); });
    const std::size_t m = ckpt.normalizer.channels();
    out.emplace_back("normalizer_mean", Tensor({m}, ckpt.normalizer.mean()));
    out.emplace_back("normalizer_std", Tensor({m}, ckpt.normalizer.stddev()));
    out.emplace_back("plan_scores", Tensor({ckpt.plan.processes, ckpt.plan.neighbors_per_target},
                                           ckpt.plan.scores));
    return out;
}

} // namespace

void write(std::ostream& out, const Checkpoint& ckpt) {
    const auto tensors = payload(ckpt);
    json header;
    header["format"] = kFormatTag;
    header["config"] = config_to_json(ckpt.config);
    header["per_window_plan"] = ckpt.per_window_plan;
    header["best_epoch"] = ckpt.best_epoch;
    header["plan"] = {{"processes", ckpt.plan.processes},
                      {"K", ckpt.plan.neighbors_per_target},
                      {"length", ckpt.plan.length},
                      {"neighbors", ckpt.plan.neighbors},
                      {"lags", ckpt.plan.lags}};
    header["tensors"] = json::array();
    for (const auto& [name, t] : tensors) {
        header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f64le"}});
    }
    const std::string text = header.dump();
    out << kFormatTag << '\n';
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
        for (double v : t.data()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) {
        throw StateError("failed to write checkpoint");
    }
}

Checkpoint read(std::istream& in) {
    std::string tag;
    if (!std::getline(in, tag) || tag != kFormatTag) {
        throw VersionMismatch("checkpoint format tag '" + tag.substr(0, 40) + "' is not '" +
                              std::string(kFormatTag) + "'");
    }
    const std::uint64_t header_len = get_u64(in);
    if (header_len > (1ULL << 30)) {
        throw CheckpointMismatch("checkpoint header length is implausible");
    }
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw CheckpointMismatch("checkpoint truncated in header");
    }

    Checkpoint ckpt;
    json header;
    try {
        header = json::parse(text);
        ckpt.config = config_from_json(header.at("config"));
        ckpt.per_window_plan = header.at("per_window_plan");
        ckpt.best_epoch = header.value("best_epoch", std::size_t{0});
        const auto& plan = header.at("plan");
        ckpt.plan.processes = plan.at("processes");
        ckpt.plan.neighbors_per_target = plan.at("K");
        ckpt.plan.length = plan.at("length");
        ckpt.plan.neighbors = plan.at("neighbors").get<std::vector<std::size_t>>();
        ckpt.plan.lags = plan.at("lags").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw CheckpointMismatch(std::string("checkpoint header: ") + e.what());
    } catch (const InputError& e) {
        throw CheckpointMismatch(std::string("checkpoint header: ") + e.what());
    }

    ckpt.params = model::ModelParameters::zeros(ckpt.config);
    std::vector<Tensor*> targets;
    ckpt.params.for_each([&](const char*, Tensor& t) { targets.push_back(&t); });
    const std::size_t m = ckpt.config.M;
    Tensor mean({m}), stddev({m});
    Tensor scores({ckpt.plan.processes, ckpt.plan.neighbors_per_target});
    targets.push_back(&mean);
    targets.push_back(&stddev);
    targets.push_back(&scores);

    const auto& directory = header.at("tensors");
    if (directory.size() != targets.size()) {
        throw CheckpointMismatch("checkpoint tensor count does not match its config");
    }
    for (std::size_t n = 0; n < targets.size(); ++n) {
        const auto shape = directory[n].at("shape").get<std::vector<std::size_t>>();
        if (shape != targets[n]->shape()) {
            throw CheckpointMismatch("checkpoint tensor '" + directory[n].at("name").get<std::string>() +
                                     "' has shape that does not match its config");
        }
        for (double& v : targets[n]->data()) {
            v = std::bit_cast<double>(get_u64(in));
        }
    }
    ckpt.normalizer = training::Normalizer(mean.data(), stddev.data());
    ckpt.plan.scores = scores.data();
    if (ckpt.plan.processes != m || ckpt.plan.neighbors_per_target != ckpt.config.K) {
        throw CheckpointMismatch("checkpoint plan does not match its config");
    }
    return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw StateError("cannot create checkpoint " + path.string());
    }
    write(out, ckpt);
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StateError("cannot open checkpoint " + path.string());
    }
    return read(in);
}

} // namespace pafnet::checkpoint
