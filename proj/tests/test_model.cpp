#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pafnet/errors.hpp"
#include "pafnet/model.hpp"

using namespace pafnet;
using model::Ablation;
using model::ModelConfig;
using model::ModelParameters;

namespace {

ModelConfig tiny(Ablation a = Ablation::full) {
    ModelConfig c;
    c.M = 2;
    c.T = 8;
    c.H = 2;
    c.K = 1;
    c.F = 2;
    c.P = 4;
    c.D = 3;
    c.seed = 5;
    c.ablation = a;
    return c;
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    const auto v = oracle::random_vector(t.size(), rng);
    std::copy(v.begin(), v.end(), t.data().begin());
    return t;
}

align::NeighborPlan random_plan(std::size_t M, std::size_t K, std::size_t T, std::mt19937_64& rng) {
    align::NeighborPlan plan{M, K, T, {}, {}, {}};
    for (std::size_t i = 0; i < M; ++i) {
        std::vector<std::size_t> others;
        for (std::size_t j = 0; j < M; ++j) {
            if (j != i) {
                others.push_back(j);
            }
        }
        std::shuffle(others.begin(), others.end(), rng);
        for (std::size_t r = 0; r < K; ++r) {
            plan.neighbors.push_back(others[r]);
            plan.lags.push_back(rng() % T);
            plan.scores.push_back(1.0 - 0.1 * r);
        }
    }
    return plan;
}

oracle::ScalarForward scalar_config(const ModelConfig& c) {
    const auto arch = model::apply_ablation(c);
    return {c.M, c.T, c.H, c.K, arch.bands, c.P, c.D, arch.shift_neighbors, arch.mixed_cross,
            c.per_frequency_cross};
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.dim(0));
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        const auto s = t.slice(i);
        rows[i].assign(s.begin(), s.end());
    }
    return rows;
}

std::vector<std::vector<std::size_t>> plan_rows(const std::vector<std::size_t>& flat, std::size_t M) {
    std::vector<std::vector<std::size_t>> rows(M);
    const std::size_t K = flat.size() / M;
    for (std::size_t i = 0; i < M; ++i) {
        rows[i].assign(flat.begin() + i * K, flat.begin() + (i + 1) * K);
    }
    return rows;
}

void check_against_oracle(const ModelConfig& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto params = model::initialize(c);
    oracle::randomize(params, rng, 0.8);
    const auto window = random_tensor({c.M, c.T}, rng);
    const auto plan = random_plan(c.M, c.K, c.T, rng);
    const auto got = model::forward(window, plan, params, c);
    const auto want = oracle::scalar_forward(scalar_config(c), rows_of(window), plan_rows(plan.neighbors, c.M),
                                             plan_rows(plan.lags, c.M), params);
    REQUIRE(got.shape() == std::vector<std::size_t>{c.M, c.H});
    for (std::size_t i = 0; i < c.M; ++i) {
        for (std::size_t h = 0; h < c.H; ++h) {
            CHECK(std::abs(got(i, h) - want[i][h]) < 1e-9);
        }
    }
}

} // namespace

TEST_CASE("config validation") {
    auto c = tiny();
    CHECK_NOTHROW(c.validate());
    c.K = 2;
    CHECK_THROWS_AS(c.validate(), KTooLarge);
    c = tiny();
    c.F = 9;
    CHECK_THROWS_AS(c.validate(), FTooLarge);
    c = tiny();
    c.P = 9;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = tiny();
    c.M = 1;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("ablation names round trip") {
    for (auto a : {Ablation::full, Ablation::no_pa, Ablation::no_fi, Ablation::no_fd, Ablation::no_pa_fi}) {
        CHECK(model::parse_ablation(model::to_string(a)) == a);
    }
    CHECK_THROWS_AS(model::parse_ablation("w/o everything"), InvalidConfig);
}

TEST_CASE("apply_ablation") {
    auto c = tiny();
    c.F = 4;
    c.T = 10;
    c.P = 4;
    auto arch = model::apply_ablation(c);
    CHECK(arch.bands == 4);
    CHECK(arch.patch_count == 3);
    CHECK(arch.shift_neighbors);
    CHECK_FALSE(arch.mixed_cross);
    c.ablation = Ablation::no_pa;
    CHECK_FALSE(model::apply_ablation(c).shift_neighbors);
    c.ablation = Ablation::no_fi;
    CHECK(model::apply_ablation(c).bands == 1);
    c.ablation = Ablation::no_fd;
    CHECK(model::apply_ablation(c).mixed_cross);
    c.ablation = Ablation::no_pa_fi;
    arch = model::apply_ablation(c);
    CHECK(arch.bands == 1);
    CHECK_FALSE(arch.shift_neighbors);
    c.ablation = Ablation::full;
    c.per_frequency_cross = true;
    CHECK(model::apply_ablation(c).cross_sets == 4);
}

TEST_CASE("initialization is seeded, bounded and shaped") {
    const auto c = tiny();
    const auto a = model::initialize(c);
    const auto b = model::initialize(c);
    CHECK(a == b);
    auto other = c;
    other.seed = 6;
    CHECK_FALSE(a == model::initialize(other));
    CHECK(a.patch_q.shape() == std::vector<std::size_t>{2, 3, 4});
    CHECK(a.cross_q.shape() == std::vector<std::size_t>{1, 3, 3});
    CHECK(a.head_w2.shape() == std::vector<std::size_t>{2, 3});
    CHECK(a.head_b2.shape() == std::vector<std::size_t>{2});
    for (double v : a.patch_v.data()) {
        CHECK(std::abs(v) <= 0.5);
    }
    for (double v : a.head_w1.data()) {
        CHECK(std::abs(v) <= 1.0 / std::sqrt(3.0));
    }
    CHECK(a.count() == 3 * 2 * 3 * 4 + 3 * 9 + 9 + 3 + 6 + 2);
}

TEST_CASE("patchify zero-pads the last patch") {
    Tensor bands({1, 1, 1, 5});
    for (std::size_t t = 0; t < 5; ++t) {
        bands(0, 0, 0, t) = t + 1.0;
    }
    const auto p = model::patchify(bands, 2);
    REQUIRE(p.shape() == std::vector<std::size_t>{1, 1, 1, 3, 2});
    CHECK(p(0, 0, 0, 0, 0) == 1.0);
    CHECK(p(0, 0, 0, 1, 1) == 4.0);
    CHECK(p(0, 0, 0, 2, 0) == 5.0);
    CHECK(p(0, 0, 0, 2, 1) == 0.0);
}

TEST_CASE("no_fi keeps the raw aligned series as its single band") {
    std::mt19937_64 rng(8);
    const auto aligned = random_tensor({2, 2, 8}, rng);
    const auto bands = model::decompose_panel(aligned, 1);
    for (std::size_t n = 0; n < aligned.size(); ++n) {
        CHECK(bands[n] == doctest::Approx(aligned[n]).epsilon(1e-12));
    }
}

TEST_CASE("no_pa keeps neighbors but drops shifts") {
    std::mt19937_64 rng(9);
    const auto window = random_tensor({2, 8}, rng);
    const align::NeighborPlan plan{2, 1, 8, {1, 0}, {3, 5}, {1.0, 1.0}};
    const auto a = model::aligned_input(window, plan, tiny(Ablation::no_pa));
    for (std::size_t t = 0; t < 8; ++t) {
        CHECK(a(0, 1, t) == window(1, t));
        CHECK(a(1, 1, t) == window(0, t));
    }
}

TEST_CASE("patch attention with a single patch is the value projection") {
    std::mt19937_64 rng(10);
    auto c = tiny();
    c.P = 8;
    auto params = model::initialize(c);
    const auto patches = random_tensor({2, 2, 2, 1, 8}, rng);
    const auto out = model::patch_attention(patches, params);
    for (std::size_t f = 0; f < 2; ++f) {
        CHECK(out.weights(0, 1, f, 0, 0) == 1.0);
        for (std::size_t d = 0; d < 3; ++d) {
            double v = 0.0;
            for (std::size_t p = 0; p < 8; ++p) {
                v += params.patch_v(f, d, p) * patches(0, 1, f, 0, p);
            }
            CHECK(out.embedding(0, 1, f, d) == doctest::Approx(v).epsilon(1e-12));
        }
    }
}

TEST_CASE("identical patches attend uniformly") {
    std::mt19937_64 rng(12);
    auto params = model::initialize(tiny());
    oracle::randomize(params, rng);
    Tensor patches({1, 1, 2, 2, 4});
    for (std::size_t f = 0; f < 2; ++f) {
        for (std::size_t p = 0; p < 4; ++p) {
            patches(0, 0, f, 0, p) = patches(0, 0, f, 1, p) = 0.3 * p - 0.2 * f;
        }
    }
    const auto out = model::patch_attention(patches, params);
    for (std::size_t f = 0; f < 2; ++f) {
        for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t b = 0; b < 2; ++b) {
                CHECK(out.weights(0, 0, f, a, b) == doctest::Approx(0.5));
            }
        }
        for (std::size_t d = 0; d < 3; ++d) {
            double v = 0.0;
            for (std::size_t p = 0; p < 4; ++p) {
                v += params.patch_v(f, d, p) * patches(0, 0, f, 0, p);
            }
            CHECK(out.embedding(0, 0, f, d) == doctest::Approx(v).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention rows sum to one and pooled is the band sum") {
    std::mt19937_64 rng(14);
    for (auto a : {Ablation::full, Ablation::no_fd}) {
        auto c = tiny(a);
        c.M = 3;
        c.K = 2;
        c.F = 3;
        c.T = 11;
        c.P = 3;
        auto params = model::initialize(c);
        oracle::randomize(params, rng, 2.0);
        const auto window = random_tensor({3, 11}, rng);
        const auto plan = random_plan(3, 2, 11, rng);
        const auto patches = model::prepare_patches(window, plan, c);
        const auto pa = model::patch_attention(patches, params);
        const std::size_t Np = 4;
        for (std::size_t row = 0; row < pa.weights.size() / Np; ++row) {
            double s = 0.0;
            for (std::size_t b = 0; b < Np; ++b) {
                s += pa.weights[row * Np + b];
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
        const bool mixed = a == Ablation::no_fd;
        const auto ca = model::cross_attention(pa.embedding, params, mixed);
        const std::size_t entries = mixed ? 3 * 3 : 3;
        CHECK(ca.weights.shape() == std::vector<std::size_t>{3, 3, entries});
        for (std::size_t row = 0; row < 9; ++row) {
            double s = 0.0;
            for (std::size_t e = 0; e < entries; ++e) {
                s += ca.weights[row * entries + e];
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t d = 0; d < c.D; ++d) {
                double sum = 0.0;
                for (std::size_t f = 0; f < 3; ++f) {
                    sum += ca.per_band(i, f, d);
                }
                CHECK(ca.pooled(i, d) == sum);
            }
        }
    }
}

TEST_CASE("forward matches the scalar oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        check_against_oracle(tiny(), seed);
    }
    SUBCASE("ablations") {
        for (auto a : {Ablation::no_pa, Ablation::no_fi, Ablation::no_fd, Ablation::no_pa_fi}) {
            check_against_oracle(tiny(a), 40);
        }
    }
    SUBCASE("larger shapes") {
        ModelConfig c = tiny();
        c.M = 4;
        c.K = 3;
        c.F = 3;
        c.T = 13;
        c.P = 5;
        c.D = 4;
        c.H = 3;
        check_against_oracle(c, 41);
        c.per_frequency_cross = true;
        check_against_oracle(c, 42);
        c.P = 13;
        check_against_oracle(c, 43);
    }
}

TEST_CASE("single band makes the mixed cross attention identical") {
    std::mt19937_64 rng(15);
    auto full = tiny();
    full.F = 1;
    auto mixed = full;
    mixed.ablation = Ablation::no_fd;
    auto params = model::initialize(full);
    const auto window = random_tensor({2, 8}, rng);
    const auto plan = random_plan(2, 1, 8, rng);
    const auto a = model::forward(window, plan, params, full);
    const auto b = model::forward(window, plan, params, mixed);
    CHECK(a.data() == b.data());
}

TEST_CASE("band decoupling holds for the full model only") {
    std::mt19937_64 rng(16);
    auto params = model::initialize(tiny());
    oracle::randomize(params, rng);
    Tensor emb = random_tensor({2, 2, 2, 3}, rng);
    const auto base = model::cross_attention(emb, params, false);
    const auto base_mixed = model::cross_attention(emb, params, true);
    Tensor poked = emb;
    poked(1, 1, 0, 2) += 0.75;
    const auto after = model::cross_attention(poked, params, false);
    const auto after_mixed = model::cross_attention(poked, params, true);
    for (std::size_t d = 0; d < 3; ++d) {
        CHECK(after.per_band(1, 1, d) == base.per_band(1, 1, d));
    }
    bool changed = false;
    for (std::size_t d = 0; d < 3; ++d) {
        changed = changed || after_mixed.per_band(1, 1, d) != base_mixed.per_band(1, 1, d);
    }
    CHECK(changed);
}

TEST_CASE("permuting processes permutes the predictions") {
    std::mt19937_64 rng(18);
    ModelConfig c = tiny();
    c.M = 3;
    c.K = 2;
    c.T = 12;
    auto params = model::initialize(c);
    oracle::randomize(params, rng);
    const auto window = random_tensor({3, 12}, rng);
    const auto plan = random_plan(3, 2, 12, rng);
    const std::vector<std::size_t> perm{2, 0, 1}; // new index n holds old process perm[n]
    std::vector<std::size_t> inverse(3);
    for (std::size_t n = 0; n < 3; ++n) {
        inverse[perm[n]] = n;
    }
    Tensor pw({3, 12});
    align::NeighborPlan pp = plan;
    for (std::size_t n = 0; n < 3; ++n) {
        std::copy(window.slice(perm[n]).begin(), window.slice(perm[n]).end(), pw.slice(n).begin());
        for (std::size_t r = 0; r < 2; ++r) {
            pp.neighbors[n * 2 + r] = inverse[plan.neighbor(perm[n], r)];
            pp.lags[n * 2 + r] = plan.lag(perm[n], r);
        }
    }
    const auto a = model::forward(window, plan, params, c);
    const auto b = model::forward(pw, pp, params, c);
    for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t h = 0; h < c.H; ++h) {
            CHECK(b(n, h) == a(perm[n], h));
        }
    }
}

TEST_CASE("forward is deterministic") {
    std::mt19937_64 rng(19);
    const auto c = tiny();
    const auto window = random_tensor({2, 8}, rng);
    const auto plan = random_plan(2, 1, 8, rng);
    const auto a = model::forward(window, plan, model::initialize(c), c);
    const auto b = model::forward(window, plan, model::initialize(c), c);
    CHECK(a.data() == b.data());
}

TEST_CASE("mse loss examples") {
    Tensor p({1, 2, 2}, std::vector<double>{1.0, -1.0, 2.0, 0.0});
    Tensor y({1, 2, 2}, 0.0);
    CHECK(model::mse_loss(p, y) == doctest::Approx(1.5));
    CHECK(model::mse_loss(y, y) == 0.0);
    Tensor ones({2, 2, 3}, 1.0), zeros({2, 2, 3}, 0.0);
    CHECK(model::mse_loss(model::ForecastBatch{ones, zeros}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(model::mse_loss(ones, y), ShapeMismatch);
}

TEST_CASE("gradients match finite differences") {
    std::mt19937_64 rng(20);
    std::vector<ModelConfig> configs;
    for (auto a : {Ablation::full, Ablation::no_pa, Ablation::no_fi, Ablation::no_fd, Ablation::no_pa_fi}) {
        configs.push_back(tiny(a));
    }
    ModelConfig wide = tiny();
    wide.M = 3;
    wide.K = 2;
    wide.F = 3;
    wide.T = 10;
    wide.P = 3;
    wide.per_frequency_cross = true;
    configs.push_back(wide);
    wide.ablation = Ablation::no_fd;
    configs.push_back(wide);
    for (const auto& c : configs) {
        CAPTURE(model::to_string(c.ablation));
        auto params = model::initialize(c);
        oracle::randomize(params, rng, 0.7);
        const auto window = random_tensor({c.M, c.T}, rng);
        const auto targets = random_tensor({c.M, c.H}, rng);
        const auto plan = random_plan(c.M, c.K, c.T, rng);
        const auto report = oracle::finite_difference_check(window, plan, params, targets, c);
        CAPTURE(report.first_failure);
        CHECK(report.checked == params.count());
        CHECK(report.failed == 0);
    }
}

TEST_CASE("zero value projections silence the query gradients") {
    std::mt19937_64 rng(22);
    const auto c = tiny();
    auto params = model::initialize(c);
    params.patch_v.fill(0.0);
    params.cross_v.fill(0.0);
    const auto window = random_tensor({2, 8}, rng);
    const auto targets = random_tensor({2, 2}, rng);
    const auto plan = random_plan(2, 1, 8, rng);
    const auto g = model::backward(window, plan, params, targets, c);
    for (double v : g.patch_q.data()) {
        CHECK(v == 0.0);
    }
    for (double v : g.cross_q.data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("accumulated gradient is linear in the example weight") {
    std::mt19937_64 rng(24);
    const auto c = tiny();
    const auto params = model::initialize(c);
    const auto window = random_tensor({2, 8}, rng);
    const auto targets = random_tensor({2, 2}, rng);
    const auto plan = random_plan(2, 1, 8, rng);
    const auto patches = model::prepare_patches(window, plan, c);
    auto once = ModelParameters::zeros(c);
    auto twice = ModelParameters::zeros(c);
    model::accumulate_gradient(patches, targets, params, c, once);
    model::accumulate_gradient(patches, targets, params, c, twice, 0.5);
    model::accumulate_gradient(patches, targets, params, c, twice, 0.5);
    const auto g = model::backward(window, plan, params, targets, c);
    std::vector<const Tensor*> a, b, d;
    once.for_each([&](const char*, const Tensor& t) { a.push_back(&t); });
    twice.for_each([&](const char*, const Tensor& t) { b.push_back(&t); });
    g.for_each([&](const char*, const Tensor& t) { d.push_back(&t); });
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (std::size_t n = 0; n < a[k]->size(); ++n) {
            CHECK((*a[k])[n] == doctest::Approx((*b[k])[n]).epsilon(1e-12));
            CHECK((*a[k])[n] == (*d[k])[n]);
        }
    }
}
