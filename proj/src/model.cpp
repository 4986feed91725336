#include "pafnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pafnet/spectral.hpp"

namespace pafnet::model {

std::string_view to_string(Ablation ablation) {
    switch (ablation) {
    case Ablation::full:
        return "full";
    case Ablation::no_pa:
        return "no_pa";
    case Ablation::no_fi:
        return "no_fi";
    case Ablation::no_fd:
        return "no_fd";
    case Ablation::no_pa_fi:
        return "no_pa_fi";
    }
    return "full";
}

Ablation parse_ablation(std::string_view name) {
    for (Ablation a : {Ablation::full, Ablation::no_pa, Ablation::no_fi, Ablation::no_fd,
                       Ablation::no_pa_fi}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw InvalidConfig("unknown ablation '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (M < 2) {
        throw InvalidConfig("model needs at least two processes (M = " + std::to_string(M) + ")");
    }
    if (K < 1 || K > M - 1) {
        throw KTooLarge("K = " + std::to_string(K) + " must lie in [1, M-1] with M = " +
                        std::to_string(M));
    }
    if (F < 1 || F > T) {
        throw FTooLarge("F = " + std::to_string(F) + " must lie in [1, T] with T = " +
                        std::to_string(T));
    }
    if (P < 1 || P > T) {
        throw InvalidConfig("P = " + std::to_string(P) + " must lie in [1, T]");
    }
    if (D < 1 || H < 1 || T < 1) {
        throw InvalidConfig("D, H and T must be positive");
    }
}

Architecture apply_ablation(const ModelConfig& config) {
    Architecture arch;
    arch.bands = config.F;
    arch.patch_count = (config.T + config.P - 1) / config.P;
    switch (config.ablation) {
    case Ablation::full:
        break;
    case Ablation::no_pa:
        arch.shift_neighbors = false;
        break;
    case Ablation::no_fi:
        arch.bands = 1;
        break;
    case Ablation::no_fd:
        arch.mixed_cross = true;
        break;
    case Ablation::no_pa_fi:
        arch.shift_neighbors = false;
        arch.bands = 1;
        break;
    }
    arch.cross_sets = config.per_frequency_cross ? arch.bands : 1;
    return arch;
}

ModelParameters ModelParameters::zeros(const ModelConfig& config) {
    const auto arch = apply_ablation(config);
    const std::size_t f = arch.bands;
    const std::size_t c = arch.cross_sets;
    const std::size_t d = config.D;
    ModelParameters p;
    p.patch_q = Tensor({f, d, config.P});
    p.patch_k = Tensor({f, d, config.P});
    p.patch_v = Tensor({f, d, config.P});
    p.cross_q = Tensor({c, d, d});
    p.cross_k = Tensor({c, d, d});
    p.cross_v = Tensor({c, d, d});
    p.head_w1 = Tensor({d, d});
    p.head_b1 = Tensor({d});
    p.head_w2 = Tensor({config.H, d});
    p.head_b2 = Tensor({config.H});
    return p;
}

std::size_t ModelParameters::count() const {
    std::size_t n = 0;
    for_each([&](const char*, const Tensor& t) { n += t.size(); });
    return n;
}

bool ModelParameters::all_finite() const {
    bool ok = true;
    for_each([&](const char*, const Tensor& t) {
        for (double v : t.data()) {
            ok = ok && std::isfinite(v);
        }
    });
    return ok;
}

bool ModelParameters::operator==(const ModelParameters& other) const {
    bool equal = true;
    auto lhs = std::vector<const Tensor*>{};
    auto rhs = std::vector<const Tensor*>{};
    for_each([&](const char*, const Tensor& t) { lhs.push_back(&t); });
    other.for_each([&](const char*, const Tensor& t) { rhs.push_back(&t); });
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        equal = equal && lhs[i]->shape() == rhs[i]->shape() && lhs[i]->data() == rhs[i]->data();
    }
    return equal;
}

ModelParameters initialize(const ModelConfig& config) {
    config.validate();
    auto params = ModelParameters::zeros(config);
    std::mt19937_64 rng(config.seed);
    params.for_each([&](const char* name, Tensor& t) {
        // fan_in is the trailing axis of every weight; biases use the width of their layer input
        const std::string n = name;
        std::size_t fan_in = t.shape().back();
        if (n == "head_b1" || n == "head_b2") {
            fan_in = config.D;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : t.data()) {
            v = dist(rng);
        }
    });
    return params;
}

Tensor aligned_input(const Tensor& window, const align::NeighborPlan& plan, const ModelConfig& config) {
    const auto arch = apply_ablation(config);
    if (plan.neighbors_per_target != config.K) {
        throw PlanShapeMismatch("plan carries K = " + std::to_string(plan.neighbors_per_target) +
                                ", config expects K = " + std::to_string(config.K));
    }
    return arch.shift_neighbors ? align::align(window, plan)
                                : align::align(window, align::without_shifts(plan));
}

Tensor decompose_panel(const Tensor& aligned, std::size_t bands) {
    if (aligned.rank() != 3) {
        throw ShapeMismatch("decompose_panel: expected [M x S x T]");
    }
    const std::size_t m = aligned.dim(0);
    const std::size_t s = aligned.dim(1);
    const std::size_t t = aligned.dim(2);
    Tensor out({m, s, bands, t});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < s; ++k) {
            spectral::decompose_into(aligned.slice(i, k), bands, out.slice(i, k));
        }
    }
    return out;
}

Tensor patchify(const Tensor& bands, std::size_t patch_length) {
    if (bands.rank() != 4) {
        throw ShapeMismatch("patchify: expected [M x S x F x T]");
    }
    const std::size_t t = bands.dim(3);
    if (patch_length < 1 || patch_length > t) {
        throw InvalidConfig("patchify: P = " + std::to_string(patch_length) + " with T = " +
                            std::to_string(t));
    }
    const std::size_t np = (t + patch_length - 1) / patch_length;
    Tensor out({bands.dim(0), bands.dim(1), bands.dim(2), np, patch_length});
    for (std::size_t i = 0; i < bands.dim(0); ++i) {
        for (std::size_t k = 0; k < bands.dim(1); ++k) {
            for (std::size_t f = 0; f < bands.dim(2); ++f) {
                auto src = bands.slice(i, k, f);
                auto dst = out.slice(i, k, f);
                std::copy(src.begin(), src.end(), dst.begin()); // padding stays zero
            }
        }
    }
    return out;
}

Tensor prepare_patches(const Tensor& window, const align::NeighborPlan& plan, const ModelConfig& config) {
    const auto arch = apply_ablation(config);
    return patchify(decompose_panel(aligned_input(window, plan, config), arch.bands), config.P);
}

namespace {

struct Dims {
    std::size_t M, S, F, Np, P, D, H, C;
    bool mixed;

    std::size_t entries() const { return mixed ? S * F : S; }
};

Dims dims_of(const Tensor& patches, const ModelParameters& params, bool mixed) {
    if (patches.rank() != 5) {
        throw ShapeMismatch("expected patches [M x S x F x Np x P], got " + patches.shape_string());
    }
    Dims d{patches.dim(0), patches.dim(1), patches.dim(2), patches.dim(3), patches.dim(4),
           params.patch_q.dim(1), params.head_w2.dim(0), params.cross_q.dim(0), mixed};
    if (params.patch_q.dim(0) != d.F || params.patch_q.dim(2) != d.P ||
        !params.patch_k.same_shape(params.patch_q) || !params.patch_v.same_shape(params.patch_q)) {
        throw ShapeMismatch("patch projections " + params.patch_q.shape_string() +
                            " do not match patches " + patches.shape_string());
    }
    if (d.C != 1 && d.C != d.F) {
        throw ShapeMismatch("cross projection sets must be 1 or F");
    }
    return d;
}

struct Cache {
    std::vector<double> q, k, v; // [M S F Np D]
    std::vector<double> attn;    // [M S F Np Np]
    std::vector<double> emb;     // [M S F D]
    std::vector<double> cq;      // [M F D]
    std::vector<double> ck, cv;  // [M S F D]
    std::vector<double> ca;      // [M F E]
    std::vector<double> ea;      // [M F D]
    std::vector<double> pooled, z1, hidden; // [M D]
    std::vector<double> out;     // [M H]
};

inline std::size_t cset(const Dims& d, std::size_t f) { return d.C == 1 ? 0 : f; }

// y[D] = W[D x in] x[in]
inline void matvec(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += wr[c] * x[c];
        }
        y[r] = acc;
    }
}

// x[in] += W^T y
inline void matvec_t_add(const double* w, const double* y, double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w + r * cols;
        const double yr = y[r];
        for (std::size_t c = 0; c < cols; ++c) {
            x[c] += wr[c] * yr;
        }
    }
}

// G[rows x cols] += scale * y x^T
inline void outer_add(double* g, const double* y, const double* x, std::size_t rows, std::size_t cols,
                      double scale) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double yr = y[r] * scale;
        double* gr = g + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            gr[c] += yr * x[c];
        }
    }
}

inline void softmax(double* v, std::size_t n) {
    double mx = v[0];
    for (std::size_t i = 1; i < n; ++i) {
        mx = std::max(mx, v[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - mx);
        sum += v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        v[i] /= sum;
    }
}

inline double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

inline double gelu_grad(double z) {
    const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + z * pdf;
}

void run_patch_attention(const Tensor& patches, const ModelParameters& params, const Dims& d, Cache& c) {
    const std::size_t series = d.M * d.S;
    c.q.assign(series * d.F * d.Np * d.D, 0.0);
    c.k.assign(c.q.size(), 0.0);
    c.v.assign(c.q.size(), 0.0);
    c.attn.assign(series * d.F * d.Np * d.Np, 0.0);
    c.emb.assign(series * d.F * d.D, 0.0);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d.D));
    const double inv_np = 1.0 / static_cast<double>(d.Np);

    for (std::size_t is = 0; is < series; ++is) {
        for (std::size_t f = 0; f < d.F; ++f) {
            const std::size_t unit = is * d.F + f;
            const double* x = patches.data().data() + unit * d.Np * d.P;
            const double* wq = params.patch_q.data().data() + f * d.D * d.P;
            const double* wk = params.patch_k.data().data() + f * d.D * d.P;
            const double* wv = params.patch_v.data().data() + f * d.D * d.P;
            double* q = c.q.data() + unit * d.Np * d.D;
            double* k = c.k.data() + unit * d.Np * d.D;
            double* v = c.v.data() + unit * d.Np * d.D;
            double* a = c.attn.data() + unit * d.Np * d.Np;
            double* e = c.emb.data() + unit * d.D;
            for (std::size_t b = 0; b < d.Np; ++b) {
                matvec(wv, x + b * d.P, v + b * d.D, d.D, d.P);
            }
            if (d.Np == 1) {
                a[0] = 1.0;
                std::copy(v, v + d.D, e);
                continue;
            }
            for (std::size_t b = 0; b < d.Np; ++b) {
                matvec(wq, x + b * d.P, q + b * d.D, d.D, d.P);
                matvec(wk, x + b * d.P, k + b * d.D, d.D, d.P);
            }
            for (std::size_t b1 = 0; b1 < d.Np; ++b1) {
                double* row = a + b1 * d.Np;
                for (std::size_t b2 = 0; b2 < d.Np; ++b2) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < d.D; ++j) {
                        dot += q[b1 * d.D + j] * k[b2 * d.D + j];
                    }
                    row[b2] = dot * inv_sqrt_d;
                }
                softmax(row, d.Np);
                for (std::size_t b2 = 0; b2 < d.Np; ++b2) {
                    const double w = row[b2] * inv_np;
                    for (std::size_t j = 0; j < d.D; ++j) {
                        e[j] += w * v[b2 * d.D + j];
                    }
                }
            }
        }
    }
}

void run_cross_attention(const ModelParameters& params, const Dims& d, Cache& c) {
    const std::size_t ne = d.entries();
    c.cq.assign(d.M * d.F * d.D, 0.0);
    c.ck.assign(d.M * d.S * d.F * d.D, 0.0);
    c.cv.assign(c.ck.size(), 0.0);
    c.ca.assign(d.M * d.F * ne, 0.0);
    c.ea.assign(d.M * d.F * d.D, 0.0);
    c.pooled.assign(d.M * d.D, 0.0);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d.D));
    const std::size_t dd = d.D * d.D;

    for (std::size_t i = 0; i < d.M; ++i) {
        for (std::size_t k = 0; k < d.S; ++k) {
            for (std::size_t f = 0; f < d.F; ++f) {
                const std::size_t off = ((i * d.S + k) * d.F + f) * d.D;
                const std::size_t set = cset(d, f);
                matvec(params.cross_k.data().data() + set * dd, c.emb.data() + off, c.ck.data() + off, d.D, d.D);
                matvec(params.cross_v.data().data() + set * dd, c.emb.data() + off, c.cv.data() + off, d.D, d.D);
            }
        }
        for (std::size_t f = 0; f < d.F; ++f) {
            const std::size_t target_off = ((i * d.S + 0) * d.F + f) * d.D;
            double* q = c.cq.data() + (i * d.F + f) * d.D;
            matvec(params.cross_q.data().data() + cset(d, f) * dd, c.emb.data() + target_off, q, d.D, d.D);
            double* a = c.ca.data() + (i * d.F + f) * ne;
            for (std::size_t e = 0; e < ne; ++e) {
                const std::size_t k = d.mixed ? e / d.F : e;
                const std::size_t fe = d.mixed ? e % d.F : f;
                const double* key = c.ck.data() + ((i * d.S + k) * d.F + fe) * d.D;
                double dot = 0.0;
                for (std::size_t j = 0; j < d.D; ++j) {
                    dot += q[j] * key[j];
                }
                a[e] = dot * inv_sqrt_d;
            }
            softmax(a, ne);
            double* ea = c.ea.data() + (i * d.F + f) * d.D;
            for (std::size_t e = 0; e < ne; ++e) {
                const std::size_t k = d.mixed ? e / d.F : e;
                const std::size_t fe = d.mixed ? e % d.F : f;
                const double* val = c.cv.data() + ((i * d.S + k) * d.F + fe) * d.D;
                for (std::size_t j = 0; j < d.D; ++j) {
                    ea[j] += a[e] * val[j];
                }
            }
            double* pooled = c.pooled.data() + i * d.D;
            for (std::size_t j = 0; j < d.D; ++j) {
                pooled[j] += ea[j];
            }
        }
    }
}

void run_head(const ModelParameters& params, const Dims& d, Cache& c) {
    c.z1.assign(d.M * d.D, 0.0);
    c.hidden.assign(d.M * d.D, 0.0);
    c.out.assign(d.M * d.H, 0.0);
    for (std::size_t i = 0; i < d.M; ++i) {
        double* z = c.z1.data() + i * d.D;
        double* h = c.hidden.data() + i * d.D;
        double* y = c.out.data() + i * d.H;
        matvec(params.head_w1.data().data(), c.pooled.data() + i * d.D, z, d.D, d.D);
        for (std::size_t j = 0; j < d.D; ++j) {
            z[j] += params.head_b1[j];
            h[j] = gelu(z[j]);
        }
        matvec(params.head_w2.data().data(), h, y, d.H, d.D);
        for (std::size_t j = 0; j < d.H; ++j) {
            y[j] += params.head_b2[j];
        }
    }
}

void check_cross_input(const Tensor& embedding, const ModelParameters& params) {
    if (embedding.rank() != 4 || embedding.dim(3) != params.cross_q.dim(1)) {
        throw ShapeMismatch("cross_attention: embedding " + embedding.shape_string() +
                            " does not match projections " + params.cross_q.shape_string());
    }
    const std::size_t c = params.cross_q.dim(0);
    if (c != 1 && c != embedding.dim(2)) {
        throw ShapeMismatch("cross_attention: cross projection sets must be 1 or F");
    }
}

} // namespace

PatchAttentionOutput patch_attention(const Tensor& patches, const ModelParameters& params) {
    const Dims d = dims_of(patches, params, false);
    Cache c;
    run_patch_attention(patches, params, d, c);
    if (d.Np == 1) {
        std::fill(c.attn.begin(), c.attn.end(), 1.0);
    }
    return {Tensor({d.M, d.S, d.F, d.D}, std::move(c.emb)),
            Tensor({d.M, d.S, d.F, d.Np, d.Np}, std::move(c.attn))};
}

CrossAttentionOutput cross_attention(const Tensor& embedding, const ModelParameters& params,
                                     bool mixed_frequencies) {
    check_cross_input(embedding, params);
    Dims d{embedding.dim(0), embedding.dim(1), embedding.dim(2), 1, 0, embedding.dim(3),
           params.head_w2.dim(0), params.cross_q.dim(0), mixed_frequencies};
    Cache c;
    c.emb = embedding.data();
    run_cross_attention(params, d, c);
    return {Tensor({d.M, d.F, d.D}, std::move(c.ea)), Tensor({d.M, d.D}, std::move(c.pooled)),
            Tensor({d.M, d.F, d.entries()}, std::move(c.ca))};
}

Tensor head(const Tensor& pooled, const ModelParameters& params) {
    if (pooled.rank() != 2 || pooled.dim(1) != params.head_w1.dim(1)) {
        throw ShapeMismatch("head: pooled embedding " + pooled.shape_string() + " has wrong width");
    }
    Dims d{pooled.dim(0), 1, 1, 1, 0, pooled.dim(1), params.head_w2.dim(0), 1, false};
    Cache c;
    c.pooled = pooled.data();
    run_head(params, d, c);
    return Tensor({d.M, d.H}, std::move(c.out));
}

Tensor forward_patches(const Tensor& patches, const ModelParameters& params, const ModelConfig& config) {
    const auto arch = apply_ablation(config);
    const Dims d = dims_of(patches, params, arch.mixed_cross);
    Cache c;
    run_patch_attention(patches, params, d, c);
    run_cross_attention(params, d, c);
    run_head(params, d, c);
    return Tensor({d.M, d.H}, std::move(c.out));
}

Tensor forward(const Tensor& window, const align::NeighborPlan& plan, const ModelParameters& params,
               const ModelConfig& config) {
    return forward_patches(prepare_patches(window, plan, config), params, config);
}

double mse_loss(const Tensor& predictions, const Tensor& targets) {
    if (!predictions.same_shape(targets) || predictions.size() == 0) {
        throw ShapeMismatch("mse_loss: predictions " + predictions.shape_string() + " vs targets " +
                            targets.shape_string());
    }
    double sum = 0.0;
    for (std::size_t n = 0; n < predictions.size(); ++n) {
        const double r = predictions[n] - targets[n];
        sum += r * r;
    }
    return sum / static_cast<double>(predictions.size());
}

double mse_loss(const ForecastBatch& batch) { return mse_loss(batch.predictions, batch.targets); }

double accumulate_gradient(const Tensor& patches, const Tensor& targets, const ModelParameters& params,
                           const ModelConfig& config, ModelParameters& grad, double weight) {
    const auto arch = apply_ablation(config);
    const Dims d = dims_of(patches, params, arch.mixed_cross);
    if (targets.size() != d.M * d.H) {
        throw ShapeMismatch("accumulate_gradient: targets " + targets.shape_string() +
                            " do not match [M x H]");
    }
    Cache c;
    run_patch_attention(patches, params, d, c);
    run_cross_attention(params, d, c);
    run_head(params, d, c);

    const double norm = 1.0 / static_cast<double>(d.M * d.H);
    double loss = 0.0;
    std::vector<double> dy(d.M * d.H);
    for (std::size_t n = 0; n < dy.size(); ++n) {
        const double r = c.out[n] - targets[n];
        loss += r * r;
        dy[n] = 2.0 * r * norm * weight;
    }
    loss *= norm;

    // head
    std::vector<double> dpooled(d.M * d.D, 0.0);
    std::vector<double> dh(d.D);
    for (std::size_t i = 0; i < d.M; ++i) {
        const double* dyi = dy.data() + i * d.H;
        outer_add(grad.head_w2.data().data(), dyi, c.hidden.data() + i * d.D, d.H, d.D, 1.0);
        for (std::size_t j = 0; j < d.H; ++j) {
            grad.head_b2[j] += dyi[j];
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        matvec_t_add(params.head_w2.data().data(), dyi, dh.data(), d.H, d.D);
        for (std::size_t j = 0; j < d.D; ++j) {
            dh[j] *= gelu_grad(c.z1[i * d.D + j]);
            grad.head_b1[j] += dh[j];
        }
        outer_add(grad.head_w1.data().data(), dh.data(), c.pooled.data() + i * d.D, d.D, d.D, 1.0);
        matvec_t_add(params.head_w1.data().data(), dh.data(), dpooled.data() + i * d.D, d.D, d.D);
    }

    // cross attention; d(E_a[i, f]) = d(pooled[i]) for every band
    const std::size_t ne = d.entries();
    const std::size_t dd = d.D * d.D;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d.D));
    std::vector<double> demb(c.emb.size(), 0.0);
    std::vector<double> dkey(c.ck.size(), 0.0);
    std::vector<double> dval(c.cv.size(), 0.0);
    std::vector<double> da(ne), dl(ne), dq(d.D);
    for (std::size_t i = 0; i < d.M; ++i) {
        const double* dea = dpooled.data() + i * d.D;
        for (std::size_t f = 0; f < d.F; ++f) {
            const double* a = c.ca.data() + (i * d.F + f) * ne;
            const double* q = c.cq.data() + (i * d.F + f) * d.D;
            double weighted = 0.0;
            for (std::size_t e = 0; e < ne; ++e) {
                const std::size_t k = d.mixed ? e / d.F : e;
                const std::size_t fe = d.mixed ? e % d.F : f;
                const std::size_t off = ((i * d.S + k) * d.F + fe) * d.D;
                double dot = 0.0;
                for (std::size_t j = 0; j < d.D; ++j) {
                    dot += dea[j] * c.cv[off + j];
                    dval[off + j] += a[e] * dea[j];
                }
                da[e] = dot;
                weighted += a[e] * dot;
            }
            std::fill(dq.begin(), dq.end(), 0.0);
            for (std::size_t e = 0; e < ne; ++e) {
                const std::size_t k = d.mixed ? e / d.F : e;
                const std::size_t fe = d.mixed ? e % d.F : f;
                const std::size_t off = ((i * d.S + k) * d.F + fe) * d.D;
                dl[e] = a[e] * (da[e] - weighted) * inv_sqrt_d;
                for (std::size_t j = 0; j < d.D; ++j) {
                    dq[j] += dl[e] * c.ck[off + j];
                    dkey[off + j] += dl[e] * q[j];
                }
            }
            const std::size_t target_off = ((i * d.S + 0) * d.F + f) * d.D;
            const std::size_t set = cset(d, f);
            outer_add(grad.cross_q.data().data() + set * dd, dq.data(), c.emb.data() + target_off, d.D, d.D, 1.0);
            matvec_t_add(params.cross_q.data().data() + set * dd, dq.data(), demb.data() + target_off, d.D, d.D);
        }
    }
    for (std::size_t i = 0; i < d.M; ++i) {
        for (std::size_t k = 0; k < d.S; ++k) {
            for (std::size_t f = 0; f < d.F; ++f) {
                const std::size_t off = ((i * d.S + k) * d.F + f) * d.D;
                const std::size_t set = cset(d, f);
                outer_add(grad.cross_k.data().data() + set * dd, dkey.data() + off, c.emb.data() + off, d.D, d.D, 1.0);
                outer_add(grad.cross_v.data().data() + set * dd, dval.data() + off, c.emb.data() + off, d.D, d.D, 1.0);
                matvec_t_add(params.cross_k.data().data() + set * dd, dkey.data() + off, demb.data() + off, d.D, d.D);
                matvec_t_add(params.cross_v.data().data() + set * dd, dval.data() + off, demb.data() + off, d.D, d.D);
            }
        }
    }

    // patch attention
    const double inv_np = 1.0 / static_cast<double>(d.Np);
    std::vector<double> dv(d.Np * d.D), dqp(d.Np * d.D), dkp(d.Np * d.D), ds(d.Np);
    for (std::size_t unit = 0; unit < d.M * d.S * d.F; ++unit) {
        const std::size_t f = unit % d.F;
        const double* x = patches.data().data() + unit * d.Np * d.P;
        const double* de = demb.data() + unit * d.D;
        double* gq = grad.patch_q.data().data() + f * d.D * d.P;
        double* gk = grad.patch_k.data().data() + f * d.D * d.P;
        double* gv = grad.patch_v.data().data() + f * d.D * d.P;
        if (d.Np == 1) {
            outer_add(gv, de, x, d.D, d.P, 1.0);
            continue;
        }
        const double* q = c.q.data() + unit * d.Np * d.D;
        const double* k = c.k.data() + unit * d.Np * d.D;
        const double* v = c.v.data() + unit * d.Np * d.D;
        const double* a = c.attn.data() + unit * d.Np * d.Np;
        std::fill(dv.begin(), dv.end(), 0.0);
        std::fill(dqp.begin(), dqp.end(), 0.0);
        std::fill(dkp.begin(), dkp.end(), 0.0);
        // dO[b1] = dE / Np for every query row, so dA[b1][b2] = dE . V[b2] / Np for all b1
        for (std::size_t b2 = 0; b2 < d.Np; ++b2) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d.D; ++j) {
                dot += de[j] * v[b2 * d.D + j];
            }
            ds[b2] = dot * inv_np;
        }
        for (std::size_t b1 = 0; b1 < d.Np; ++b1) {
            const double* row = a + b1 * d.Np;
            double weighted = 0.0;
            for (std::size_t b2 = 0; b2 < d.Np; ++b2) {
                weighted += row[b2] * ds[b2];
                for (std::size_t j = 0; j < d.D; ++j) {
                    dv[b2 * d.D + j] += row[b2] * de[j] * inv_np;
                }
            }
            for (std::size_t b2 = 0; b2 < d.Np; ++b2) {
                const double dsc = row[b2] * (ds[b2] - weighted) * inv_sqrt_d;
                for (std::size_t j = 0; j < d.D; ++j) {
                    dqp[b1 * d.D + j] += dsc * k[b2 * d.D + j];
                    dkp[b2 * d.D + j] += dsc * q[b1 * d.D + j];
                }
            }
        }
        for (std::size_t b = 0; b < d.Np; ++b) {
            outer_add(gq, dqp.data() + b * d.D, x + b * d.P, d.D, d.P, 1.0);
            outer_add(gk, dkp.data() + b * d.D, x + b * d.P, d.D, d.P, 1.0);
            outer_add(gv, dv.data() + b * d.D, x + b * d.P, d.D, d.P, 1.0);
        }
    }
    return loss;
}

ModelParameters backward(const Tensor& window, const align::NeighborPlan& plan,
                         const ModelParameters& params, const Tensor& targets, const ModelConfig& config) {
    auto grad = ModelParameters::zeros(config);
    accumulate_gradient(prepare_patches(window, plan, config), targets, params, config, grad, 1.0);
    return grad;
}

} // namespace pafnet::model
