#include "oracles.hpp"

#include <cmath>
#include <numbers>

#include "pafnet/signal_align.hpp"

namespace oracle {

namespace {

constexpr double kPi = std::numbers::pi;

double alpha(std::size_t f, std::size_t T) {
    return f == 0 ? std::sqrt(1.0 / T) : std::sqrt(2.0 / T);
}

std::vector<double> softmax(std::vector<double> v) {
    double m = v[0];
    for (double x : v) {
        m = std::max(m, x);
    }
    double s = 0.0;
    for (double& x : v) {
        x = std::exp(x - m);
        s += x;
    }
    for (double& x : v) {
        x /= s;
    }
    return v;
}

} // namespace

std::vector<Complex> naive_dft(const std::vector<Complex>& x, bool inverse) {
    const std::size_t T = x.size();
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<Complex> out(T);
    for (std::size_t k = 0; k < T; ++k) {
        Complex acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            // reduce k*t mod T first so the angle stays small and exact
            const double angle = sign * 2.0 * kPi * static_cast<double>((k * t) % T) / T;
            acc += x[t] * Complex(std::cos(angle), std::sin(angle));
        }
        out[k] = inverse ? acc / static_cast<double>(T) : acc;
    }
    return out;
}

std::vector<double> naive_dct(const std::vector<double>& x) {
    const std::size_t T = x.size();
    std::vector<double> c(T, 0.0);
    for (std::size_t f = 0; f < T; ++f) {
        for (std::size_t s = 0; s < T; ++s) {
            c[f] += x[s] * std::cos(kPi * f * (2.0 * s + 1.0) / (2.0 * T));
        }
        c[f] *= alpha(f, T);
    }
    return c;
}

std::vector<double> naive_idct(const std::vector<double>& c) {
    const std::size_t T = c.size();
    std::vector<double> x(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < T; ++f) {
            x[t] += alpha(f, T) * c[f] * std::cos(kPi * f * (2.0 * t + 1.0) / (2.0 * T));
        }
    }
    return x;
}

std::vector<std::vector<double>> naive_bands(const std::vector<double>& x, std::size_t F) {
    const std::size_t T = x.size();
    const auto c = naive_dct(x);
    std::vector<std::vector<double>> bands(F, std::vector<double>(T, 0.0));
    std::size_t begin = 0;
    for (std::size_t f = 0; f < F; ++f) {
        const std::size_t width = T / F + (f < T % F ? 1 : 0);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t q = begin; q < begin + width; ++q) {
                bands[f][t] += alpha(q, T) * c[q] * std::cos(kPi * q * (2.0 * t + 1.0) / (2.0 * T));
            }
        }
        begin += width;
    }
    return bands;
}

std::vector<double> brute_phase_correlation(const std::vector<double>& xi, const std::vector<double>& xj,
                                            double eps) {
    const std::size_t T = xi.size();
    std::vector<Complex> a(xi.begin(), xi.end());
    std::vector<Complex> b(xj.begin(), xj.end());
    auto A = naive_dft(a);
    auto B = naive_dft(b);
    // cross-power normalization split evenly between the two factors
    for (std::size_t k = 0; k < T; ++k) {
        const double mag = std::max(std::abs(A[k] * std::conj(B[k])), eps);
        const double s = 1.0 / std::sqrt(mag);
        A[k] *= s;
        B[k] *= s;
    }
    const auto wa = naive_dft(A, true);
    const auto wb = naive_dft(B, true);
    std::vector<double> r(T, 0.0);
    for (std::size_t tau = 0; tau < T; ++tau) {
        Complex acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            acc += std::conj(wa[t]) * wb[(t + tau) % T];
        }
        r[tau] = acc.real();
    }
    return r;
}

std::vector<std::vector<double>> scalar_forward(const ScalarForward& cfg,
                                                const std::vector<std::vector<double>>& window,
                                                const std::vector<std::vector<std::size_t>>& neighbors,
                                                const std::vector<std::vector<std::size_t>>& lags,
                                                const pafnet::model::ModelParameters& params) {
    const std::size_t M = cfg.M, T = cfg.T, H = cfg.H, S = cfg.K + 1, F = cfg.F, P = cfg.P, D = cfg.D;
    const std::size_t Np = (T + P - 1) / P;
    const double rd = std::sqrt(static_cast<double>(D));

    // E[i][k][f][d]
    std::vector<std::vector<std::vector<std::vector<double>>>> E(
        M, std::vector<std::vector<std::vector<double>>>(S, std::vector<std::vector<double>>(F)));
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t k = 0; k < S; ++k) {
            std::vector<double> aligned(T);
            for (std::size_t t = 0; t < T; ++t) {
                if (k == 0) {
                    aligned[t] = window[i][t];
                } else {
                    const std::size_t tau = cfg.shift ? lags[i][k - 1] : 0;
                    aligned[t] = window[neighbors[i][k - 1]][(t + tau) % T];
                }
            }
            const auto bands = naive_bands(aligned, F);
            for (std::size_t f = 0; f < F; ++f) {
                std::vector<std::vector<double>> patch(Np, std::vector<double>(P, 0.0));
                for (std::size_t b = 0; b < Np; ++b) {
                    for (std::size_t p = 0; p < P; ++p) {
                        if (b * P + p < T) {
                            patch[b][p] = bands[f][b * P + p];
                        }
                    }
                }
                std::vector<std::vector<double>> Q(Np, std::vector<double>(D, 0.0)), Kp = Q, V = Q;
                for (std::size_t b = 0; b < Np; ++b) {
                    for (std::size_t d = 0; d < D; ++d) {
                        for (std::size_t p = 0; p < P; ++p) {
                            Q[b][d] += params.patch_q(f, d, p) * patch[b][p];
                            Kp[b][d] += params.patch_k(f, d, p) * patch[b][p];
                            V[b][d] += params.patch_v(f, d, p) * patch[b][p];
                        }
                    }
                }
                std::vector<double> e(D, 0.0);
                for (std::size_t b1 = 0; b1 < Np; ++b1) {
                    std::vector<double> logits(Np, 0.0);
                    for (std::size_t b2 = 0; b2 < Np; ++b2) {
                        for (std::size_t d = 0; d < D; ++d) {
                            logits[b2] += Q[b1][d] * Kp[b2][d];
                        }
                        logits[b2] /= rd;
                    }
                    const auto a = softmax(logits);
                    for (std::size_t b2 = 0; b2 < Np; ++b2) {
                        for (std::size_t d = 0; d < D; ++d) {
                            e[d] += a[b2] * V[b2][d] / Np;
                        }
                    }
                }
                E[i][k][f] = e;
            }
        }
    }

    std::vector<std::vector<double>> out(M, std::vector<double>(H, 0.0));
    for (std::size_t i = 0; i < M; ++i) {
        std::vector<double> pooled(D, 0.0);
        for (std::size_t f = 0; f < F; ++f) {
            const std::size_t c = cfg.per_frequency_cross ? f : 0;
            auto project = [&](const pafnet::Tensor& W, const std::vector<double>& x) {
                std::vector<double> y(D, 0.0);
                for (std::size_t r = 0; r < D; ++r) {
                    for (std::size_t s = 0; s < D; ++s) {
                        y[r] += W(c, r, s) * x[s];
                    }
                }
                return y;
            };
            const auto q = project(params.cross_q, E[i][0][f]);
            std::vector<std::pair<std::size_t, std::size_t>> entries;
            for (std::size_t k = 0; k < S; ++k) {
                if (cfg.mixed) {
                    for (std::size_t g = 0; g < F; ++g) {
                        entries.emplace_back(k, g);
                    }
                } else {
                    entries.emplace_back(k, f);
                }
            }
            std::vector<double> logits;
            for (auto [k, g] : entries) {
                const auto key = project(params.cross_k, E[i][k][g]);
                double dot = 0.0;
                for (std::size_t d = 0; d < D; ++d) {
                    dot += q[d] * key[d];
                }
                logits.push_back(dot / rd);
            }
            const auto a = softmax(logits);
            for (std::size_t n = 0; n < entries.size(); ++n) {
                const auto v = project(params.cross_v, E[i][entries[n].first][entries[n].second]);
                for (std::size_t d = 0; d < D; ++d) {
                    pooled[d] += a[n] * v[d];
                }
            }
        }
        std::vector<double> hidden(D, 0.0);
        for (std::size_t r = 0; r < D; ++r) {
            double z = params.head_b1(r);
            for (std::size_t s = 0; s < D; ++s) {
                z += params.head_w1(r, s) * pooled[s];
            }
            hidden[r] = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
        }
        for (std::size_t h = 0; h < H; ++h) {
            double y = params.head_b2(h);
            for (std::size_t s = 0; s < D; ++s) {
                y += params.head_w2(h, s) * hidden[s];
            }
            out[i][h] = y;
        }
    }
    return out;
}

GradientReport finite_difference_check(const pafnet::Tensor& window, const pafnet::align::NeighborPlan& plan,
                                       const pafnet::model::ModelParameters& params, const pafnet::Tensor& targets,
                                       const pafnet::model::ModelConfig& config, double step, double rel_tol,
                                       double abs_tol) {
    using pafnet::model::ModelParameters;
    const auto analytic = pafnet::model::backward(window, plan, params, targets, config);
    auto loss = [&](const ModelParameters& p) {
        return pafnet::model::mse_loss(pafnet::model::forward(window, plan, p, config), targets);
    };
    GradientReport report;
    ModelParameters probe = params;
    std::vector<const pafnet::Tensor*> grads;
    analytic.for_each([&](const char*, const pafnet::Tensor& t) { grads.push_back(&t); });
    std::size_t block = 0;
    probe.for_each([&](const char* name, pafnet::Tensor& t) {
        const pafnet::Tensor& g = *grads[block++];
        for (std::size_t n = 0; n < t.size(); ++n) {
            const double saved = t[n];
            t[n] = saved + step;
            const double up = loss(probe);
            t[n] = saved - step;
            const double down = loss(probe);
            t[n] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double err = std::abs(fd - g[n]);
            ++report.checked;
            report.worst_abs = std::max(report.worst_abs, err);
            if (err > abs_tol && err > rel_tol * std::abs(fd)) {
                if (report.failed++ == 0) {
                    report.first_failure = std::string(name) + "[" + std::to_string(n) + "]: analytic " +
                                           std::to_string(g[n]) + " vs fd " + std::to_string(fd);
                }
            }
        }
    });
    return report;
}

void randomize(pafnet::model::ModelParameters& params, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    params.for_each([&](const char*, pafnet::Tensor& t) {
        for (double& v : t.data()) {
            v = u(rng);
        }
    });
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) {
        x = g(rng);
    }
    return v;
}

} // namespace oracle
