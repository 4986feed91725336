#include "pafnet/signal_align.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <ostream>

namespace pafnet::align {

namespace {

// The FFTW planner is not thread-safe; execution of a finished plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<Complex> transform(std::span<const Complex> input, int sign) {
    const std::size_t n = input.size();
    std::vector<Complex> out(n);
    if (n == 0) {
        return out;
    }
    std::vector<Complex> in(input.begin(), input.end());
    auto* in_ptr = reinterpret_cast<fftw_complex*>(in.data());
    auto* out_ptr = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(n), in_ptr, out_ptr, sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

std::vector<Complex> cross_power(std::span<const Complex> fi, std::span<const Complex> fj,
                                 double eps) {
    std::vector<Complex> cross(fi.size());
    for (std::size_t k = 0; k < fi.size(); ++k) {
        const Complex c = std::conj(fi[k]) * fj[k];
        cross[k] = c / std::max(std::abs(c), eps);
    }
    return cross;
}

std::vector<double> correlogram_from_spectra(std::span<const Complex> fi,
                                             std::span<const Complex> fj, double eps) {
    const auto r = inverse_dft(cross_power(fi, fj, eps));
    std::vector<double> values(r.size());
    std::transform(r.begin(), r.end(), values.begin(), [](Complex c) { return c.real(); });
    return values;
}

std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < values.size(); ++t) {
        if (values[t] > values[best]) {
            best = t;
        }
    }
    return best;
}

} // namespace

std::vector<Complex> dft(std::span<const double> x) {
    std::vector<Complex> c(x.begin(), x.end());
    return transform(c, FFTW_FORWARD);
}

std::vector<Complex> dft(std::span<const Complex> x) { return transform(x, FFTW_FORWARD); }

std::vector<Complex> inverse_dft(std::span<const Complex> spectrum) {
    auto out = transform(spectrum, FFTW_BACKWARD);
    const double scale = out.empty() ? 1.0 : 1.0 / static_cast<double>(out.size());
    for (auto& v : out) {
        v *= scale;
    }
    return out;
}

std::size_t PhaseCorrelogram::peak_lag() const { return argmax_lowest(values); }

double PhaseCorrelogram::peak() const { return values.at(peak_lag()); }

PhaseCorrelogram phase_correlation(std::span<const double> x_i, std::span<const double> x_j,
                                   double eps) {
    if (x_i.size() != x_j.size()) {
        throw LengthMismatch("phase_correlation: lengths " + std::to_string(x_i.size()) +
                             " and " + std::to_string(x_j.size()) + " differ");
    }
    if (!(eps > 0.0)) {
        throw InvalidConfig("phase_correlation: eps must be positive");
    }
    const auto fi = dft(x_i);
    const auto fj = dft(x_j);
    return PhaseCorrelogram{correlogram_from_spectra(fi, fj, eps), 0, 0};
}

NeighborPlan select_neighbors(const Tensor& panel, std::size_t K, double eps) {
    if (panel.rank() != 2) {
        throw ShapeMismatch("select_neighbors: panel must be [M x T]");
    }
    const std::size_t m = panel.dim(0);
    const std::size_t t = panel.dim(1);
    if (K < 1 || m < 2 || K > m - 1) {
        throw KTooLarge("select_neighbors: K = " + std::to_string(K) + " with M = " +
                        std::to_string(m) + " (need 1 <= K <= M-1)");
    }

    std::vector<std::vector<Complex>> spectra(m);
    for (std::size_t i = 0; i < m; ++i) {
        spectra[i] = dft(panel.slice(i));
    }

    NeighborPlan plan;
    plan.processes = m;
    plan.neighbors_per_target = K;
    plan.length = t;
    plan.neighbors.reserve(m * K);
    plan.lags.reserve(m * K);
    plan.scores.reserve(m * K);

    struct Candidate {
        std::size_t index;
        std::size_t lag;
        double score;
    };

    for (std::size_t i = 0; i < m; ++i) {
        std::vector<Candidate> candidates;
        candidates.reserve(m - 1);
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) {
                continue;
            }
            const auto r = correlogram_from_spectra(spectra[i], spectra[j], eps);
            const std::size_t lag = argmax_lowest(r);
            candidates.push_back({j, lag, r[lag]});
        }
        // Candidates are generated in ascending j, so a stable sort keeps lower j first on ties.
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
        for (std::size_t k = 0; k < K; ++k) {
            plan.neighbors.push_back(candidates[k].index);
            plan.lags.push_back(candidates[k].lag);
            plan.scores.push_back(candidates[k].score);
        }
    }
    return plan;
}

NeighborPlan rebase(const NeighborPlan& plan, std::size_t window_length) {
    if (window_length == 0) {
        throw InvalidConfig("rebase: window length must be positive");
    }
    NeighborPlan out = plan;
    out.length = window_length;
    const auto n = static_cast<long long>(plan.length);
    const auto w = static_cast<long long>(window_length);
    for (auto& lag : out.lags) {
        long long signed_lag = static_cast<long long>(lag);
        if (signed_lag > n / 2) {
            signed_lag -= n;
        }
        lag = static_cast<std::size_t>(((signed_lag % w) + w) % w);
    }
    return out;
}

NeighborPlan without_shifts(const NeighborPlan& plan) {
    NeighborPlan out = plan;
    std::fill(out.lags.begin(), out.lags.end(), std::size_t{0});
    return out;
}

Tensor align(const Tensor& window, const NeighborPlan& plan) {
    if (window.rank() != 2) {
        throw PlanShapeMismatch("align: window must be [M x T]");
    }
    const std::size_t m = window.dim(0);
    const std::size_t t = window.dim(1);
    const std::size_t k = plan.neighbors_per_target;
    if (plan.processes != m || plan.length != t || plan.neighbors.size() != m * k ||
        plan.lags.size() != m * k) {
        throw PlanShapeMismatch("align: plan for M=" + std::to_string(plan.processes) +
                                ", T=" + std::to_string(plan.length) + " applied to window " +
                                window.shape_string());
    }
    Tensor out({m, k + 1, t});
    for (std::size_t i = 0; i < m; ++i) {
        auto target = window.slice(i);
        std::copy(target.begin(), target.end(), out.slice(i, 0).begin());
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t nb = plan.neighbor(i, r);
            const std::size_t lag = plan.lag(i, r);
            if (nb >= m || lag >= t) {
                throw PlanShapeMismatch("align: plan entry out of range");
            }
            auto src = window.slice(nb);
            auto dst = out.slice(i, r + 1);
            for (std::size_t s = 0; s < t; ++s) {
                dst[s] = src[(s + lag) % t];
            }
        }
    }
    return out;
}

void write_plan_csv(std::ostream& out, const NeighborPlan& plan) {
    out << "target,rank,neighbor,lag,score\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < plan.processes; ++i) {
        for (std::size_t r = 0; r < plan.neighbors_per_target; ++r) {
            out << i << ',' << r << ',' << plan.neighbor(i, r) << ',' << plan.lag(i, r) << ','
                << plan.score(i, r) << '\n';
        }
    }
}

} // namespace pafnet::align
