#pragma once

#include "zrh/errors.hpp"
#include "zrh/parallel.hpp"
#include "zrh/profile.hpp"
#include "zrh/rng.hpp"
#include "zrh/sim.hpp"
#include "zrh/stats.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace zrh {

/// Limiting fraction of mass destroyed on crossing the origin: 1 (beta > 0),
/// alpha / (alpha + 2p - 1) (beta = 0), 0 (beta < 0 or alpha = 0).
inline double alpha_tilde(const ModelParams& prm) {
    if (prm.alpha == 0.0 || prm.beta < 0.0) return 0.0;
    if (prm.beta > 0.0) return 1.0;
    return prm.alpha / (prm.alpha + prm.drift());
}

/// Probability that the dual walk started at 0 is killed: alpha N^beta / (alpha N^beta + 2p - 1).
inline double alpha_tilde_N(const ModelParams& prm) {
    const double k = prm.kill_factor();
    return k / (k + prm.drift());
}

struct LinearCaseParams {
    ModelParams params;
    double alpha_tilde = 0.0;
    double alpha_tilde_N = 0.0;
};

inline LinearCaseParams linear_case(const ModelParams& prm) {
    prm.validate();
    return {prm, alpha_tilde(prm), alpha_tilde_N(prm)};
}

/// rho(t, u) = (1 - at 1{0 <= u < (2p-1) t}) rho0(u - (2p-1) t).
template <DensityFunction F>
double exact_linear_solution(const F& rho0, const LinearCaseParams& lin, double t, double u) {
    const double front = lin.params.drift() * t;
    const double damp = (u >= 0.0 && u < front) ? 1.0 - lin.alpha_tilde : 1.0;
    return damp * rho0(u - front);
}

/// Exact average of the linear-case solution over [a, b].
template <DensityFunction F>
double exact_linear_cell_average(const F& rho0, const LinearCaseParams& lin, double t, double a, double b) {
    const double front = lin.params.drift() * t;
    std::vector<double> cuts{a, b};
    for (double c : {0.0, front})
        if (c > a && c < b) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t k = 1; k < cuts.size(); ++k) {
        const double l = cuts[k - 1], r = cuts[k];
        if (!(r > l)) continue;
        const double mid = 0.5 * (l + r);
        const double damp = (mid >= 0.0 && mid < front) ? 1.0 - lin.alpha_tilde : 1.0;
        acc += damp * (r - l) * average_over(rho0, l - front, r - front);
    }
    return acc / (b - a);
}

template <DensityFunction F>
DensityProfile exact_linear_profile(const F& rho0, const LinearCaseParams& lin, double t, double u_min, double du, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double a = u_min + du * static_cast<double>(j);
        v[j] = exact_linear_cell_average(rho0, lin, t, a, a + du);
    }
    return DensityProfile(u_min, du, std::move(v));
}

// ---------------------------------------------------------------------------------------------
// Mean density ODE

enum class OdeMethod { euler, rk4 };

struct OdeOptions {
    OdeMethod method = OdeMethod::euler;
    /// Step; empty means the bound 0.5 / (N (1 + alpha N^beta)).
    std::optional<double> dt;
    double max_exit_fraction = 1e-3;
};

struct OdeResult {
    Window window;
    double t = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    /// rho^N_x(t) per site.
    std::vector<double> density;
    double initial_mass = 0.0;
    double killed = 0.0;
    double exited = 0.0;
    double min_value = 0.0;

    double at(std::int64_t x) const noexcept { return window.contains(x) ? density[window.index(x)] : 0.0; }
    double mass() const noexcept {
        double s = 0.0;
        for (double v : density) s += v;
        return s;
    }
    /// |sum rho + killed + exited - initial| / initial.
    double conservation_defect() const noexcept {
        const double m0 = std::max(initial_mass, 1e-300);
        return std::abs(mass() + killed + exited - initial_mass) / m0;
    }
    DensityProfile profile(std::int64_t N) const {
        const double n = static_cast<double>(N);
        return DensityProfile(static_cast<double>(window.x_min) / n, 1.0 / n, density);
    }
};

/// d/dt rho_x = N((1-p) rho_{x+1} + p rho_{x-1} - rho_x) - [x = 0] N alpha N^beta rho_0, from
/// rho_x(0) = rho0(x/N). Killed and exited mass ride along as extra components, so the
/// integrator keeps sum rho + killed + exited exactly constant up to rounding.
template <DensityFunction F>
OdeResult integrate_density_ode(const F& rho0, const ModelParams& prm, Window window, double t_end, const OdeOptions& opt = {}) {
    prm.validate();
    if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be >= 0");
    const double N = prm.scale(), k = prm.kill_factor(), p = prm.p;
    const double bound = 0.5 / (N * (1.0 + k));
    const double h_req = opt.dt.value_or(bound);
    if (!(h_req > 0.0) || h_req > bound * (1.0 + 1e-12))
        throw std::invalid_argument("ODE step " + std::to_string(h_req) + " exceeds the bound " + std::to_string(bound));
    const std::size_t n = window.size();
    const bool origin = window.contains(0);
    const std::size_t o = origin ? window.index(0) : 0;
    // state: n densities, then killed, exited
    std::vector<double> y(n + 2, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = rho0(static_cast<double>(window.site(i)) / N);
        if (!(y[i] >= 0.0) || !std::isfinite(y[i])) throw window_error("initial density must be finite and >= 0");
    }
    OdeResult res;
    res.window = window;
    for (std::size_t i = 0; i < n; ++i) res.initial_mass += y[i];

    auto rhs = [&](const std::vector<double>& s, std::vector<double>& d) {
        for (std::size_t i = 0; i < n; ++i) {
            const double left = i > 0 ? s[i - 1] : 0.0;
            const double right = i + 1 < n ? s[i + 1] : 0.0;
            d[i] = N * ((1 - p) * right + p * left - s[i]);
        }
        if (origin) d[o] -= N * k * s[o];
        d[n] = origin ? N * k * s[o] : 0.0;
        d[n + 1] = N * (p * s[n - 1] + (1 - p) * s[0]);
    };

    const std::size_t steps = t_end == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t_end / h_req - 1e-12));
    const double h = steps == 0 ? 0.0 : t_end / static_cast<double>(steps);
    std::vector<double> k1(n + 2), k2(n + 2), k3(n + 2), k4(n + 2), tmp(n + 2);
    for (std::size_t s = 0; s < steps; ++s) {
        if (opt.method == OdeMethod::euler) {
            rhs(y, k1);
            for (std::size_t i = 0; i < n + 2; ++i) y[i] += h * k1[i];
        } else {
            rhs(y, k1);
            for (std::size_t i = 0; i < n + 2; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
            rhs(tmp, k2);
            for (std::size_t i = 0; i < n + 2; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
            rhs(tmp, k3);
            for (std::size_t i = 0; i < n + 2; ++i) tmp[i] = y[i] + h * k3[i];
            rhs(tmp, k4);
            for (std::size_t i = 0; i < n + 2; ++i) y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        }
        if (y[n + 1] > opt.max_exit_fraction * std::max(res.initial_mass, 1e-300))
            throw leakage_error("density ODE lost mass through the window edges; enlarge the window");
    }
    res.t = t_end;
    res.dt = h;
    res.steps = steps;
    res.density.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
    res.killed = y[n];
    res.exited = y[n + 1];
    res.min_value = n ? *std::min_element(res.density.begin(), res.density.end()) : 0.0;
    if (res.min_value < -1e-12) throw std::logic_error("density ODE lost positivity");
    return res;
}

// ---------------------------------------------------------------------------------------------
// Killed random walk

struct KilledWalkOutcome {
    std::int64_t position = 0;
    bool killed = false;
    double kill_time = std::numeric_limits<double>::infinity();
    std::uint64_t jumps = 0;
    std::uint64_t visits_to_origin = 0;
};

/// Reversed-drift walk: left at N p, right at N (1 - p), killed at alpha N^{1+beta} while at 0.
/// Runs until t, or until killed.
inline KilledWalkOutcome killed_walk(std::int64_t x, double t, const ModelParams& prm, Rng& rng,
                                     std::optional<std::int64_t> escape_left = {}) {
    const double N = prm.scale(), k = prm.kill_factor();
    std::exponential_distribution<double> expo(1.0);
    KilledWalkOutcome out;
    out.position = x;
    double now = 0.0;
    if (x == 0) ++out.visits_to_origin;
    while (true) {
        const bool at0 = out.position == 0;
        const double rate = N * (1.0 + (at0 ? k : 0.0));
        now += expo(rng) / rate;
        if (now > t) break;
        if (at0 && k > 0.0 && uniform01(rng) * (1.0 + k) < k) {
            out.killed = true;
            out.kill_time = now;
            break;
        }
        out.position += uniform01(rng) < prm.p ? -1 : 1;
        ++out.jumps;
        if (out.position == 0) ++out.visits_to_origin;
        if (escape_left && out.position <= -*escape_left) break;
    }
    return out;
}

/// Monte Carlo mean of rho0(X_t / N) 1{tau > t} over killed walks started at x.
template <DensityFunction F>
MeanSe dual_rw_estimate(std::int64_t x, double t, const ModelParams& prm, const F& rho0, std::size_t replicas, std::uint64_t seed) {
    prm.validate();
    if (replicas == 0) throw sample_size_error("dual estimate needs at least one walk");
    const double N = prm.scale();
    // blocks of walks share a stream so the result does not depend on the thread count
    const std::size_t block = 256;
    const std::size_t blocks = (replicas + block - 1) / block;
    auto sums = parallel_map(blocks, [&](std::size_t b) {
        auto rng = make_stream(seed, b);
        std::vector<double> v;
        for (std::size_t i = b * block; i < std::min(replicas, (b + 1) * block); ++i) {
            const auto w = killed_walk(x, t, prm, rng);
            v.push_back(w.killed ? 0.0 : rho0(static_cast<double>(w.position) / N));
        }
        return v;
    });
    RunningStats s;
    for (const auto& v : sums)
        for (double d : v) s.add(d);
    return s.summary();
}

struct KillExperiment {
    MeanSe fraction;
    double expected = 0.0;
    std::size_t undecided = 0;
    double horizon = 0.0;
    std::int64_t escape_sites = 0;
};

/// Ten drift-times to the escape line 4 sqrt(N) sites left of the origin.
inline double default_kill_horizon(const ModelParams& prm) {
    const double N = prm.scale();
    return 10.0 * (4.0 * std::sqrt(N) + 10.0) / (N * prm.drift());
}

/// Fraction of walks from start_site killed before escaping 4 sqrt(N) sites to the left.
inline KillExperiment killing_probability_experiment(const ModelParams& prm, std::int64_t start_site, std::optional<double> horizon,
                                                     std::size_t replicas, std::uint64_t seed) {
    prm.validate();
    if (replicas == 0) throw sample_size_error("kill experiment needs at least one walk");
    KillExperiment ex;
    ex.expected = alpha_tilde_N(prm);
    ex.horizon = horizon.value_or(default_kill_horizon(prm));
    ex.escape_sites = static_cast<std::int64_t>(std::ceil(4.0 * std::sqrt(prm.scale())));
    const std::size_t block = 256;
    const std::size_t blocks = (replicas + block - 1) / block;
    auto res = parallel_map(blocks, [&](std::size_t b) {
        auto rng = make_stream(seed, b);
        std::pair<std::vector<double>, std::size_t> out{{}, 0};
        for (std::size_t i = b * block; i < std::min(replicas, (b + 1) * block); ++i) {
            const auto w = killed_walk(start_site, ex.horizon, prm, rng, ex.escape_sites);
            out.first.push_back(w.killed ? 1.0 : 0.0);
            if (!w.killed && w.position > -ex.escape_sites) ++out.second;
        }
        return out;
    });
    RunningStats s;
    for (const auto& [v, u] : res) {
        for (double d : v) s.add(d);
        ex.undecided += u;
    }
    ex.fraction = s.summary();
    return ex;
}

// ---------------------------------------------------------------------------------------------
// Two-point correlations

/// Occupations w_x(t) over the window for independent replicas (row = replica).
template <DensityFunction F>
std::vector<std::vector<Count>> sample_occupations(const F& rho0, const ModelParams& prm, const RateFunction& rate, Window window,
                                                   double t, std::size_t replicas, std::uint64_t seed, EngineOptions opt = {}) {
    return parallel_map(replicas, [&](std::size_t r) {
        auto rng = make_stream(seed, r);
        auto init = build_initial(rho0, prm, window, rng);
        EventEngine e(std::move(init), prm, rate, std::move(rng), opt);
        e.run(t);
        return e.configuration().occupation;
    });
}

/// Sample covariance of (w_x, w_y) across replicas with its jackknife standard error.
inline MeanSe correlation_field(const std::vector<std::vector<Count>>& samples, std::size_t ix, std::size_t iy) {
    const std::size_t n = samples.size();
    if (n < 100) throw sample_size_error("correlation estimates need at least 100 replicas");
    double sx = 0, sy = 0, sxy = 0;
    for (const auto& row : samples) {
        const auto a = static_cast<double>(row.at(ix)), b = static_cast<double>(row.at(iy));
        sx += a;
        sy += b;
        sxy += a * b;
    }
    const double nn = static_cast<double>(n);
    auto cov = [](double m, double sa, double sb, double sab) { return (sab - sa * sb / m) / (m - 1.0); };
    const double full = cov(nn, sx, sy, sxy);
    // leave-one-out covariances from the running sums
    double mean_loo = 0.0;
    std::vector<double> loo(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<double>(samples[i][ix]), b = static_cast<double>(samples[i][iy]);
        loo[i] = cov(nn - 1.0, sx - a, sy - b, sxy - a * b);
        mean_loo += loo[i];
    }
    mean_loo /= nn;
    double v = 0.0;
    for (double l : loo) v += (l - mean_loo) * (l - mean_loo);
    return {full, std::sqrt((nn - 1.0) / nn * v)};
}

struct CorrelationScan {
    std::size_t pairs = 0;
    std::size_t exceed = 0;
    double max_abs = 0.0;
    double max_z = 0.0;
    std::int64_t worst_x = 0, worst_y = 0;
};

/// All pairs among `sites` with |x - y| >= min_separation; counts |estimate| > band * SE.
inline CorrelationScan correlation_scan(const std::vector<std::vector<Count>>& samples, const Window& window,
                                        const std::vector<std::int64_t>& sites, std::int64_t min_separation, double band) {
    CorrelationScan sc;
    for (std::size_t a = 0; a < sites.size(); ++a) {
        for (std::size_t b = a + 1; b < sites.size(); ++b) {
            if (std::llabs(sites[a] - sites[b]) < min_separation) continue;
            const auto c = correlation_field(samples, window.index(sites[a]), window.index(sites[b]));
            ++sc.pairs;
            const double z = c.se > 0.0 ? std::abs(c.mean) / c.se : (c.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
            if (std::abs(c.mean) > band * c.se) ++sc.exceed;
            sc.max_abs = std::max(sc.max_abs, std::abs(c.mean));
            if (z > sc.max_z) {
                sc.max_z = z;
                sc.worst_x = sites[a];
                sc.worst_y = sites[b];
            }
        }
    }
    return sc;
}

} // namespace zrh
