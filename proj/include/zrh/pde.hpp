#pragma once

#include "zrh/errors.hpp"
#include "zrh/profile.hpp"
#include "zrh/sim.hpp"
#include "zrh/test_function.hpp"
#include "zrh/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace zrh {

/// F(rho) = (2p - 1) Phi(rho). Non-decreasing, so upwinding is the Godunov flux.
class FluxModel {
public:
    FluxModel(ThermoTablePtr thermo, double p) : thermo_(std::move(thermo)), p_(p) {
        if (!thermo_) throw std::invalid_argument("flux needs a thermo table");
        if (!(p > 0.5 && p <= 1.0)) throw std::invalid_argument("p must lie in (1/2, 1]");
        linear_ = thermo_->rate().is_linear();
    }

    double phi(double rho) const {
        // rounding in the update can leave -1e-17 where the exact value is 0
        if (rho < 0.0 && rho > -1e-12) rho = 0.0;
        return linear_ ? rho : thermo_->phi_interp(rho);
    }
    double operator()(double rho) const { return (2.0 * p_ - 1.0) * phi(rho); }
    /// R(zeta), the inverse of Phi.
    double density_for(double zeta) const { return linear_ ? zeta : thermo_->phi_inverse(zeta); }
    double lipschitz() const noexcept { return (2.0 * p_ - 1.0) * thermo_->rate().lipschitz(); }
    double p() const noexcept { return p_; }
    double drift() const noexcept { return 2.0 * p_ - 1.0; }
    const ThermoTable& thermo() const noexcept { return *thermo_; }
    const ThermoTablePtr& thermo_ptr() const noexcept { return thermo_; }

private:
    ThermoTablePtr thermo_;
    double p_;
    bool linear_ = false;
};

struct WholeLine {};
struct DirichletDensity {
    std::function<double(double)> rho;
};
struct ZeroFlux {};
using BoundarySpec = std::variant<WholeLine, DirichletDensity, ZeroFlux>;

/// All time slices of a finite-volume run on uniform cells [u_min + j du, u_min + (j+1) du).
struct PdeGrid {
    double u_min = 0.0;
    double du = 0.0;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<std::vector<double>> slices;
    /// Flux through the left and right domain edges during step n (slice n -> n+1).
    std::vector<double> inflow;
    std::vector<double> outflow;
    /// Flux removed at the origin during step n (composed solutions only).
    std::vector<double> sink;
    /// Boundary density used at step n (Dirichlet runs).
    std::vector<double> boundary;
    /// Steps where some value left [lower, upper] of the maximum principle.
    std::size_t max_principle_violations = 0;
    double lower_bound = 0.0;
    double upper_bound = 0.0;

    std::size_t cells() const noexcept { return slices.empty() ? 0 : slices.front().size(); }
    std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }
    double u_max() const noexcept { return u_min + du * static_cast<double>(cells()); }
    double center(std::size_t j) const noexcept { return u_min + du * (static_cast<double>(j) + 0.5); }
    double T() const noexcept { return times.empty() ? 0.0 : times.back(); }

    double mass(std::size_t n) const noexcept {
        double s = 0.0;
        for (double v : slices[n]) s += v;
        return s * du;
    }

    /// Cell index containing u (clamped).
    std::size_t cell_of(double u) const noexcept {
        const double j = std::floor((u - u_min) / du + 1e-9);
        return static_cast<std::size_t>(std::clamp(j, 0.0, static_cast<double>(cells() - 1)));
    }

    /// Slice at time t (nearest stored time), as a profile.
    DensityProfile profile_at(double t) const {
        std::size_t n = 0;
        for (std::size_t k = 1; k < times.size(); ++k)
            if (std::abs(times[k] - t) < std::abs(times[n] - t)) n = k;
        return DensityProfile(u_min, du, slices[n]);
    }

    /// Largest relative mass defect |M_n - M_0 - sum (in - out - sink) dt| over all steps.
    double mass_defect() const noexcept {
        const double m0 = mass(0);
        double acc = m0, worst = 0.0;
        const double scale = std::max({std::abs(m0), 1e-300});
        for (std::size_t n = 0; n + 1 < slices.size(); ++n) {
            acc += dt * (inflow[n] - outflow[n] - (sink.empty() ? 0.0 : sink[n]));
            worst = std::max(worst, std::abs(mass(n + 1) - acc) / std::max(scale, std::abs(acc)));
        }
        return worst;
    }
};

struct PdeOptions {
    double u_min = -2.0;
    double u_max = 2.0;
    double du = 1.0 / 200.0;
    double cfl = 0.9;
    /// Fixed time step; empty means the largest step with CFL number <= cfl that divides T.
    std::optional<double> dt;
};

namespace detail {

inline std::size_t cell_count(double a, double b, double du) {
    const double n = (b - a) / du;
    const auto k = static_cast<std::size_t>(std::llround(n));
    if (k == 0 || std::abs(n - static_cast<double>(k)) > 1e-6)
        throw std::invalid_argument("interval length is not a whole number of cells");
    return k;
}

inline std::pair<std::size_t, double> time_steps(double T, double du, double lipschitz, const PdeOptions& opt) {
    if (!(T >= 0.0)) throw std::invalid_argument("T must be >= 0");
    if (!(du > 0.0)) throw std::invalid_argument("du must be positive");
    const double dt_max = lipschitz > 0.0 ? opt.cfl * du / lipschitz : T;
    if (opt.dt) {
        if (*opt.dt * lipschitz / du > 0.9 + 1e-12)
            throw cfl_error("dt = " + std::to_string(*opt.dt) + " breaks the CFL bound 0.9");
        const auto n = static_cast<std::size_t>(std::llround(T / *opt.dt));
        return {n, n == 0 ? 0.0 : T / static_cast<double>(n)};
    }
    if (T == 0.0) return {0, 0.0};
    const auto n = static_cast<std::size_t>(std::ceil(T / dt_max - 1e-12));
    return {std::max<std::size_t>(n, 1), T / static_cast<double>(std::max<std::size_t>(n, 1))};
}

template <class F>
std::vector<double> cell_averages(const F& rho0, double u_min, double du, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double a = u_min + du * static_cast<double>(j);
        v[j] = average_over(rho0, a, a + du);
        if (!(v[j] >= 0.0) || !std::isfinite(v[j])) throw std::invalid_argument("initial density must be finite and >= 0");
    }
    return v;
}

/// Upwind march. left_state(n) gives the ghost density at step n, or nullopt for zero influx.
template <class Left>
PdeGrid march(std::vector<double> v0, double u_min, double du, double T, const FluxModel& flux, const PdeOptions& opt,
              Left&& left_state, double lo, double hi) {
    PdeGrid g;
    g.u_min = u_min;
    g.du = du;
    const auto [steps, dt] = time_steps(T, du, flux.lipschitz(), opt);
    g.dt = dt;
    g.lower_bound = lo;
    g.upper_bound = hi;
    const std::size_t n = v0.size();
    g.times.reserve(steps + 1);
    g.slices.reserve(steps + 1);
    g.times.push_back(0.0);
    g.slices.push_back(std::move(v0));
    const double lam = dt / du;
    const double slack = 1e-12 * std::max(1.0, std::abs(hi));
    std::vector<double> f(n);
    for (std::size_t s = 0; s < steps; ++s) {
        const auto& cur = g.slices.back();
        for (std::size_t j = 0; j < n; ++j) f[j] = flux(cur[j]);
        const std::optional<double> ghost = left_state(s);
        const double fin = ghost ? flux(*ghost) : 0.0;
        if (ghost) g.boundary.push_back(*ghost);
        std::vector<double> next(n);
        bool bad = false;
        for (std::size_t j = 0; j < n; ++j) {
            next[j] = cur[j] - lam * (f[j] - (j == 0 ? fin : f[j - 1]));
            if (!std::isfinite(next[j])) throw cfl_error("non-finite density at step " + std::to_string(s));
            bad = bad || next[j] < lo - slack || next[j] > hi + slack;
        }
        g.max_principle_violations += bad;
        g.inflow.push_back(fin);
        g.outflow.push_back(f[n - 1]);
        g.times.push_back(dt * static_cast<double>(s + 1));
        g.slices.push_back(std::move(next));
    }
    if (steps > 0) g.times.back() = T;
    return g;
}

inline std::pair<double, double> data_range(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    return {*std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end())};
}

} // namespace detail

/// Whole line truncated to [u_min, u_max]; the left ghost keeps the first initial cell value.
template <DensityFunction F>
PdeGrid solve_whole_line(const F& rho0, const FluxModel& flux, double T, const PdeOptions& opt = {}) {
    const std::size_t n = detail::cell_count(opt.u_min, opt.u_max, opt.du);
    auto v0 = detail::cell_averages(rho0, opt.u_min, opt.du, n);
    const auto [lo, hi] = detail::data_range(v0);
    const double far_left = v0.front();
    return detail::march(std::move(v0), opt.u_min, opt.du, T, flux, opt,
                         [far_left](std::size_t) { return std::optional<double>(far_left); }, lo, hi);
}

/// Half line [0, u_max] with a Dirichlet density or zero influx at u = 0.
template <DensityFunction F>
PdeGrid solve_half_line(const F& rho0, const FluxModel& flux, const BoundarySpec& boundary, double T, const PdeOptions& opt = {}) {
    if (std::holds_alternative<WholeLine>(boundary)) throw std::invalid_argument("half-line solve needs a boundary condition");
    const std::size_t n = detail::cell_count(0.0, opt.u_max, opt.du);
    auto v0 = detail::cell_averages(rho0, 0.0, opt.du, n);
    auto [lo, hi] = detail::data_range(v0);
    lo = std::min(lo, 0.0);
    const auto [steps, dt] = detail::time_steps(T, opt.du, flux.lipschitz(), opt);
    if (const auto* d = std::get_if<DirichletDensity>(&boundary)) {
        std::vector<double> rb(steps);
        for (std::size_t s = 0; s < steps; ++s) {
            rb[s] = d->rho(dt * static_cast<double>(s));
            if (!(rb[s] >= 0.0) || !std::isfinite(rb[s])) throw std::invalid_argument("boundary density must be finite and >= 0");
            lo = std::min(lo, rb[s]);
            hi = std::max(hi, rb[s]);
        }
        return detail::march(std::move(v0), 0.0, opt.du, T, flux, opt,
                             [&rb](std::size_t s) { return std::optional<double>(rb[s]); }, lo, hi);
    }
    return detail::march(std::move(v0), 0.0, opt.du, T, flux, opt, [](std::size_t) { return std::optional<double>(); }, lo, hi);
}

/// R((2p-1) Phi(rho_left) / (2p-1+alpha)).
inline double boundary_density(double rho_left, double alpha, const FluxModel& flux) {
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (rho_left == 0.0) return 0.0;
    if (alpha == 0.0) return rho_left;
    return flux.density_for(flux.drift() * flux.phi(rho_left) / (flux.drift() + alpha));
}

inline std::function<double(double)> boundary_density_from_left_trace(std::function<double(double)> left_trace, double alpha,
                                                                      const FluxModel& flux) {
    return [left_trace = std::move(left_trace), alpha, &flux](double t) { return boundary_density(left_trace(t), alpha, flux); };
}

/// Glued solution: rho_L on u < 0 from the whole-line problem, rho_R on u >= 0 from the half-line
/// problem whose boundary is fixed by the destruction regime.
template <DensityFunction F>
PdeGrid compose_theorem_solution(double beta, const F& rho0, const ModelParams& params, const FluxModel& flux, double T,
                                 const PdeOptions& opt = {}) {
    auto whole = solve_whole_line(rho0, flux, T, opt);
    if (params.alpha == 0.0 || beta < 0.0) {
        whole.sink.assign(whole.steps(), 0.0);
        return whole;
    }
    if (!(opt.u_min < 0.0 && opt.u_max > 0.0)) throw std::invalid_argument("composition needs 0 inside (u_min, u_max)");
    const std::size_t j0 = detail::cell_count(opt.u_min, 0.0, opt.du);
    std::vector<double> trace(whole.steps());
    for (std::size_t s = 0; s < trace.size(); ++s) trace[s] = whole.slices[s][j0 - 1];

    auto right_rho0 = [&](double u) { return rho0(u); };
    PdeOptions ropt = opt;
    ropt.dt = whole.dt > 0.0 ? std::optional<double>(whole.dt) : std::nullopt;
    PdeGrid right;
    if (beta == 0.0) {
        std::vector<double> rb(trace.size());
        for (std::size_t s = 0; s < rb.size(); ++s) rb[s] = boundary_density(trace[s], params.alpha, flux);
        const double dt = whole.dt;
        DirichletDensity d{[rb, dt](double t) {
            const auto s = static_cast<std::size_t>(std::llround(t / dt));
            return rb[std::min(s, rb.size() - 1)];
        }};
        right = solve_half_line(right_rho0, flux, d, T, ropt);
    } else {
        right = solve_half_line(right_rho0, flux, ZeroFlux{}, T, ropt);
    }

    PdeGrid out = whole;
    out.boundary = right.boundary;
    out.sink.resize(whole.steps());
    out.max_principle_violations = whole.max_principle_violations + right.max_principle_violations;
    for (std::size_t s = 0; s < out.slices.size(); ++s)
        std::copy(right.slices[s].begin(), right.slices[s].end(), out.slices[s].begin() + static_cast<std::ptrdiff_t>(j0));
    for (std::size_t s = 0; s < whole.steps(); ++s) {
        out.outflow[s] = right.outflow[s];
        out.sink[s] = flux(out.slices[s][j0 - 1]) - right.inflow[s];
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Entropy inequality checks

struct KruzhkovEntry {
    std::size_t test = 0;
    double c = 0.0;
    /// 0: absolute-value form; +1 / -1: semi-Kruzhkov (.)^+ / (.)^- with the boundary term.
    int sign = 0;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct KruzhkovReport {
    std::vector<KruzhkovEntry> entries;
    bool pass = true;
    double M = 0.0;
    /// Smallest M on the search grid for which every entry passes (Dirichlet only).
    std::optional<double> smallest_passing_M;
    /// int_0^T |F(rho(t, u_k))| dt for the first cells (zero-flux boundary condition).
    std::vector<double> boundary_flux;
    double worst_margin = std::numeric_limits<double>::infinity();
};

/// Bumps tiling the interior of the grid: three time windows times five space windows.
inline std::vector<TestFunction> default_test_family(const PdeGrid& g, const BoundarySpec& boundary) {
    const double T = g.T();
    const bool touch_origin = std::holds_alternative<DirichletDensity>(boundary);
    const double a = g.u_min, b = g.u_max(), len = b - a;
    std::vector<TestFunction> out;
    const double tw[3][2] = {{0.1, 0.9}, {0.02, 0.55}, {0.45, 0.98}};
    for (const auto& w : tw) {
        for (int k = 0; k < 5; ++k) {
            double lo = a + len * (0.05 + 0.18 * k), hi = lo + 0.3 * len;
            hi = std::min(hi, b - 0.02 * len);
            if (touch_origin && k == 0) lo = -0.1 * len;
            out.push_back(bump(w[0] * T, w[1] * T, lo, hi));
        }
    }
    return out;
}

inline std::vector<double> default_c_values(double rho_max) {
    std::vector<double> c(9);
    for (int k = 0; k < 9; ++k) c[static_cast<std::size_t>(k)] = 1.2 * rho_max * k / 8.0;
    return c;
}

/// M = a0 (alpha + 2p - 1) / (2p - 1).
inline double default_boundary_constant(const FluxModel& flux, double alpha) {
    return flux.thermo().rate().lipschitz() * (alpha + flux.drift()) / flux.drift();
}

namespace detail {

struct KruzhkovParts {
    double bulk = 0.0;
    double boundary = 0.0;
};

/// Bulk integral by midpoint in u and trapezoid in t; sign 0 = |.|, +1 = (.)^+, -1 = (.)^-.
inline KruzhkovParts kruzhkov_integral(const PdeGrid& g, const FluxModel& flux, const TestFunction& h, double c, int sign,
                                       const std::vector<double>* boundary_rho) {
    const double fc = flux(c);
    auto part = [sign](double r) { return sign == 0 ? std::abs(r) : sign > 0 ? std::max(r, 0.0) : std::max(-r, 0.0); };
    std::size_t j_lo = g.cell_of(h.u_lo), j_hi = g.cell_of(h.u_hi);
    KruzhkovParts out;
    for (std::size_t n = 0; n < g.times.size(); ++n) {
        const double t = g.times[n];
        if (t <= h.t_lo || t >= h.t_hi) continue;
        const double w = (n == 0 || n + 1 == g.times.size()) ? 0.5 : 1.0;
        double s = 0.0;
        for (std::size_t j = j_lo; j <= j_hi; ++j) {
            const double u = g.center(j);
            const double rho = g.slices[n][j];
            s += h.d_t(t, u) * part(rho - c) + h.d_u(t, u) * part(flux(rho) - fc);
        }
        out.bulk += w * s * g.du * g.dt;
        if (boundary_rho && n < boundary_rho->size()) out.boundary += w * h(t, 0.0) * part((*boundary_rho)[n] - c) * g.dt;
    }
    return out;
}

/// int int |f| over the support of h, midpoint rule on an 80 x 80 grid.
inline double l1_norm(const std::function<double(double, double)>& f, const TestFunction& h) {
    const double dt = (h.t_hi - h.t_lo) / 80.0, du = (h.u_hi - h.u_lo) / 80.0;
    double s = 0.0;
    for (int i = 0; i < 80; ++i)
        for (int k = 0; k < 80; ++k) s += std::abs(f(h.t_lo + dt * (i + 0.5), h.u_lo + du * (k + 0.5)));
    return s * dt * du;
}

} // namespace detail

/// Discrete entropy inequalities for the given boundary regime. Passing means every (H, c)
/// integral is >= -tol with tol = du rho_scale (||d_t H||_1 + L ||d_u H||_1).
inline KruzhkovReport kruzhkov_check(const PdeGrid& g, const FluxModel& flux, const BoundarySpec& boundary,
                                     const std::vector<TestFunction>& tests, const std::vector<double>& c_values, double M,
                                     const std::vector<double>& m_search = {}) {
    KruzhkovReport rep;
    rep.M = M;
    const bool dirichlet = std::holds_alternative<DirichletDensity>(boundary);
    const bool half = !std::holds_alternative<WholeLine>(boundary);
    double rho_scale = 0.0;
    for (const auto& s : g.slices)
        for (double v : s) rho_scale = std::max(rho_scale, v);
    for (double c : c_values) rho_scale = std::max(rho_scale, c);
    rho_scale = std::max(rho_scale, 1.0);

    std::vector<double> rb;
    if (dirichlet) {
        const auto& d = std::get<DirichletDensity>(boundary);
        for (double t : g.times) rb.push_back(d.rho(t));
    }

    struct Pending {
        KruzhkovEntry e;
        detail::KruzhkovParts parts;
    };
    std::vector<Pending> all;
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const auto& h = tests[i];
        if (h.vanishes()) continue;
        if (h.t_lo < 0.0 || h.t_hi > g.T() + 1e-12) throw support_error("test function time support leaves [0, T]");
        const double lo_allowed = dirichlet ? -std::numeric_limits<double>::infinity() : g.u_min;
        if (h.u_lo < lo_allowed - 1e-12 || h.u_hi > g.u_max() + 1e-12 || (half && !dirichlet && h.u_lo < 0.0))
            throw support_error("test function space support leaves the domain");
        const double tol = g.du * rho_scale * (detail::l1_norm(h.d_t, h) + flux.lipschitz() * detail::l1_norm(h.d_u, h));
        for (double c : c_values) {
            for (int sign : dirichlet ? std::vector<int>{+1, -1} : std::vector<int>{0}) {
                Pending p;
                p.e.test = i;
                p.e.c = c;
                p.e.sign = sign;
                p.e.tolerance = tol;
                p.parts = detail::kruzhkov_integral(g, flux, h, c, sign, dirichlet ? &rb : nullptr);
                all.push_back(p);
            }
        }
    }
    auto evaluate = [&](double m) {
        bool ok = true;
        for (const auto& p : all) ok = ok && p.parts.bulk + m * p.parts.boundary >= -p.e.tolerance;
        return ok;
    };
    for (auto& p : all) {
        p.e.value = p.parts.bulk + M * p.parts.boundary;
        p.e.pass = p.e.value >= -p.e.tolerance;
        rep.pass = rep.pass && p.e.pass;
        rep.worst_margin = std::min(rep.worst_margin, p.e.value + p.e.tolerance);
        rep.entries.push_back(p.e);
    }
    if (dirichlet) {
        for (double m : m_search) {
            if (evaluate(m)) {
                rep.smallest_passing_M = m;
                break;
            }
        }
    }
    if (half) {
        for (std::size_t k = 0; k < std::min<std::size_t>(3, g.cells()); ++k) {
            double s = 0.0;
            for (std::size_t n = 0; n + 1 < g.times.size(); ++n) s += std::abs(flux(g.slices[n][k])) * g.dt;
            rep.boundary_flux.push_back(s);
        }
    }
    return rep;
}

/// 0, M/8, ..., 4 M: the grid scanned for the smallest passing boundary constant.
inline std::vector<double> boundary_constant_grid(double M) {
    std::vector<double> v;
    for (int k = 0; k <= 32; ++k) v.push_back(M * k / 8.0);
    return v;
}

struct FluxTrace {
    std::vector<double> t;
    /// d/dt of the mass on u >= 0, with outflow through the far edge added back.
    std::vector<double> mass_rate;
    /// F at the trace: the cell left of 0 on the line, the boundary datum (or first cell) on the half line.
    std::vector<double> trace_flux;

    /// |int mass_rate - int trace_flux| / |int trace_flux| over the whole run.
    double cumulative_relative_gap() const noexcept {
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double dt = (k + 1 < t.size() ? t[k + 1] : t[k] + (k > 0 ? t[k] - t[k - 1] : 0.0)) - t[k];
            a += mass_rate[k] * dt;
            b += trace_flux[k] * dt;
        }
        return b == 0.0 ? std::abs(a) : std::abs(a - b) / std::abs(b);
    }

    double max_abs_gap() const noexcept {
        double m = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k) m = std::max(m, std::abs(mass_rate[k] - trace_flux[k]));
        return m;
    }
};

/// Both sides of d/dt int_{u>0} (rho - rho_0) = F(rho(t, 0)) per time step.
inline FluxTrace boundary_flux_trace(const PdeGrid& g, const FluxModel& flux) {
    FluxTrace ft;
    const bool line = g.u_min < 0.0;
    const std::size_t j0 = line ? g.cell_of(0.0) : 0;
    if (line && std::abs(g.u_min + g.du * static_cast<double>(j0)) > 1e-9 * g.du)
        throw std::invalid_argument("u = 0 is not a cell edge of the grid");
    auto right_mass = [&](std::size_t n) {
        double s = 0.0;
        for (std::size_t j = j0; j < g.cells(); ++j) s += g.slices[n][j];
        return s * g.du;
    };
    for (std::size_t n = 0; n + 1 < g.times.size(); ++n) {
        ft.t.push_back(g.times[n]);
        ft.mass_rate.push_back((right_mass(n + 1) - right_mass(n)) / g.dt + g.outflow[n] + (g.sink.empty() ? 0.0 : g.sink[n]));
        if (line)
            ft.trace_flux.push_back(flux(g.slices[n][j0 - 1]));
        else
            ft.trace_flux.push_back(flux(n < g.boundary.size() ? g.boundary[n] : g.slices[n][0]));
    }
    return ft;
}

} // namespace zrh
