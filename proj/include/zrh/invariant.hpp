#pragma once

#include "zrh/errors.hpp"
#include "zrh/parallel.hpp"
#include "zrh/rate_function.hpp"
#include "zrh/rng.hpp"
#include "zrh/sim.hpp"
#include "zrh/stats.hpp"
#include "zrh/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace zrh {

/// p = 1: m_x = m_minus for x <= -1 and m_plus for x >= 0, with m_minus = (1 + alpha N^beta) m_plus.
struct TwoLevel {
    double m_plus = 0.0;
};

/// 1/2 < p < 1: m_x = c1 r^x + c2 (x <= 0), c3 r^x + c4 (x >= 0), r = p / (1 - p); c3, c4 derived.
struct Geometric {
    double c1 = 0.0;
    double c2 = 0.0;
};

/// Fugacities supplied site by site; only validated.
struct ExplicitProfile {
    std::vector<double> m;
};

using ProfileSpec = std::variant<TwoLevel, Geometric, ExplicitProfile>;

struct GeometricCoefficients {
    double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0;

    /// c1 + c2 - (c3 + c4) and the origin balance, both identically zero.
    std::pair<double, double> constraint_residuals(const ModelParams& prm) const noexcept {
        const double p = prm.p, k = prm.kill_factor();
        return {c1 + c2 - (c3 + c4), c1 * (1 - p) + c2 * p + c3 * p + c4 * (1 - p) - (1 + k) * (c1 + c2)};
    }
};

inline GeometricCoefficients complete_coefficients(const ModelParams& prm, double c1, double c2) {
    if (!(prm.p < 1.0)) throw std::invalid_argument("geometric profiles need p < 1; use the two-level form at p = 1");
    const double s = prm.kill_factor() / prm.drift() * (c1 + c2);
    GeometricCoefficients g{c1, c2, c1 + s, c2 - s};
    // exact cancellation in the presets; keep rounding residue from feeding r^x
    if (std::abs(g.c3) <= 1e-14 * (std::abs(c1) + std::abs(s))) g.c3 = 0.0;
    return g;
}

/// Fugacity profile m on a window solving p m_{x-1} + (1-p) m_{x+1} = (1 + [x=0] alpha N^beta) m_x.
class StationaryProfile {
public:
    StationaryProfile(ModelParams params, Window window, std::vector<double> m, std::optional<GeometricCoefficients> coeff = {})
        : params_(params), window_(window), m_(std::move(m)), coeff_(coeff) {}

    const ModelParams& params() const noexcept { return params_; }
    const Window& window() const noexcept { return window_; }
    std::span<const double> values() const noexcept { return m_; }
    const std::optional<GeometricCoefficients>& coefficients() const noexcept { return coeff_; }

    double m(std::int64_t x) const {
        if (!window_.contains(x)) throw window_error("site " + std::to_string(x) + " outside the profile window");
        return m_[window_.index(x)];
    }

    double sup() const noexcept { return m_.empty() ? 0.0 : *std::max_element(m_.begin(), m_.end()); }

    /// Left side minus right side of the balance equation at x (interior sites only).
    double residual(std::int64_t x) const {
        const double p = params_.p;
        const double lhs = p * m(x - 1) + (1 - p) * m(x + 1);
        const double rhs = (x == 0 ? 1.0 + params_.kill_factor() : 1.0) * m(x);
        return lhs - rhs;
    }

    double max_residual() const {
        double r = 0.0;
        for (std::int64_t x = window_.x_min + 1; x < window_.x_max; ++x) r = std::max(r, std::abs(residual(x)));
        return r;
    }

private:
    ModelParams params_;
    Window window_;
    std::vector<double> m_;
    std::optional<GeometricCoefficients> coeff_;
};

namespace detail {

inline double profile_value(const ModelParams& prm, const ProfileSpec& spec, const GeometricCoefficients& g, std::int64_t x) {
    if (const auto* t = std::get_if<TwoLevel>(&spec)) return x <= -1 ? (1.0 + prm.kill_factor()) * t->m_plus : t->m_plus;
    const double r = prm.p / (1.0 - prm.p);
    const double lr = std::log(r) * static_cast<double>(x);
    const double a = x <= 0 ? g.c1 : g.c3, b = x <= 0 ? g.c2 : g.c4;
    return a == 0.0 ? b : a * std::exp(lr) + b;
}

inline void check_admissible(double m, std::int64_t x, double zeta_cap) {
    if (!std::isfinite(m)) throw admissibility_error("fugacity overflows at site " + std::to_string(x));
    if (m < -1e-12 * std::max(1.0, std::abs(m))) throw negativity_error("m_" + std::to_string(x) + " = " + std::to_string(m) + " < 0");
    if (!(m < zeta_cap))
        throw admissibility_error("m_" + std::to_string(x) + " = " + std::to_string(m) + " is not below zeta* = " +
                                  std::to_string(zeta_cap));
}

} // namespace detail

/// Builds m on the window; negative values raise negativity_error, values at or beyond zeta_cap
/// (or overflowing) raise admissibility_error.
inline StationaryProfile build_profile(const ModelParams& prm, const ProfileSpec& spec, Window window,
                                       double zeta_cap = std::numeric_limits<double>::infinity()) {
    prm.validate();
    if (window.size() < 3) throw window_error("profile window needs at least three sites");
    std::vector<double> m(window.size());
    std::optional<GeometricCoefficients> coeff;
    if (const auto* e = std::get_if<ExplicitProfile>(&spec)) {
        if (e->m.size() != window.size()) throw window_error("explicit profile does not match window");
        m = e->m;
    } else {
        GeometricCoefficients g;
        if (const auto* t = std::get_if<TwoLevel>(&spec)) {
            if (prm.p != 1.0) throw std::invalid_argument("the two-level profile solves the p = 1 system only");
            if (!(t->m_plus >= 0.0)) throw negativity_error("m_plus must be >= 0");
        } else {
            const auto& geo = std::get<Geometric>(spec);
            g = complete_coefficients(prm, geo.c1, geo.c2);
            coeff = g;
        }
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = detail::profile_value(prm, spec, g, window.site(i));
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
        detail::check_admissible(m[i], window.site(i), zeta_cap);
        m[i] = std::max(m[i], 0.0);
    }
    StationaryProfile prof(prm, window, std::move(m), coeff);
    const double tol = 1e-10 * std::max(1.0, prof.sup());
    if (prof.max_residual() > tol)
        throw std::invalid_argument("profile does not solve the balance equations (residual " +
                                    std::to_string(prof.max_residual()) + ")");
    return prof;
}

/// Largest window [a, b] with a <= 0 <= b, |a|, b <= limit, on which the profile stays admissible.
inline Window max_admissible_window(const ModelParams& prm, const ProfileSpec& spec, double zeta_cap, std::int64_t limit) {
    if (std::holds_alternative<ExplicitProfile>(spec)) throw std::invalid_argument("explicit profiles carry their own window");
    GeometricCoefficients g;
    if (const auto* geo = std::get_if<Geometric>(&spec)) g = complete_coefficients(prm, geo->c1, geo->c2);
    auto ok = [&](std::int64_t x) {
        const double m = detail::profile_value(prm, spec, g, x);
        return std::isfinite(m) && m >= -1e-12 * std::max(1.0, std::abs(m)) && m < zeta_cap;
    };
    if (!ok(0)) throw admissibility_error("profile is inadmissible at the origin");
    Window w{0, 0};
    while (w.x_min > -limit && ok(w.x_min - 1)) --w.x_min;
    while (w.x_max < limit && ok(w.x_max + 1)) ++w.x_max;
    return w;
}

/// c1 = -k Phi(c)/(2p-1), c2 = (k + 2p-1) Phi(c)/(2p-1): c3 = 0, c4 = Phi(c). Right limit Phi(c).
inline Geometric preset_right_level(const ModelParams& prm, double phi_c) {
    const double k = prm.kill_factor(), d = prm.drift();
    return {-k * phi_c / d, (k + d) * phi_c / d};
}

/// c1 = -k Phi(c)/(2p-1+k), c2 = Phi(c): c3 = 0, c4 = (2p-1) Phi(c)/(2p-1+k). Left limit Phi(c).
inline Geometric preset_left_level(const ModelParams& prm, double phi_c) {
    const double k = prm.kill_factor(), d = prm.drift();
    return {-k * phi_c / (d + k), phi_c};
}

/// Independent sites with marginal m_x^k / (Z(m_x) g(k)!).
inline Configuration sample_stationary(const StationaryProfile& prof, const RateFunction& rate, Rng& rng,
                                       const SeriesOptions& opt = {}) {
    Configuration c(prof.window());
    std::map<double, MarginalLaw> laws;
    const auto m = prof.values();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] == 0.0) continue;
        if (!(m[i] < rate.zeta_star())) throw admissibility_error("fugacity at or beyond zeta*");
        auto it = laws.find(m[i]);
        if (it == laws.end()) it = laws.emplace(m[i], MarginalLaw(rate, m[i], opt)).first;
        c.occupation[i] = it->second.sample(rng);
    }
    return c;
}

struct SiteReport {
    std::int64_t x = 0;
    double m = 0.0;
    double expected_density = 0.0;
    MeanSe density;
    MeanSe jump_rate;
    bool pass = false;
};

struct StationarityReport {
    double t_end = 0.0;
    std::size_t replicas = 0;
    std::vector<SiteReport> sites;
    bool pass = false;
};

struct StationarityOptions {
    std::vector<std::int64_t> sites{-5, -1, 0, 1, 5};
    double observe_dt = 0.01;
    std::uint64_t seed = 1;
    double se_band = 3.0;
    Boundary boundary = Boundary::closed;
};

/// Runs the engine from the product measure with fugacities m and compares replica-and-time
/// averages of g(w_x) with m_x. A replica contributes its time average, so replicas are iid.
inline StationarityReport stationarity_test(const StationaryProfile& prof, const RateFunction& rate, double t_end,
                                            std::size_t replicas, const StationarityOptions& opt = {}) {
    if (replicas < 2) throw sample_size_error("stationarity test needs at least two replicas");
    if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be >= 0");
    for (auto x : opt.sites)
        if (!prof.window().contains(x)) throw window_error("tested site " + std::to_string(x) + " outside the window");
    std::vector<double> times;
    const auto steps = static_cast<std::size_t>(std::llround(t_end / opt.observe_dt));
    for (std::size_t k = 0; k <= steps; ++k) times.push_back(t_end * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(steps, 1)));
    if (steps == 0) times.assign(1, 0.0);
    const std::size_t ns = opt.sites.size();

    auto one = [&](std::size_t r) {
        auto rng = make_stream(opt.seed, r);
        auto init = sample_stationary(prof, rate, rng);
        EngineOptions eo;
        eo.boundary = opt.boundary;
        EventEngine e(std::move(init), prof.params(), rate, std::move(rng), eo);
        std::vector<double> occ(ns, 0.0), g(ns, 0.0);
        auto accumulate = [&](double, const Configuration& c) {
            for (std::size_t s = 0; s < ns; ++s) {
                const Count o = c.at(opt.sites[s]);
                occ[s] += static_cast<double>(o);
                g[s] += rate(o);
            }
        };
        if (t_end == 0.0)
            accumulate(0.0, e.configuration());
        else
            e.run(t_end, times, accumulate);
        for (std::size_t s = 0; s < ns; ++s) {
            occ[s] /= static_cast<double>(times.size());
            g[s] /= static_cast<double>(times.size());
        }
        return std::pair(occ, g);
    };
    const auto per_replica = parallel_map(replicas, one);

    StationarityReport rep;
    rep.t_end = t_end;
    rep.replicas = replicas;
    rep.pass = true;
    for (std::size_t s = 0; s < ns; ++s) {
        RunningStats occ, g;
        for (const auto& [o, gr] : per_replica) {
            occ.add(o[s]);
            g.add(gr[s]);
        }
        SiteReport sr;
        sr.x = opt.sites[s];
        sr.m = prof.m(sr.x);
        sr.expected_density = sr.m == 0.0 ? 0.0 : mean_density(rate, sr.m);
        sr.density = occ.summary();
        sr.jump_rate = g.summary();
        sr.pass = std::abs(sr.jump_rate.mean - sr.m) <= opt.se_band * sr.jump_rate.se;
        if (sr.jump_rate.se == 0.0) sr.pass = sr.jump_rate.mean == sr.m;
        rep.pass = rep.pass && sr.pass;
        rep.sites.push_back(sr);
    }
    return rep;
}

} // namespace zrh
