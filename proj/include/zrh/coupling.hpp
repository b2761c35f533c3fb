#pragma once

#include "zrh/errors.hpp"
#include "zrh/rate_function.hpp"
#include "zrh/rng.hpp"
#include "zrh/sim.hpp"
#include "zrh/test_function.hpp"
#include "zrh/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace zrh {

namespace detail {

/// Neighbour index of a jump, or nullopt when it leaves the window.
inline std::optional<std::size_t> neighbour(std::size_t i, bool right, std::size_t n) noexcept {
    if (right) return i + 1 < n ? std::optional(i + 1) : std::nullopt;
    return i > 0 ? std::optional(i - 1) : std::nullopt;
}

inline void check_same_window(const Configuration& a, const Configuration& b) {
    if (a.window != b.window || a.occupation.size() != b.occupation.size())
        throw window_error("coupled configurations live on different windows");
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Second-class particles

struct SecondClassOptions {
    Boundary boundary = Boundary::open;
    double max_exit_fraction = 1e-3;
    std::uint64_t event_budget = 20'000'000'000ULL;
    std::uint64_t check_interval = 100'000;
    /// Track individual second-class particles; the mover at a site is chosen uniformly.
    bool labels = false;
};

struct SecondClassState {
    Configuration omega;
    Configuration zeta;
    /// Number of conversions at the origin so far.
    Count conversions = 0;
    Count zeta_exits = 0;
    /// Label positions (site index), -1 once the particle has left the window. Empty unless tracked.
    std::vector<std::int64_t> labels;
};

/// omega jumps at N g(w_x); zeta jumps at N (g(w_x + z_x) - g(w_x)); at the origin an omega
/// particle turns second-class at alpha N^{1+beta} g(w_0). One tree entry per site.
class SecondClassProcess {
public:
    SecondClassProcess(Configuration omega, ModelParams params, RateFunction rate, SecondClassOptions opt)
        : params_(params), rate_(std::move(rate)), opt_(opt) {
        params_.validate();
        st_.omega = std::move(omega);
        st_.zeta = Configuration(st_.omega.window);
        n_ = params_.scale();
        conv_ = n_ * params_.kill_factor();
        has_origin_ = st_.omega.window.contains(0);
        origin_ = has_origin_ ? st_.omega.window.index(0) : 0;
        initial_ = st_.omega.mass();
        if (opt_.labels) at_site_.resize(st_.omega.window.size());
    }

    std::size_t sites() const noexcept { return st_.omega.occupation.size(); }

    double site_rate(std::size_t i) const noexcept {
        const Count w = st_.omega.occupation[i];
        double r = n_ * rate_(w + st_.zeta.occupation[i]);
        if (has_origin_ && i == origin_) r += conv_ * rate_(w);
        return r;
    }

    void fire(std::size_t i, double site_rate, Rng& rng, Touched& touched) {
        touched.add(i);
        const Count w = st_.omega.occupation[i];
        const Count z = st_.zeta.occupation[i];
        const double gw = rate_(w), gwz = rate_(w + z);
        if (gwz < gw) throw monotonicity_error("g(w + z) < g(w): the rate is not attractive");
        const double v = uniform01(rng) * site_rate;
        if (v < n_ * gw) {
            move(st_.omega, i, rng, touched, false);
        } else if (v < n_ * gwz) {
            move(st_.zeta, i, rng, touched, true);
        } else {
            --st_.omega.occupation[i];
            ++st_.zeta.occupation[i];
            ++st_.conversions;
            if (opt_.labels) {
                at_site_[i].push_back(static_cast<std::int64_t>(st_.labels.size()));
                st_.labels.push_back(static_cast<std::int64_t>(i));
            }
        }
    }

    void check() const {
        Count pair = 0, zsum = 0;
        for (std::size_t i = 0; i < sites(); ++i) {
            if (st_.omega.occupation[i] < 0 || st_.zeta.occupation[i] < 0)
                throw std::logic_error("negative occupation reached");
            pair += st_.omega.occupation[i] + st_.zeta.occupation[i];
            zsum += st_.zeta.occupation[i];
        }
        const Count exits = st_.omega.exited_left + st_.omega.exited_right + st_.zeta_exits;
        if (pair + exits != initial_) throw std::logic_error("pair mass not conserved");
        if (zsum + st_.zeta_exits != st_.conversions) throw std::logic_error("second-class count drifted from conversions");
    }

    const SecondClassState& state() const noexcept { return st_; }

private:
    void move(Configuration& c, std::size_t i, Rng& rng, Touched& touched, bool second) {
        const bool right = uniform01(rng) < params_.p;
        std::int64_t label = -1;
        std::size_t slot = 0;
        if (second && opt_.labels) {
            auto& here = at_site_[i];
            slot = std::uniform_int_distribution<std::size_t>(0, here.size() - 1)(rng);
            label = here[slot];
        }
        const auto j = detail::neighbour(i, right, sites());
        if (!j) {
            if (opt_.boundary == Boundary::closed) return;
            --c.occupation[i];
            ++(right ? c.exited_right : c.exited_left);
            if (second) ++st_.zeta_exits;
            if (label >= 0) {
                drop_label(i, slot);
                st_.labels[static_cast<std::size_t>(label)] = -1;
            }
            const Count out = st_.omega.exited_left + st_.omega.exited_right + st_.zeta_exits;
            if (static_cast<double>(out) > opt_.max_exit_fraction * static_cast<double>(std::max<Count>(initial_, 1)))
                throw leakage_error(std::to_string(out) + " particles left the window; enlarge the margin");
            return;
        }
        --c.occupation[i];
        ++c.occupation[*j];
        touched.add(*j);
        if (label >= 0) {
            drop_label(i, slot);
            at_site_[*j].push_back(label);
            st_.labels[static_cast<std::size_t>(label)] = static_cast<std::int64_t>(*j);
        }
    }

    void drop_label(std::size_t i, std::size_t slot) {
        auto& here = at_site_[i];
        here[slot] = here.back();
        here.pop_back();
    }

    SecondClassState st_;
    ModelParams params_;
    RateFunction rate_;
    SecondClassOptions opt_;
    double n_ = 1.0;
    double conv_ = 0.0;
    bool has_origin_ = false;
    std::size_t origin_ = 0;
    Count initial_ = 0;
    std::vector<std::vector<std::int64_t>> at_site_;
};

class SecondClassEngine {
public:
    using Observer = std::function<void(double, const SecondClassState&)>;

    SecondClassEngine(Configuration omega, ModelParams params, RateFunction rate, Rng rng, SecondClassOptions opt = {})
        : driver_(SecondClassProcess(std::move(omega), params, std::move(rate), opt), std::move(rng), opt.event_budget,
                  opt.check_interval),
          params_(params) {}

    const SecondClassState& state() const noexcept { return driver_.process().state(); }
    double time() const noexcept { return driver_.time(); }
    std::uint64_t events() const noexcept { return driver_.events(); }
    bool step() { return driver_.step(); }

    void run(double t_end, std::span<const double> observe_times = {}, const Observer& obs = {}) {
        driver_.run(t_end, observe_times, [&](double t) {
            if (obs) obs(t, state());
        });
    }

    /// K_t: second-class particles created so far.
    Count created() const noexcept { return state().conversions; }
    double left_mass() const noexcept;

private:
    KmcDriver<SecondClassProcess> driver_;
    ModelParams params_;
};

/// N^-1 sum_{x <= 0} z_x.
inline double second_class_left_mass(const SecondClassState& s, std::int64_t N) {
    Count m = 0;
    const auto& w = s.zeta.window;
    for (std::int64_t x = w.x_min; x <= std::min<std::int64_t>(0, w.x_max); ++x) m += s.zeta.at(x);
    return static_cast<double>(m) / static_cast<double>(N);
}

inline double SecondClassEngine::left_mass() const noexcept { return second_class_left_mass(state(), params_.N); }

struct SecondClassResult {
    Count created = 0;
    double left_mass = 0.0;
    SecondClassState state;
};

inline SecondClassResult run_second_class(const Configuration& initial, const ModelParams& params, const RateFunction& rate,
                                          double t_end, Rng rng, SecondClassOptions opt = {},
                                          std::span<const double> observe_times = {},
                                          const SecondClassEngine::Observer& obs = {}) {
    SecondClassEngine e(initial, params, rate, std::move(rng), opt);
    e.run(t_end, observe_times, obs);
    return {e.created(), e.left_mass(), e.state()};
}

// ---------------------------------------------------------------------------------------------
// Basic coupling of two copies

struct PairConfiguration {
    Configuration omega;
    Configuration varpi;
};

/// G_{x,y}: discrepancies of opposite sign at x and y.
inline int ordering_defect(const PairConfiguration& pair, std::int64_t x, std::int64_t y) {
    const Count ox = pair.omega.at(x), vx = pair.varpi.at(x);
    const Count oy = pair.omega.at(y), vy = pair.varpi.at(y);
    return static_cast<int>((ox < vx && oy > vy) || (ox > vx && oy < vy));
}

/// Sites where the pair is ordered the other way from `sign` (+1: omega <= varpi).
inline std::size_t order_violations(const PairConfiguration& pair, int sign) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < pair.omega.occupation.size(); ++i) {
        const Count d = pair.varpi.occupation[i] - pair.omega.occupation[i];
        bad += sign > 0 ? d < 0 : d > 0;
    }
    return bad;
}

/// Initial order of a pair: +1 if omega <= varpi everywhere, -1 if omega >= varpi, 0 otherwise.
inline int pair_order(const PairConfiguration& pair) {
    if (order_violations(pair, +1) == 0) return +1;
    if (order_violations(pair, -1) == 0) return -1;
    return 0;
}

/// Two copies sharing jumps at min(g(w_x), g(v_x)), with solo moves of the larger copy at the
/// difference, and the same split at the origin for destruction.
///
/// Per-site rate N max(g) (1 + [x = 0] alpha N^beta). When the copies agree at a site the draws
/// consumed are exactly those of the single-copy engine, so identical copies reproduce it.
class BasicCouplingProcess {
public:
    BasicCouplingProcess(PairConfiguration pair, ModelParams params, RateFunction rate, EngineOptions opt)
        : pair_(std::move(pair)), params_(params), rate_(std::move(rate)), opt_(opt) {
        params_.validate();
        detail::check_same_window(pair_.omega, pair_.varpi);
        n_ = params_.scale();
        kill_ = params_.kill_factor();
        has_origin_ = pair_.omega.window.contains(0);
        origin_ = has_origin_ ? pair_.omega.window.index(0) : 0;
        sign_ = pair_order(pair_);
        init_omega_ = pair_.omega.mass();
        init_varpi_ = pair_.varpi.mass();
    }

    std::size_t sites() const noexcept { return pair_.omega.occupation.size(); }

    double site_rate(std::size_t i) const noexcept {
        const double r = n_ * std::max(rate_(pair_.omega.occupation[i]), rate_(pair_.varpi.occupation[i]));
        return (has_origin_ && i == origin_) ? r * (1.0 + kill_) : r;
    }

    void fire(std::size_t i, double site_rate, Rng& rng, Touched& touched) {
        touched.add(i);
        const double go = rate_(pair_.omega.occupation[i]);
        const double gv = rate_(pair_.varpi.occupation[i]);
        const double gmin = std::min(go, gv), gmax = std::max(go, gv);
        Configuration* solo = go > gv ? &pair_.omega : &pair_.varpi;
        const bool origin = has_origin_ && i == origin_;
        if (origin && kill_ > 0.0) {
            const double v = uniform01(rng) * site_rate;
            const double a = n_ * gmin * kill_;
            const double b = n_ * gmin * (1.0 + kill_);
            const double c = b + n_ * (gmax - gmin) * kill_;
            if (v < a) {
                destroy(pair_.omega, i);
                destroy(pair_.varpi, i);
            } else if (v < b) {
                jump_both(i, rng, touched);
            } else if (v < c) {
                destroy(*solo, i);
            } else {
                jump_one(*solo, i, rng, touched);
            }
        } else if (gmin < gmax) {
            const double v = uniform01(rng) * site_rate;
            if (v < n_ * gmin)
                jump_both(i, rng, touched);
            else
                jump_one(*solo, i, rng, touched);
        } else {
            jump_both(i, rng, touched);
        }
        if (sign_ != 0) {
            for (int k = 0; k < touched.n; ++k) {
                const auto s = touched.idx[k];
                const Count d = pair_.varpi.occupation[s] - pair_.omega.occupation[s];
                violations_ += sign_ > 0 ? d < 0 : d > 0;
            }
        }
    }

    void check() const {
        for (const Configuration* c : {&pair_.omega, &pair_.varpi}) {
            for (Count o : c->occupation)
                if (o < 0) throw std::logic_error("negative occupation reached");
        }
        auto total = [](const Configuration& c) { return c.mass() + c.destroyed + c.exited_left + c.exited_right; };
        if (total(pair_.omega) != init_omega_ || total(pair_.varpi) != init_varpi_)
            throw std::logic_error("coupled copies lost particles");
    }

    const PairConfiguration& pair() const noexcept { return pair_; }
    int order_sign() const noexcept { return sign_; }
    std::uint64_t violations() const noexcept { return violations_; }

private:
    void destroy(Configuration& c, std::size_t i) {
        --c.occupation[i];
        ++c.destroyed;
    }

    void jump_both(std::size_t i, Rng& rng, Touched& touched) {
        const bool right = uniform01(rng) < params_.p;
        if (pair_.omega.occupation[i] > 0) shift(pair_.omega, i, right, touched);
        if (pair_.varpi.occupation[i] > 0) shift(pair_.varpi, i, right, touched);
    }

    void jump_one(Configuration& c, std::size_t i, Rng& rng, Touched& touched) {
        shift(c, i, uniform01(rng) < params_.p, touched);
    }

    void shift(Configuration& c, std::size_t i, bool right, Touched& touched) {
        const auto j = detail::neighbour(i, right, sites());
        if (!j) {
            if (opt_.boundary == Boundary::closed) return;
            --c.occupation[i];
            ++(right ? c.exited_right : c.exited_left);
            const Count base = &c == &pair_.omega ? init_omega_ : init_varpi_;
            if (static_cast<double>(c.exited_left + c.exited_right) >
                opt_.max_exit_fraction * static_cast<double>(std::max<Count>(base, 1)))
                throw leakage_error("coupled copy leaked out of the window; enlarge the margin");
            return;
        }
        --c.occupation[i];
        ++c.occupation[*j];
        if (touched.n == 1 || touched.idx[touched.n - 1] != *j) touched.add(*j);
    }

    PairConfiguration pair_;
    ModelParams params_;
    RateFunction rate_;
    EngineOptions opt_;
    double n_ = 1.0;
    double kill_ = 0.0;
    bool has_origin_ = false;
    std::size_t origin_ = 0;
    int sign_ = 0;
    std::uint64_t violations_ = 0;
    Count init_omega_ = 0, init_varpi_ = 0;
};

class BasicCouplingEngine {
public:
    using Observer = std::function<void(double, const PairConfiguration&)>;

    BasicCouplingEngine(PairConfiguration pair, ModelParams params, RateFunction rate, Rng rng, EngineOptions opt = {})
        : driver_(BasicCouplingProcess(std::move(pair), params, std::move(rate), opt), std::move(rng), opt.event_budget,
                  opt.check_interval) {}

    const PairConfiguration& pair() const noexcept { return driver_.process().pair(); }
    double time() const noexcept { return driver_.time(); }
    std::uint64_t events() const noexcept { return driver_.events(); }
    /// Sites found out of the initial order right after an event, summed over events.
    std::uint64_t violations() const noexcept { return driver_.process().violations(); }
    int order_sign() const noexcept { return driver_.process().order_sign(); }
    double verify_rates() const { return driver_.rate_mismatch(); }
    bool step() { return driver_.step(); }

    void run(double t_end, std::span<const double> observe_times = {}, const Observer& obs = {}) {
        driver_.run(t_end, observe_times, [&](double t) {
            if (obs) obs(t, pair());
        });
    }

private:
    KmcDriver<BasicCouplingProcess> driver_;
};

// ---------------------------------------------------------------------------------------------
// Labeled coupling for large beta

/// Counts of the labeled coupling: coupled (Y, Z) pairs and uncoupled Z particles per site.
///
/// Labels are exchangeable within a site and every choice is uniform, so counts carry the whole
/// law of (eta, omega). eta kills on arrival at the origin; omega destroys at the origin with
/// probability alpha N^{1/2} / (1 + alpha N^{1/2}) per origin event.
struct LabeledPairState {
    Window window;
    std::vector<Count> coupled;
    std::vector<Count> uncoupled;
    Count y_dead = 0;
    Count z_dead = 0;
    Count exits = 0;

    Count eta(std::int64_t x) const noexcept { return window.contains(x) ? coupled[window.index(x)] : 0; }
    Count omega(std::int64_t x) const noexcept {
        return window.contains(x) ? coupled[window.index(x)] + uncoupled[window.index(x)] : 0;
    }
    /// sum_x |eta_x - omega_x|.
    Count discrepancy() const noexcept {
        Count s = 0;
        for (Count u : uncoupled) s += u;
        return s;
    }
};

class LabeledCouplingProcess {
public:
    LabeledCouplingProcess(const Configuration& initial, ModelParams params, RateFunction rate, EngineOptions opt)
        : params_(params), rate_(std::move(rate)), opt_(opt) {
        params_.validate();
        st_.window = initial.window;
        st_.coupled = initial.occupation;
        st_.uncoupled.assign(initial.occupation.size(), 0);
        n_ = params_.scale();
        // omega is the beta = 1/2 process; alpha = 0 collapses the instant kill as well
        kill_ = params_.alpha == 0.0 ? 0.0 : params_.alpha * std::sqrt(n_);
        has_origin_ = st_.window.contains(0);
        origin_ = has_origin_ ? st_.window.index(0) : 0;
        initial_ = initial.mass();
        if (has_origin_ && kill_ > 0.0) {
            st_.y_dead += st_.coupled[origin_];
            st_.uncoupled[origin_] += st_.coupled[origin_];
            st_.coupled[origin_] = 0;
        }
    }

    std::size_t sites() const noexcept { return st_.coupled.size(); }

    double site_rate(std::size_t i) const noexcept {
        const double r = n_ * rate_(st_.coupled[i] + st_.uncoupled[i]);
        return (has_origin_ && i == origin_) ? r * (1.0 + kill_) : r;
    }

    void fire(std::size_t i, double site_rate, Rng& rng, Touched& touched) {
        touched.add(i);
        const Count e = st_.coupled[i], w = e + st_.uncoupled[i];
        if (has_origin_ && i == origin_ && kill_ > 0.0) {
            // every Z at the origin is uncoupled here
            const double v = uniform01(rng) * site_rate;
            if (v < n_ * rate_(w) * kill_) {
                --st_.uncoupled[i];
                ++st_.z_dead;
                return;
            }
            move(st_.uncoupled, i, uniform01(rng) < params_.p, touched, false);
            return;
        }
        const double ge = rate_(e), gw = rate_(w);
        if (gw < ge) throw monotonicity_error("g is not non-decreasing");
        const bool pair_moves = ge >= gw || uniform01(rng) * site_rate < n_ * ge;
        move(pair_moves ? st_.coupled : st_.uncoupled, i, uniform01(rng) < params_.p, touched, pair_moves);
    }

    void check() const {
        Count m = 0;
        for (std::size_t i = 0; i < sites(); ++i) {
            if (st_.coupled[i] < 0 || st_.uncoupled[i] < 0) throw std::logic_error("negative occupation reached");
            m += st_.coupled[i] + st_.uncoupled[i];
        }
        if (m + st_.z_dead + st_.exits != initial_) throw std::logic_error("Z particles not conserved");
        if (has_origin_ && kill_ > 0.0 && st_.coupled[origin_] != 0) throw std::logic_error("a Y particle survived the origin");
    }

    const LabeledPairState& state() const noexcept { return st_; }

private:
    void move(std::vector<Count>& from, std::size_t i, bool right, Touched& touched, bool pair) {
        const auto j = detail::neighbour(i, right, sites());
        if (!j) {
            if (opt_.boundary == Boundary::closed) return;
            --from[i];
            ++st_.exits;
            if (static_cast<double>(st_.exits) > opt_.max_exit_fraction * static_cast<double>(std::max<Count>(initial_, 1)))
                throw leakage_error("labeled coupling leaked out of the window; enlarge the margin");
            return;
        }
        --from[i];
        touched.add(*j);
        if (pair && has_origin_ && *j == origin_ && kill_ > 0.0) {
            // Y dies on arrival; its Z partner stays behind uncoupled
            ++st_.y_dead;
            ++st_.uncoupled[*j];
            return;
        }
        ++from[*j];
    }

    LabeledPairState st_;
    ModelParams params_;
    RateFunction rate_;
    EngineOptions opt_;
    double n_ = 1.0;
    double kill_ = 0.0;
    bool has_origin_ = false;
    std::size_t origin_ = 0;
    Count initial_ = 0;
};

struct LabeledResult {
    Count discrepancy = 0;
    LabeledPairState state;
};

/// Runs eta (instant kill) against omega (beta = 1/2) from a common start; returns the
/// discrepancy sum_x |eta_x - omega_x| at t_end.
inline LabeledResult run_labeled_coupling(const Configuration& initial, const ModelParams& params, const RateFunction& rate,
                                          double t_end, Rng rng, EngineOptions opt = {}) {
    if (params.beta < 1.0) throw std::invalid_argument("the labeled coupling is the beta >= 1 device");
    KmcDriver<LabeledCouplingProcess> d(LabeledCouplingProcess(initial, params, rate, opt), std::move(rng), opt.event_budget,
                                        opt.check_interval);
    d.run(t_end);
    return {d.process().state().discrepancy(), d.process().state()};
}

// ---------------------------------------------------------------------------------------------
// Statistics

/// (2l+1)^-1 sum_{|y-x|<=l} w_y with empty sites outside the window.
inline double block_average(const Configuration& c, std::int64_t x, std::int64_t ell) {
    Count s = 0;
    for (std::int64_t y = x - ell; y <= x + ell; ++y) s += c.at(y);
    return static_cast<double>(s) / static_cast<double>(2 * ell + 1);
}

namespace detail {

inline std::vector<double> block_averages(const Configuration& c, std::int64_t ell) {
    const std::size_t n = c.occupation.size();
    std::vector<Count> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + c.occupation[i];
    std::vector<double> out(n);
    const auto L = static_cast<std::ptrdiff_t>(ell);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - L);
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n), static_cast<std::ptrdiff_t>(i) + L + 1);
        out[i] = static_cast<double>(prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)]) /
                 static_cast<double>(2 * ell + 1);
    }
    return out;
}

} // namespace detail

/// x -> |(2l+1)^-1 sum_{|y-x|<=l} g(w_y) - Phi(w^l_x)| on cells [x/N, (x+1)/N).
inline DensityProfile one_block_statistic(const Configuration& c, std::int64_t N, std::int64_t ell, const ThermoTable& thermo) {
    if (ell < 1) throw std::invalid_argument("block half-width must be >= 1");
    const std::size_t n = c.occupation.size();
    std::vector<double> gsum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) gsum[i + 1] = gsum[i] + thermo.rate()(c.occupation[i]);
    const auto rho = detail::block_averages(c, ell);
    std::vector<double> v(n);
    const double width = static_cast<double>(2 * ell + 1);
    const auto L = static_cast<std::ptrdiff_t>(ell);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - L);
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n), static_cast<std::ptrdiff_t>(i) + L + 1);
        const double gbar = (gsum[static_cast<std::size_t>(hi)] - gsum[static_cast<std::size_t>(lo)]) / width;
        v[i] = std::abs(gbar - thermo.phi(rho[i]));
    }
    const double NN = static_cast<double>(N);
    return DensityProfile(static_cast<double>(c.window.x_min) / NN, 1.0 / NN, std::move(v));
}

/// <pi^{N,l}, G> = N^-1 sum_{x > l} G(x/N, w^l_x).
template <class G>
double young_measure_eval(const Configuration& c, std::int64_t N, std::int64_t ell, G&& g) {
    if (ell < 1) throw std::invalid_argument("block half-width must be >= 1");
    const auto rho = detail::block_averages(c, ell);
    const double NN = static_cast<double>(N);
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const std::int64_t x = c.window.site(i);
        if (x > ell) s += g(static_cast<double>(x) / NN, rho[i]);
    }
    return s / NN;
}

struct PairSnapshot {
    double t = 0.0;
    Configuration omega;
    Configuration varpi;
};

/// Integrand of the microscopic entropy functional at one snapshot.
inline double micro_entropy_integrand(const PairSnapshot& s, const TestFunction& h, std::int64_t ell, const ThermoTable& thermo,
                                      const ModelParams& params) {
    detail::check_same_window(s.omega, s.varpi);
    if (h.vanishes() || s.t <= h.t_lo || s.t >= h.t_hi) return 0.0;
    const auto& w = s.omega.window;
    const double N = params.scale();
    const double margin = static_cast<double>(ell + 1) / N;
    if (h.u_lo - margin < static_cast<double>(w.x_min) / N || h.u_hi + margin > static_cast<double>(w.x_max) / N)
        throw support_error("test function support reaches the window edge");
    const auto x0 = static_cast<std::int64_t>(std::floor(h.u_lo * N));
    const auto x1 = static_cast<std::int64_t>(std::ceil(h.u_hi * N));
    double acc = 0.0;
    for (std::int64_t x = x0; x <= x1; ++x) {
        const double u = static_cast<double>(x) / N;
        const double ht = h.d_t(s.t, u), hu = h.d_u(s.t, u);
        if (ht == 0.0 && hu == 0.0) continue;
        const double a = block_average(s.omega, x, ell), b = block_average(s.varpi, x, ell);
        if (a == b) continue;
        acc += ht * std::abs(a - b) + params.drift() * hu * std::abs(thermo.phi_interp(a) - thermo.phi_interp(b));
    }
    return acc / N;
}

/// Trapezoid in time over snapshots of N^-1 sum_x { d_t H |w^l - v^l| + (2p-1) d_u H |Phi(w^l) - Phi(v^l)| }.
inline double micro_entropy_functional(std::span<const PairSnapshot> snapshots, const TestFunction& h, std::int64_t ell,
                                       const ThermoTable& thermo, const ModelParams& params) {
    if (ell < 1) throw std::invalid_argument("block half-width must be >= 1");
    double total = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < snapshots.size(); ++k) {
        const double f = micro_entropy_integrand(snapshots[k], h, ell, thermo, params);
        if (k > 0) total += 0.5 * (f + prev) * (snapshots[k].t - snapshots[k - 1].t);
        prev = f;
    }
    return total;
}

} // namespace zrh
