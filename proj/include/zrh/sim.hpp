#pragma once

#include "zrh/errors.hpp"
#include "zrh/profile.hpp"
#include "zrh/rate_function.hpp"
#include "zrh/rng.hpp"
#include "zrh/sum_tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace zrh {

using Count = std::int64_t;

/// (p, alpha, beta, N). Time is macroscopic; the generator is accelerated by N.
struct ModelParams {
    double p = 0.75;
    double alpha = 0.0;
    double beta = 0.0;
    std::int64_t N = 100;

    void validate() const {
        if (!(p > 0.5 && p <= 1.0)) throw std::invalid_argument("p must lie in (1/2, 1]");
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
        if (!std::isfinite(beta)) throw std::invalid_argument("beta must be finite");
        if (N < 1) throw std::invalid_argument("N must be >= 1");
    }

    double drift() const noexcept { return 2.0 * p - 1.0; }
    double scale() const noexcept { return static_cast<double>(N); }
    /// alpha N^beta, the destruction-to-jump ratio at the origin.
    double kill_factor() const noexcept {
        return alpha == 0.0 ? 0.0 : alpha * std::pow(static_cast<double>(N), beta);
    }
};

/// Integer interval [x_min, x_max] of lattice sites.
struct Window {
    std::int64_t x_min = 0;
    std::int64_t x_max = -1;

    std::size_t size() const noexcept { return x_max >= x_min ? static_cast<std::size_t>(x_max - x_min + 1) : 0; }
    bool contains(std::int64_t x) const noexcept { return x >= x_min && x <= x_max; }
    std::size_t index(std::int64_t x) const noexcept { return static_cast<std::size_t>(x - x_min); }
    std::int64_t site(std::size_t i) const noexcept { return x_min + static_cast<std::int64_t>(i); }
    bool operator==(const Window&) const = default;
};

struct Configuration {
    Window window;
    std::vector<Count> occupation;
    Count destroyed = 0;
    Count exited_left = 0;
    Count exited_right = 0;

    Configuration() = default;
    explicit Configuration(Window w) : window(w), occupation(w.size(), 0) {}

    Count at(std::int64_t x) const noexcept { return window.contains(x) ? occupation[window.index(x)] : 0; }
    Count& operator[](std::int64_t x) { return occupation.at(window.index(x)); }

    Count mass() const noexcept { return std::accumulate(occupation.begin(), occupation.end(), Count{0}); }
    Count max_occupation() const noexcept {
        return occupation.empty() ? 0 : *std::max_element(occupation.begin(), occupation.end());
    }
    bool empty() const noexcept { return mass() == 0; }
};

enum class Boundary { open, closed };

struct EngineOptions {
    /// open: particles leaving the window are counted and dropped; closed: such jumps are suppressed.
    Boundary boundary = Boundary::open;
    double max_exit_fraction = 1e-3;
    std::uint64_t event_budget = 20'000'000'000ULL;
    /// Destroy particles the moment they land on the origin (the alpha N^beta -> infinity process).
    bool instant_kill = false;
    std::uint64_t check_interval = 100'000;
};

struct TrajectoryRecord {
    double t_end = 0.0;
    std::uint64_t events = 0;
    std::uint64_t jumps = 0;
    std::uint64_t destructions = 0;
    std::uint64_t blocked = 0;
    Count initial_mass = 0;
    Count final_mass = 0;
    Count destroyed = 0;
    Count exited_left = 0;
    Count exited_right = 0;
};

/// Indices whose rates changed during one event.
struct Touched {
    std::size_t idx[4]{};
    int n = 0;
    void add(std::size_t i) noexcept { idx[n++] = i; }
};

/// Gillespie direct method over any process exposing per-index rates.
///
/// Process needs: sites(), site_rate(i), fire(i, rate, rng, touched), check(). The tree holds
/// one entry per index; the next event time is drawn from the tree total, the index by descent.
template <class Process>
class KmcDriver {
public:
    KmcDriver(Process process, Rng rng, std::uint64_t event_budget, std::uint64_t check_interval)
        : proc_(std::move(process)), rng_(std::move(rng)), budget_(event_budget),
          check_interval_(std::max<std::uint64_t>(check_interval, 1)) {
        rebuild();
    }

    void rebuild() {
        std::vector<double> w(proc_.sites());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = proc_.site_rate(i);
        tree_.rebuild(w);
    }

    double time() const noexcept { return t_; }
    std::uint64_t events() const noexcept { return events_; }
    double total_rate() const noexcept { return tree_.total(); }
    Process& process() noexcept { return proc_; }
    const Process& process() const noexcept { return proc_; }
    Rng& rng() noexcept { return rng_; }

    /// Advances to t_end; obs(t) fires for every observe time in order, with the state at t.
    template <class Obs>
    void run(double t_end, std::span<const double> observe_times, Obs&& obs) {
        if (t_end < t_) throw std::invalid_argument("t_end lies before the current time");
        std::size_t k = 0;
        while (k < observe_times.size() && observe_times[k] < t_) obs(observe_times[k++]);
        while (true) {
            const double total = tree_.total();
            const double t_next = total > 0.0 ? t_ + exp_(rng_) / total : std::numeric_limits<double>::infinity();
            while (k < observe_times.size() && observe_times[k] < t_next && observe_times[k] <= t_end)
                obs(observe_times[k++]);
            if (t_next > t_end) {
                t_ = t_end;
                break;
            }
            t_ = t_next;
            fire();
        }
        proc_.check();
    }

    void run(double t_end) {
        run(t_end, {}, [](double) {});
    }

    /// Fires exactly one event regardless of time; false if every rate is zero.
    bool step() {
        const double total = tree_.total();
        if (!(total > 0.0)) return false;
        t_ += exp_(rng_) / total;
        fire();
        return true;
    }

    /// Largest relative mismatch between stored tree weights and freshly computed rates.
    double rate_mismatch() const {
        double worst = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < proc_.sites(); ++i) {
            const double r = proc_.site_rate(i);
            sum += r;
            const double diff = std::abs(r - tree_.weight(i));
            if (diff > 0.0) worst = std::max(worst, diff / std::max(std::abs(r), 1e-300));
        }
        const double tot = tree_.total();
        if (sum > 0.0 || tot > 0.0) worst = std::max(worst, std::abs(sum - tot) / std::max(sum, tot));
        return worst;
    }

private:
    void fire() {
        if (events_ >= budget_)
            throw budget_error("event budget of " + std::to_string(budget_) + " exhausted at t = " + std::to_string(t_));
        const std::size_t i = tree_.find(uniform01(rng_) * tree_.total());
        Touched touched;
        proc_.fire(i, tree_.weight(i), rng_, touched);
        for (int j = 0; j < touched.n; ++j) tree_.set(touched.idx[j], proc_.site_rate(touched.idx[j]));
        if (++events_ % check_interval_ == 0) proc_.check();
    }

    Process proc_;
    Rng rng_;
    SumTree tree_;
    std::exponential_distribution<double> exp_{1.0};
    double t_ = 0.0;
    std::uint64_t events_ = 0;
    std::uint64_t budget_;
    std::uint64_t check_interval_;
};

/// Zero-range dynamics with destruction at the origin, one tree entry per site.
///
/// Site x fires at N g(w_x), the origin at N (1 + alpha N^beta) g(w_0). At the origin a uniform
/// draw below the destruction share removes a particle; otherwise the particle jumps right with
/// probability p and left with probability 1 - p.
class ZrpProcess {
public:
    ZrpProcess(Configuration cfg, ModelParams params, RateFunction rate, EngineOptions opt)
        : cfg_(std::move(cfg)), params_(params), rate_(std::move(rate)), opt_(opt) {
        params_.validate();
        if (cfg_.occupation.size() != cfg_.window.size()) throw window_error("occupation vector does not match window");
        for (Count c : cfg_.occupation)
            if (c < 0) throw std::invalid_argument("negative occupation");
        n_ = params_.scale();
        kill_ = params_.kill_factor();
        has_origin_ = cfg_.window.contains(0);
        origin_ = has_origin_ ? cfg_.window.index(0) : 0;
        if (opt_.instant_kill && has_origin_) {
            cfg_.destroyed += cfg_.occupation[origin_];
            cfg_.occupation[origin_] = 0;
        }
        initial_total_ = cfg_.mass() + cfg_.destroyed + cfg_.exited_left + cfg_.exited_right;
        record_.initial_mass = cfg_.mass();
    }

    std::size_t sites() const noexcept { return cfg_.occupation.size(); }

    double site_rate(std::size_t i) const noexcept {
        const double r = n_ * rate_(cfg_.occupation[i]);
        return (has_origin_ && i == origin_) ? r * (1.0 + kill_) : r;
    }

    void fire(std::size_t i, double site_rate, Rng& rng, Touched& touched) {
        ++record_.events;
        touched.add(i);
        if (has_origin_ && i == origin_ && kill_ > 0.0) {
            const double v = uniform01(rng) * site_rate;
            if (v < n_ * rate_(cfg_.occupation[i]) * kill_) {
                --cfg_.occupation[i];
                ++cfg_.destroyed;
                ++record_.destructions;
                return;
            }
        }
        const bool right = uniform01(rng) < params_.p;
        if (right ? i + 1 >= sites() : i == 0) {
            if (opt_.boundary == Boundary::closed) {
                ++record_.blocked;
                return;
            }
            --cfg_.occupation[i];
            ++(right ? cfg_.exited_right : cfg_.exited_left);
            ++record_.jumps;
            check_leakage();
            return;
        }
        const std::size_t j = right ? i + 1 : i - 1;
        --cfg_.occupation[i];
        ++record_.jumps;
        if (opt_.instant_kill && has_origin_ && j == origin_) {
            ++cfg_.destroyed;
            ++record_.destructions;
            return;
        }
        ++cfg_.occupation[j];
        touched.add(j);
    }

    /// Integer conservation and non-negativity.
    void check() const {
        Count m = 0;
        for (Count c : cfg_.occupation) {
            if (c < 0) throw std::logic_error("negative occupation reached");
            m += c;
        }
        if (m + cfg_.destroyed + cfg_.exited_left + cfg_.exited_right != initial_total_)
            throw std::logic_error("particle count not conserved");
        if (params_.alpha == 0.0 && !opt_.instant_kill && cfg_.destroyed != 0)
            throw std::logic_error("destruction with alpha = 0");
    }

    const Configuration& configuration() const noexcept { return cfg_; }
    const ModelParams& params() const noexcept { return params_; }
    const RateFunction& rate() const noexcept { return rate_; }
    const TrajectoryRecord& record() const noexcept { return record_; }

private:
    void check_leakage() const {
        const Count exits = cfg_.exited_left + cfg_.exited_right;
        if (static_cast<double>(exits) > opt_.max_exit_fraction * static_cast<double>(std::max<Count>(initial_total_, 1)))
            throw leakage_error(std::to_string(exits) + " of " + std::to_string(initial_total_) +
                                " particles left the window; enlarge the margin");
    }

    Configuration cfg_;
    ModelParams params_;
    RateFunction rate_;
    EngineOptions opt_;
    double n_ = 1.0;
    double kill_ = 0.0;
    bool has_origin_ = false;
    std::size_t origin_ = 0;
    Count initial_total_ = 0;
    TrajectoryRecord record_;
};

using Observer = std::function<void(double t, const Configuration&)>;

class EventEngine {
public:
    EventEngine(Configuration init, ModelParams params, RateFunction rate, Rng rng, EngineOptions opt = {})
        : driver_(ZrpProcess(std::move(init), params, std::move(rate), opt), std::move(rng), opt.event_budget,
                  opt.check_interval) {}

    const Configuration& configuration() const noexcept { return driver_.process().configuration(); }
    const ModelParams& params() const noexcept { return driver_.process().params(); }
    const RateFunction& rate() const noexcept { return driver_.process().rate(); }
    double time() const noexcept { return driver_.time(); }
    std::uint64_t events() const noexcept { return driver_.events(); }
    double total_rate() const noexcept { return driver_.total_rate(); }
    double site_rate(std::int64_t x) const { return driver_.process().site_rate(configuration().window.index(x)); }

    TrajectoryRecord run(double t_end, std::span<const double> observe_times = {}, const Observer& obs = {}) {
        driver_.run(t_end, observe_times, [&](double t) {
            if (obs) obs(t, configuration());
        });
        return record();
    }

    bool step() { return driver_.step(); }

    /// Relative mismatch between the incremental sum-tree and a from-scratch recomputation.
    double verify_rates() const { return driver_.rate_mismatch(); }

    TrajectoryRecord record() const {
        TrajectoryRecord r = driver_.process().record();
        const auto& c = configuration();
        r.t_end = driver_.time();
        r.final_mass = c.mass();
        r.destroyed = c.destroyed;
        r.exited_left = c.exited_left;
        r.exited_right = c.exited_right;
        return r;
    }

private:
    KmcDriver<ZrpProcess> driver_;
};

/// Independent Poisson(rho0(x/N)) occupations on the window.
template <DensityFunction F>
Configuration build_initial(const F& rho0, const ModelParams& params, Window window, Rng& rng) {
    params.validate();
    Configuration cfg(window);
    const double n = params.scale();
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double lambda = rho0(static_cast<double>(window.site(i)) / n);
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw window_error("initial density must be finite and >= 0 at u = " +
                               std::to_string(static_cast<double>(window.site(i)) / n));
        if (lambda > 0.0) cfg.occupation[i] = std::poisson_distribution<Count>(lambda)(rng);
    }
    return cfg;
}

/// Sites whose macroscopic image covers [lo - margin, hi + (2p-1) t_end + margin].
inline Window choose_window(std::pair<double, double> support, const ModelParams& params, double t_end, double margin) {
    if (!(margin > 0.0)) throw std::invalid_argument("window margin must be positive");
    if (support.second < support.first) throw std::invalid_argument("support interval is reversed");
    const double n = params.scale();
    const double a = (support.first - margin) * n;
    const double b = (support.second + params.drift() * std::max(t_end, 0.0) + margin) * n;
    return {static_cast<std::int64_t>(std::floor(a + 1e-9)), static_cast<std::int64_t>(std::ceil(b - 1e-9))};
}

/// Block averages (2l+1)^-1 sum_{|y-x|<=l} w_y on cells [x/N, (x+1)/N); blocks running past the
/// window edge average over the sites they still cover.
inline DensityProfile empirical_density(const Configuration& cfg, std::int64_t scale, std::int64_t ell) {
    const std::size_t n = cfg.window.size();
    if (ell < 0 || static_cast<std::size_t>(2 * ell + 1) > n)
        throw std::invalid_argument("block of 2l+1 sites does not fit the window");
    std::vector<Count> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + cfg.occupation[i];
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lo = static_cast<std::size_t>(std::max<std::int64_t>(0, static_cast<std::int64_t>(i) - ell));
        const auto hi = std::min(n, i + static_cast<std::size_t>(ell) + 1);
        v[i] = static_cast<double>(prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    const double N = static_cast<double>(scale);
    return DensityProfile(static_cast<double>(cfg.window.x_min) / N, 1.0 / N, std::move(v));
}

inline DensityProfile empirical_density(const Configuration& cfg, const ModelParams& params, std::int64_t ell) {
    return empirical_density(cfg, params.N, ell);
}

} // namespace zrh
