#pragma once

#include "zrh/errors.hpp"
#include "zrh/rate_function.hpp"
#include "zrh/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zrh {

struct SeriesOptions {
    /// Truncate once term / partial sum drops below this.
    double rel_tol = 1e-12;
    std::size_t max_terms = 10000;
    /// Flat-tailed rates: this many consecutive ratios > 1 beyond k_max mean zeta >= zeta*.
    std::size_t ratio_run = 50;
};

namespace detail {

/// Log-weights log(zeta^k / g(k)!) for k = 0..K, truncated per SeriesOptions.
inline std::vector<double> log_weights(const RateFunction& rate, double zeta, const SeriesOptions& opt) {
    if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw std::invalid_argument("fugacity must be finite and >= 0");
    if (!(opt.rel_tol > 0.0)) throw std::invalid_argument("series tolerance must be positive");
    std::vector<double> lw{0.0};
    if (zeta == 0.0) return lw;
    const double log_zeta = std::log(zeta);
    const bool flat_tail = rate.slope() == 0.0;
    double lmax = 0.0;
    double scaled_sum = 1.0; // sum of exp(lw - lmax)
    std::size_t run = 0;
    for (std::size_t k = 1;; ++k) {
        if (k > opt.max_terms)
            throw divergence_error("partition series did not converge within " + std::to_string(opt.max_terms) +
                                   " terms (zeta = " + std::to_string(zeta) + ")");
        const double g = rate(static_cast<std::int64_t>(k));
        const double step = log_zeta - std::log(g);
        const double lt = lw.back() + step;
        lw.push_back(lt);
        if (lt > lmax) {
            scaled_sum = scaled_sum * std::exp(lmax - lt) + 1.0;
            lmax = lt;
        } else {
            scaled_sum += std::exp(lt - lmax);
        }
        if (flat_tail && k > rate.k_max()) {
            run = step > 0.0 ? run + 1 : 0;
            if (run >= opt.ratio_run)
                throw divergence_error("partition series diverges: zeta = " + std::to_string(zeta) +
                                       " is not below zeta* = " + std::to_string(rate.zeta_star()));
        }
        const double rel = std::exp(lt - lmax) / scaled_sum;
        const double kk = static_cast<double>(k);
        if (step < 0.0 && rel * kk * kk < opt.rel_tol) break;
    }
    return lw;
}

struct Moments {
    double log_z = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

inline Moments moments(const RateFunction& rate, double zeta, const SeriesOptions& opt) {
    const auto lw = log_weights(rate, zeta, opt);
    const double lmax = *std::max_element(lw.begin(), lw.end());
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < lw.size(); ++k) {
        const double w = std::exp(lw[k] - lmax);
        const double kk = static_cast<double>(k);
        s0 += w;
        s1 += kk * w;
        s2 += kk * kk * w;
    }
    Moments m;
    m.log_z = lmax + std::log(s0);
    m.mean = s1 / s0;
    m.variance = std::max(0.0, s2 / s0 - m.mean * m.mean);
    return m;
}

} // namespace detail

/// Z(zeta) = sum_k zeta^k / g(k)!.
inline double partition_function(const RateFunction& rate, double zeta, double tol = 1e-12) {
    SeriesOptions opt;
    opt.rel_tol = tol;
    return std::exp(detail::moments(rate, zeta, opt).log_z);
}

/// R(zeta): mean occupation under the homogeneous product measure with fugacity zeta.
inline double mean_density(const RateFunction& rate, double zeta, const SeriesOptions& opt = {}) {
    return detail::moments(rate, zeta, opt).mean;
}

/// Single-site law nu_bar_zeta(k) = zeta^k / (Z(zeta) g(k)!), sampled by inversion.
class MarginalLaw {
public:
    MarginalLaw(const RateFunction& rate, double zeta, const SeriesOptions& opt = {}) : zeta_(zeta) {
        const auto lw = detail::log_weights(rate, zeta, opt);
        const double lmax = *std::max_element(lw.begin(), lw.end());
        cdf_.resize(lw.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < lw.size(); ++k) {
            acc += std::exp(lw[k] - lmax);
            cdf_[k] = acc;
        }
        for (double& c : cdf_) c /= acc;
        cdf_.back() = 1.0;
    }

    double fugacity() const noexcept { return zeta_; }

    double pmf(std::size_t k) const noexcept {
        if (k >= cdf_.size()) return 0.0;
        return k == 0 ? cdf_[0] : cdf_[k] - cdf_[k - 1];
    }

    std::int64_t sample(Rng& rng) const {
        const double u = uniform01(rng);
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        const auto k = static_cast<std::int64_t>(it - cdf_.begin());
        return std::min<std::int64_t>(k, static_cast<std::int64_t>(cdf_.size()) - 1);
    }

private:
    double zeta_;
    std::vector<double> cdf_;
};

struct ThermoOptions {
    std::size_t grid_points = 4097;
    /// Absolute bisection tolerance on the fugacity.
    double tolerance = 1e-10;
    SeriesOptions series{};
};

/// Tabulated Z, R on a fugacity grid covering densities [0, rho_max], with exact (bisection)
/// and interpolated evaluation of Phi = R^{-1}. Immutable once built.
class ThermoTable {
public:
    ThermoTable(RateFunction rate, double rho_max, ThermoOptions opt = {}) : rate_(std::move(rate)), opt_(opt) {
        if (!(rho_max > 0.0) || !std::isfinite(rho_max)) throw std::invalid_argument("rho_max must be positive");
        if (opt_.grid_points < 3) throw std::invalid_argument("thermo grid needs at least 3 points");
        zeta_star_ = rate_.zeta_star();
        const double zeta_hi = bracket_fugacity(rho_max);
        const std::size_t n = opt_.grid_points;
        zeta_.resize(n);
        log_z_.resize(n);
        rho_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            zeta_[i] = zeta_hi * static_cast<double>(i) / static_cast<double>(n - 1);
            const auto m = detail::moments(rate_, zeta_[i], opt_.series);
            log_z_[i] = m.log_z;
            rho_[i] = m.mean;
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (!(rho_[i] > rho_[i - 1]))
                throw monotonicity_error("R(zeta) is not strictly increasing near zeta = " + std::to_string(zeta_[i]));
        }
    }

    const RateFunction& rate() const noexcept { return rate_; }
    double zeta_star_estimate() const noexcept { return zeta_star_; }
    double tolerance() const noexcept { return opt_.tolerance; }
    double rho_max() const noexcept { return rho_.back(); }
    double zeta_max() const noexcept { return zeta_.back(); }
    std::span<const double> zeta_grid() const noexcept { return zeta_; }
    std::span<const double> density_grid() const noexcept { return rho_; }
    std::span<const double> log_partition_grid() const noexcept { return log_z_; }

    /// Phi(rho): the fugacity whose density is rho, by bisection to the table tolerance.
    double phi(double rho) const {
        check_density(rho);
        if (rho == 0.0) return 0.0;
        auto [lo, hi] = bracket(rho);
        while (hi - lo > opt_.tolerance) {
            const double mid = 0.5 * (lo + hi);
            if (mean_density(rate_, mid, opt_.series) < rho)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    /// R(zeta), computed from the series directly.
    double phi_inverse(double zeta) const {
        if (!(zeta >= 0.0)) throw range_error("negative fugacity");
        if (zeta >= zeta_star_) throw divergence_error("fugacity at or beyond zeta*");
        return mean_density(rate_, zeta, opt_.series);
    }

    /// Phi by linear interpolation of the tabulated (R, zeta) pairs; exact for linear g.
    double phi_interp(double rho) const {
        check_density(rho);
        const auto it = std::upper_bound(rho_.begin(), rho_.end(), rho);
        if (it == rho_.end()) return zeta_.back();
        const auto i = static_cast<std::size_t>(it - rho_.begin());
        if (i == 0) return 0.0;
        const double w = (rho - rho_[i - 1]) / (rho_[i] - rho_[i - 1]);
        return zeta_[i - 1] + w * (zeta_[i] - zeta_[i - 1]);
    }

    MarginalLaw marginal_for_density(double rho) const { return MarginalLaw(rate_, phi(rho), opt_.series); }
    MarginalLaw marginal_for_fugacity(double zeta) const {
        if (!(zeta >= 0.0) || zeta >= zeta_star_) throw range_error("fugacity outside [0, zeta*)");
        return MarginalLaw(rate_, zeta, opt_.series);
    }

private:
    void check_density(double rho) const {
        if (!(rho >= 0.0) || rho > rho_.back())
            throw range_error("density " + std::to_string(rho) + " outside tabulated range [0, " +
                              std::to_string(rho_.back()) + "]");
    }

    std::pair<double, double> bracket(double rho) const {
        const auto it = std::lower_bound(rho_.begin(), rho_.end(), rho);
        const auto i = static_cast<std::size_t>(it - rho_.begin());
        if (i == 0) return {0.0, 0.0};
        return {zeta_[i - 1], zeta_[i]};
    }

    double bracket_fugacity(double rho_max) const {
        if (std::isinf(zeta_star_)) {
            double hi = 1.0;
            while (mean_density(rate_, hi, opt_.series) < rho_max) hi *= 2.0;
            return hi;
        }
        for (int j = 1; j < 60; ++j) {
            const double hi = zeta_star_ * (1.0 - std::ldexp(1.0, -j));
            if (mean_density(rate_, hi, opt_.series) >= rho_max) return hi;
        }
        throw range_error("density " + std::to_string(rho_max) + " is not reachable below zeta*");
    }

    RateFunction rate_;
    ThermoOptions opt_;
    double zeta_star_ = 0.0;
    std::vector<double> zeta_, log_z_, rho_;
};

using ThermoTablePtr = std::shared_ptr<const ThermoTable>;

inline ThermoTablePtr make_thermo(RateFunction rate, double rho_max, ThermoOptions opt = {}) {
    return std::make_shared<const ThermoTable>(std::move(rate), rho_max, opt);
}

/// One draw from nu_rho.
inline std::int64_t sample_marginal(const ThermoTable& table, double rho, Rng& rng) {
    return table.marginal_for_density(rho).sample(rng);
}

} // namespace zrh
