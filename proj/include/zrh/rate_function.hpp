#pragma once

#include "zrh/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zrh {

/// Jump rate g(k) of the zero-range process.
///
/// Stored as a table g(0..k_max) and continued affinely past k_max with a slope in [0, a0].
/// Construction enforces g(0) = 0, g(k) > 0 for k >= 1, monotonicity (attractiveness) and the
/// Lipschitz bound |g(k+1) - g(k)| <= a0.
class RateFunction {
public:
    RateFunction(std::vector<double> values, double slope, std::string name = "table")
        : values_(std::move(values)), slope_(slope), name_(std::move(name)) {
        validate();
    }

    static RateFunction linear(std::size_t k_max = 64) {
        std::vector<double> v(k_max + 1);
        for (std::size_t k = 0; k <= k_max; ++k) v[k] = static_cast<double>(k);
        return RateFunction(std::move(v), 1.0, "linear");
    }

    static RateFunction indicator() { return RateFunction({0.0, 1.0}, 0.0, "indicator"); }

    /// g(k) = min(k, c).
    static RateFunction bounded(double c) {
        if (!(c > 0.0) || !std::isfinite(c)) throw parse_error("bounded rate needs a positive cap");
        std::vector<double> v;
        for (std::size_t k = 0;; ++k) {
            v.push_back(std::min(static_cast<double>(k), c));
            if (static_cast<double>(k) >= c) break;
        }
        return RateFunction(std::move(v), 0.0, "bounded:" + format_number(c));
    }

    /// Accepts "linear", "indicator", "bounded:c", or "table:g0,g1,...[;slope=s]".
    static RateFunction parse(std::string_view text) {
        if (text == "linear") return linear();
        if (text == "indicator") return indicator();
        if (text.starts_with("bounded:")) return bounded(parse_double(text.substr(8)));
        if (text.starts_with("table:")) {
            std::string_view body = text.substr(6);
            double slope = 0.0;
            if (auto semi = body.find(';'); semi != std::string_view::npos) {
                std::string_view opt = body.substr(semi + 1);
                if (!opt.starts_with("slope=")) throw parse_error("unknown rate table option '" + std::string(opt) + "'");
                slope = parse_double(opt.substr(6));
                body = body.substr(0, semi);
            }
            std::vector<double> v;
            while (!body.empty()) {
                auto comma = body.find(',');
                v.push_back(parse_double(body.substr(0, comma)));
                if (comma == std::string_view::npos) break;
                body = body.substr(comma + 1);
            }
            return RateFunction(std::move(v), slope, std::string(text));
        }
        throw parse_error("unknown rate function '" + std::string(text) + "'");
    }

    double operator()(std::int64_t k) const noexcept {
        if (k <= 0) return 0.0;
        const auto kk = static_cast<std::size_t>(k);
        if (kk < values_.size()) return values_[kk];
        return values_.back() + slope_ * static_cast<double>(kk - (values_.size() - 1));
    }

    std::size_t k_max() const noexcept { return values_.size() - 1; }
    double slope() const noexcept { return slope_; }
    double lipschitz() const noexcept { return a0_; }
    const std::vector<double>& values() const noexcept { return values_; }
    const std::string& name() const noexcept { return name_; }

    /// Radius of convergence of the partition function implied by the extension rule:
    /// infinite for a growing tail, the asymptotic rate for a flat tail.
    double zeta_star() const noexcept {
        return slope_ > 0.0 ? std::numeric_limits<double>::infinity() : values_.back();
    }

    bool is_linear() const noexcept {
        if (slope_ != 1.0) return false;
        for (std::size_t k = 0; k < values_.size(); ++k)
            if (values_[k] != static_cast<double>(k)) return false;
        return true;
    }

private:
    void validate() {
        if (values_.size() < 2) throw monotonicity_error("rate table needs g(0) and at least g(1)");
        if (values_[0] != 0.0) throw monotonicity_error("rate table must have g(0) = 0");
        double a0 = slope_;
        for (std::size_t k = 1; k < values_.size(); ++k) {
            if (!(values_[k] > 0.0) || !std::isfinite(values_[k]))
                throw monotonicity_error("g(" + std::to_string(k) + ") must be positive and finite");
            const double step = values_[k] - values_[k - 1];
            if (step < 0.0) throw monotonicity_error("g is not non-decreasing at k = " + std::to_string(k));
            a0 = std::max(a0, step);
        }
        if (slope_ < 0.0 || !std::isfinite(slope_)) throw monotonicity_error("extension slope must be >= 0");
        a0_ = a0;
        for (std::size_t k = 0; k < values_.size(); ++k) {
            if (values_[k] > a0_ * static_cast<double>(k) * (1.0 + 1e-12))
                throw monotonicity_error("g(k) <= a0 k fails at k = " + std::to_string(k));
        }
    }

    static double parse_double(std::string_view s) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw parse_error("not a number: '" + std::string(s) + "'");
        return v;
    }

    static std::string format_number(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return buf;
    }

    std::vector<double> values_;
    double slope_;
    double a0_ = 0.0;
    std::string name_;
};

} // namespace zrh
