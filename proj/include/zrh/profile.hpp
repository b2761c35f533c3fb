#pragma once

#include "zrh/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zrh {

/// Piecewise-constant field on uniform cells [u_min + j du, u_min + (j+1) du).
struct DensityProfile {
    double u_min = 0.0;
    double du = 1.0;
    std::vector<double> values;

    DensityProfile() = default;
    DensityProfile(double u_min_, double du_, std::vector<double> values_)
        : u_min(u_min_), du(du_), values(std::move(values_)) {
        if (!(du > 0.0)) throw std::invalid_argument("cell width must be positive");
    }

    std::size_t size() const noexcept { return values.size(); }
    double u_max() const noexcept { return u_min + du * static_cast<double>(values.size()); }
    double cell_left(std::size_t j) const noexcept { return u_min + du * static_cast<double>(j); }
    double cell_center(std::size_t j) const noexcept { return u_min + du * (static_cast<double>(j) + 0.5); }

    double operator()(double u) const {
        if (u < u_min || u > u_max() || values.empty())
            throw window_error("u = " + std::to_string(u) + " outside profile [" + std::to_string(u_min) + ", " +
                               std::to_string(u_max()) + "]");
        auto j = static_cast<std::size_t>(std::floor((u - u_min) / du));
        return values[std::min(j, values.size() - 1)];
    }

    double integral() const noexcept {
        double s = 0.0;
        for (double v : values) s += v;
        return s * du;
    }

    /// Average over [a, b] with exact overlap weights; zero outside the covered interval.
    double cell_average(double a, double b) const {
        if (!(b > a)) throw std::invalid_argument("empty averaging interval");
        if (values.empty()) return 0.0;
        const double lo = std::max(a, u_min), hi = std::min(b, u_max());
        if (!(hi > lo)) return 0.0;
        auto j0 = static_cast<std::size_t>(std::max(0.0, std::floor((lo - u_min) / du)));
        double acc = 0.0;
        for (std::size_t j = j0; j < values.size(); ++j) {
            const double cl = cell_left(j), cr = cl + du;
            if (cl >= hi) break;
            const double w = std::min(cr, hi) - std::max(cl, lo);
            if (w > 0.0) acc += w * values[j];
        }
        return acc / (b - a);
    }
};

/// Initial density given by pieces on R; zero away from the pieces.
///
/// Two kinds of piece: constants on closed intervals ("a:b:v") and linear ramps between knots
/// ("knots:u0:v0;u1:v1;..."). Cell averages are computed exactly.
class InitialProfile {
public:
    struct Constant {
        double a, b, v;
    };

    InitialProfile() = default;

    static InitialProfile constant_pieces(std::vector<Constant> pieces) {
        InitialProfile p;
        for (const auto& c : pieces) {
            if (!(c.b >= c.a) || !(c.v >= 0.0) || !std::isfinite(c.v))
                throw parse_error("profile piece needs a <= b and a finite value >= 0");
        }
        p.pieces_ = std::move(pieces);
        return p;
    }

    /// Piecewise-linear interpolation through (u_i, v_i); zero outside [u_0, u_last].
    static InitialProfile knots(std::vector<std::pair<double, double>> pts) {
        if (pts.size() < 2) throw parse_error("knot profile needs at least two knots");
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!(pts[i].second >= 0.0)) throw parse_error("knot values must be >= 0");
            if (i > 0 && !(pts[i].first > pts[i - 1].first)) throw parse_error("knots must be increasing");
        }
        InitialProfile p;
        p.knots_ = std::move(pts);
        return p;
    }

    /// "a:b:v,a:b:v,..." or "knots:u:v;u:v;...". An empty string is the zero profile.
    static InitialProfile parse(std::string_view text) {
        if (text.empty() || text == "0") return constant_pieces({});
        if (text.starts_with("knots:")) {
            std::vector<std::pair<double, double>> pts;
            for (auto item : split(text.substr(6), ';')) {
                auto parts = split(item, ':');
                if (parts.size() != 2) throw parse_error("knot must be u:v, got '" + std::string(item) + "'");
                pts.emplace_back(to_double(parts[0]), to_double(parts[1]));
            }
            return knots(std::move(pts));
        }
        std::vector<Constant> pieces;
        for (auto item : split(text, ',')) {
            auto parts = split(item, ':');
            if (parts.size() != 3) throw parse_error("profile piece must be a:b:v, got '" + std::string(item) + "'");
            pieces.push_back({to_double(parts[0]), to_double(parts[1]), to_double(parts[2])});
        }
        return constant_pieces(std::move(pieces));
    }

    double operator()(double u) const noexcept {
        if (!knots_.empty()) {
            if (u < knots_.front().first || u > knots_.back().first) return 0.0;
            auto it = std::upper_bound(knots_.begin(), knots_.end(), u,
                                       [](double x, const auto& k) { return x < k.first; });
            if (it == knots_.end()) return knots_.back().second;
            const auto& [u1, v1] = *it;
            const auto& [u0, v0] = *(it - 1);
            return v0 + (v1 - v0) * (u - u0) / (u1 - u0);
        }
        for (const auto& c : pieces_)
            if (u >= c.a && u <= c.b) return c.v;
        return 0.0;
    }

    /// Exact mean of the profile over [a, b].
    double cell_average(double a, double b) const {
        if (!(b > a)) throw std::invalid_argument("empty averaging interval");
        double acc = 0.0;
        if (!knots_.empty()) {
            for (std::size_t i = 1; i < knots_.size(); ++i) {
                const auto [u0, v0] = knots_[i - 1];
                const auto [u1, v1] = knots_[i];
                const double lo = std::max(a, u0), hi = std::min(b, u1);
                if (!(hi > lo)) continue;
                const double slope = (v1 - v0) / (u1 - u0);
                acc += (hi - lo) * (v0 + slope * (0.5 * (lo + hi) - u0));
            }
            return acc / (b - a);
        }
        // pieces may overlap; first match wins, so integrate on the refined breakpoints
        std::vector<double> cuts{a, b};
        for (const auto& c : pieces_) {
            if (c.a > a && c.a < b) cuts.push_back(c.a);
            if (c.b > a && c.b < b) cuts.push_back(c.b);
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 1; i < cuts.size(); ++i) {
            const double w = cuts[i] - cuts[i - 1];
            if (w > 0.0) acc += w * (*this)(0.5 * (cuts[i] + cuts[i - 1]));
        }
        return acc / (b - a);
    }

    double sup() const noexcept {
        double m = 0.0;
        for (const auto& c : pieces_) m = std::max(m, c.v);
        for (const auto& k : knots_) m = std::max(m, k.second);
        return m;
    }

    /// Smallest closed interval outside which the profile vanishes; {0, 0} for the zero profile.
    std::pair<double, double> support() const noexcept {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& c : pieces_) {
            if (c.v > 0.0) {
                lo = std::min(lo, c.a);
                hi = std::max(hi, c.b);
            }
        }
        if (!knots_.empty()) {
            lo = std::min(lo, knots_.front().first);
            hi = std::max(hi, knots_.back().first);
        }
        if (lo > hi) return {0.0, 0.0};
        return {lo, hi};
    }

    bool is_zero() const noexcept { return sup() == 0.0; }

private:
    static std::vector<std::string_view> split(std::string_view s, char sep) {
        std::vector<std::string_view> out;
        while (true) {
            auto pos = s.find(sep);
            out.push_back(s.substr(0, pos));
            if (pos == std::string_view::npos) break;
            s = s.substr(pos + 1);
        }
        return out;
    }

    static double to_double(std::string_view s) {
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw parse_error("not a number: '" + std::string(s) + "'");
        return v;
    }

    std::vector<Constant> pieces_;
    std::vector<std::pair<double, double>> knots_;
};

template <class F>
concept DensityFunction = requires(const F& f, double u) {
    { f(u) } -> std::convertible_to<double>;
};

/// Mean of f over [a, b]; exact when f knows its own cell averages, 16-point midpoint otherwise.
template <DensityFunction F>
double average_over(const F& f, double a, double b) {
    if constexpr (requires { { f.cell_average(a, b) } -> std::convertible_to<double>; }) {
        return f.cell_average(a, b);
    } else {
        constexpr int n = 16;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += f(a + (b - a) * (i + 0.5) / n);
        return acc / n;
    }
}

} // namespace zrh
