#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace zrh {

/// Non-negative test function H(t, u) with analytic partial derivatives, supported in a box.
struct TestFunction {
    std::function<double(double, double)> value;
    std::function<double(double, double)> d_t;
    std::function<double(double, double)> d_u;
    double t_lo = 0.0, t_hi = 0.0;
    double u_lo = 0.0, u_hi = 0.0;

    double operator()(double t, double u) const { return value(t, u); }
    bool vanishes() const noexcept { return !(t_hi > t_lo) || !(u_hi > u_lo); }
};

namespace detail {

// (1 - s^2)^3 on |s| < 1: C^2, vanishing with two derivatives at the ends.
inline double bump1(double s) noexcept {
    if (std::abs(s) >= 1.0) return 0.0;
    const double q = 1.0 - s * s;
    return q * q * q;
}

inline double bump1_prime(double s) noexcept {
    if (std::abs(s) >= 1.0) return 0.0;
    const double q = 1.0 - s * s;
    return -6.0 * s * q * q;
}

inline double hat1(double s) noexcept { return std::max(0.0, 1.0 - std::abs(s)); }

inline double hat1_prime(double s) noexcept {
    if (std::abs(s) >= 1.0 || s == 0.0) return 0.0;
    return s > 0.0 ? -1.0 : 1.0;
}

} // namespace detail

/// Product bump on (t0, t1) x (u0, u1).
inline TestFunction bump(double t0, double t1, double u0, double u1) {
    if (!(t1 > t0) || !(u1 > u0)) throw std::invalid_argument("bump needs a non-empty box");
    const double tc = 0.5 * (t0 + t1), tr = 0.5 * (t1 - t0);
    const double uc = 0.5 * (u0 + u1), ur = 0.5 * (u1 - u0);
    TestFunction h;
    h.value = [=](double t, double u) { return detail::bump1((t - tc) / tr) * detail::bump1((u - uc) / ur); };
    h.d_t = [=](double t, double u) { return detail::bump1_prime((t - tc) / tr) / tr * detail::bump1((u - uc) / ur); };
    h.d_u = [=](double t, double u) { return detail::bump1((t - tc) / tr) * detail::bump1_prime((u - uc) / ur) / ur; };
    h.t_lo = t0, h.t_hi = t1, h.u_lo = u0, h.u_hi = u1;
    return h;
}

/// Product of tents on (t0, t1) x (u0, u1); Lipschitz, derivatives taken piecewise.
inline TestFunction hat(double t0, double t1, double u0, double u1) {
    if (!(t1 > t0) || !(u1 > u0)) throw std::invalid_argument("hat needs a non-empty box");
    const double tc = 0.5 * (t0 + t1), tr = 0.5 * (t1 - t0);
    const double uc = 0.5 * (u0 + u1), ur = 0.5 * (u1 - u0);
    TestFunction h;
    h.value = [=](double t, double u) { return detail::hat1((t - tc) / tr) * detail::hat1((u - uc) / ur); };
    h.d_t = [=](double t, double u) { return detail::hat1_prime((t - tc) / tr) / tr * detail::hat1((u - uc) / ur); };
    h.d_u = [=](double t, double u) { return detail::hat1((t - tc) / tr) * detail::hat1_prime((u - uc) / ur) / ur; };
    h.t_lo = t0, h.t_hi = t1, h.u_lo = u0, h.u_hi = u1;
    return h;
}

inline TestFunction zero_test_function() {
    TestFunction h;
    h.value = h.d_t = h.d_u = [](double, double) { return 0.0; };
    return h;
}

} // namespace zrh
