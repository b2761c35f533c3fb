#pragma once

#include <stdexcept>
#include <string>

namespace zrh {

/// Base class of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A series (partition function, density) failed to converge; the fugacity is at or beyond zeta*.
class divergence_error : public error {
public:
    using error::error;
};

/// A density or fugacity lies outside the tabulated range.
class range_error : public error {
public:
    using error::error;
};

/// Rate table is not non-decreasing, not Lipschitz, or a derived table lost strict monotonicity.
class monotonicity_error : public error {
public:
    using error::error;
};

/// Window and profile do not fit together.
class window_error : public error {
public:
    using error::error;
};

/// Mass leaving an open window exceeded the configured fraction.
class leakage_error : public error {
public:
    using error::error;
};

/// Event budget exhausted before reaching the requested time.
class budget_error : public error {
public:
    using error::error;
};

/// A stationary profile became negative on its window.
class negativity_error : public error {
public:
    using error::error;
};

/// A stationary profile asks for a fugacity outside the admissible range.
class admissibility_error : public error {
public:
    using error::error;
};

/// Time step breaks the CFL bound, or the solution became non-finite.
class cfl_error : public error {
public:
    using error::error;
};

/// A test function reaches outside the domain where it may be supported.
class support_error : public error {
public:
    using error::error;
};

/// Not enough replicas for the requested statistic.
class sample_size_error : public error {
public:
    using error::error;
};

/// Malformed configuration or suite text; carries the 1-based line number when known.
class parse_error : public error {
public:
    parse_error(const std::string& what, int line = 0)
        : error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace zrh
