#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace zrh {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

/// Running mean/variance (Welford).
class RunningStats {
public:
    void add(double v) noexcept {
        ++n_;
        const double d = v - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (v - mean_);
    }

    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double se() const noexcept { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
    MeanSe summary() const noexcept { return {mean(), se()}; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline MeanSe mean_se(std::span<const double> values) {
    RunningStats s;
    for (double v : values) s.add(v);
    return s.summary();
}

} // namespace zrh
