#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace zrh {

/// Complete binary tree of partial sums over non-negative weights.
///
/// Every internal node is recomputed as the float sum of its two children on update, so the
/// root never drifts from the tree contents. Sampling descends in O(log n) and only ever lands
/// on a leaf with positive weight.
class SumTree {
public:
    SumTree() = default;
    explicit SumTree(std::size_t n) { reset(n); }

    void reset(std::size_t n) {
        n_ = n;
        cap_ = 1;
        while (cap_ < n) cap_ <<= 1;
        tree_.assign(2 * cap_, 0.0);
    }

    std::size_t size() const noexcept { return n_; }
    double total() const noexcept { return tree_.empty() ? 0.0 : tree_[1]; }
    double weight(std::size_t i) const noexcept { return tree_[cap_ + i]; }

    void set(std::size_t i, double w) noexcept {
        std::size_t j = cap_ + i;
        tree_[j] = w;
        for (j >>= 1; j >= 1; j >>= 1) tree_[j] = tree_[2 * j] + tree_[2 * j + 1];
    }

    void rebuild(std::span<const double> weights) {
        reset(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) tree_[cap_ + i] = weights[i];
        for (std::size_t j = cap_ - 1; j >= 1; --j) tree_[j] = tree_[2 * j] + tree_[2 * j + 1];
    }

    /// Leaf i with prefix(i) <= target < prefix(i) + w_i, for target in [0, total()).
    std::size_t find(double target) const noexcept {
        std::size_t j = 1;
        while (j < cap_) {
            const double left = tree_[2 * j];
            const double right = tree_[2 * j + 1];
            if ((target < left && left > 0.0) || !(right > 0.0)) {
                j = 2 * j;
            } else {
                target -= left;
                j = 2 * j + 1;
            }
        }
        return j - cap_;
    }

private:
    std::size_t n_ = 0;
    std::size_t cap_ = 1;
    std::vector<double> tree_;
};

} // namespace zrh
