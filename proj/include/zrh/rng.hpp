#pragma once

#include <cstdint>
#include <random>

namespace zrh {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Independent stream for one replica, keyed by (master_seed, replica_index).
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t replica_index) {
    std::uint64_t state = master_seed ^ (0xD1B54A32D192ED03ULL * (replica_index + 1));
    std::seed_seq seq{static_cast<std::uint32_t>(detail::splitmix64(state)),
                      static_cast<std::uint32_t>(detail::splitmix64(state)),
                      static_cast<std::uint32_t>(detail::splitmix64(state)),
                      static_cast<std::uint32_t>(detail::splitmix64(state)),
                      static_cast<std::uint32_t>(replica_index),
                      static_cast<std::uint32_t>(replica_index >> 32)};
    return Rng(seq);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace zrh
