#pragma once

#include <cstdint>
#include <random>

namespace vbkde {

/// SplitMix64 finalizer; a bijection on 64-bit words with good avalanche.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based split of a master seed: stream `index` of purpose `salt`.
/// Depends only on its arguments, never on evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master ^ splitmix64(salt)) + index);
}

using Engine = std::mt19937_64;

} // namespace vbkde
