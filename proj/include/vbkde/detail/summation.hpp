#pragma once

#include <cstddef>
#include <span>

namespace vbkde::detail {

/// Pairwise (tree) summation with an 8-lane unrolled base case.
///
/// The reduction tree depends only on the length of the input, so two calls
/// over the same sequence give bitwise identical results regardless of which
/// thread performs them. Error grows as O(log n) ulps instead of O(n).
inline double pairwise_sum(std::span<const double> terms) {
    constexpr std::size_t block = 128;
    const std::size_t n = terms.size();
    if (n < 8) {
        double s = 0.0;
        for (double v : terms) s += v;
        return s;
    }
    if (n <= block) {
        double r[8];
        for (std::size_t k = 0; k < 8; ++k) r[k] = terms[k];
        std::size_t i = 8;
        for (; i + 8 <= n; i += 8)
            for (std::size_t k = 0; k < 8; ++k) r[k] += terms[i + k];
        double s = ((r[0] + r[1]) + (r[2] + r[3])) + ((r[4] + r[5]) + (r[6] + r[7]));
        for (; i < n; ++i) s += terms[i];
        return s;
    }
    std::size_t half = n / 2;
    half -= half % 8;
    return pairwise_sum(terms.first(half)) + pairwise_sum(terms.subspan(half));
}

} // namespace vbkde::detail
