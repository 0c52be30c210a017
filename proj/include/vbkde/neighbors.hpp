#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "vbkde/samples.hpp"

namespace vbkde {

/// Fixed-radius candidate search over a SampleSet.
///
/// In d = 1 the samples are sorted, so the candidates within distance R of a
/// query form one contiguous index range. In higher dimensions the samples are
/// bucketed into cubic cells; a query visits every cell overlapping its
/// bounding box and gathers indices in ascending order. Candidates form a
/// superset of the true ball; callers evaluate the exact support condition.
class NeighborIndex {
public:
    NeighborIndex(const SampleSet& samples, double cell_side) : samples_(&samples), d_(samples.dim()) {
        if (d_ == 1) return;
        const std::size_t n = samples.size();
        const std::size_t du = static_cast<std::size_t>(d_);
        lo_.assign(du, std::numeric_limits<double>::infinity());
        std::vector<double> hi(du, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
            auto p = samples.point(i);
            for (std::size_t k = 0; k < du; ++k) {
                lo_[k] = std::min(lo_[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        }
        double extent = 0.0;
        for (std::size_t k = 0; k < du; ++k) extent = std::max(extent, hi[k] - lo_[k]);
        cell_ = std::isfinite(cell_side) && cell_side > 0.0 ? cell_side : std::max(extent, 1.0);
        // Keep the dense cell array proportional to n.
        const double max_cells = 4.0 * static_cast<double>(n) + 1024.0;
        for (;;) {
            double total = 1.0;
            for (std::size_t k = 0; k < du; ++k) total *= std::floor((hi[k] - lo_[k]) / cell_) + 1.0;
            if (total <= max_cells) break;
            cell_ *= 2.0;
        }
        dims_.resize(du);
        std::size_t total = 1;
        for (std::size_t k = 0; k < du; ++k) {
            dims_[k] = static_cast<std::size_t>(std::floor((hi[k] - lo_[k]) / cell_)) + 1;
            total *= dims_[k];
        }
        start_.assign(total + 1, 0);
        std::vector<std::size_t> cell_of(n);
        for (std::size_t i = 0; i < n; ++i) {
            cell_of[i] = cell_index(samples.point(i));
            ++start_[cell_of[i] + 1];
        }
        for (std::size_t c = 0; c < total; ++c) start_[c + 1] += start_[c];
        members_.resize(n);
        std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t i = 0; i < n; ++i) members_[fill[cell_of[i]]++] = i;
    }

    /// Contiguous candidate range [first, last) for d = 1.
    std::pair<std::size_t, std::size_t> range_1d(double t, double radius) const {
        const auto xs = samples_->flat();
        if (!std::isfinite(radius)) return {0, xs.size()};
        const auto first = std::lower_bound(xs.begin(), xs.end(), t - radius);
        const auto last = std::upper_bound(first, xs.end(), t + radius);
        return {static_cast<std::size_t>(first - xs.begin()), static_cast<std::size_t>(last - xs.begin())};
    }

    /// Candidate indices (ascending) for any d >= 2.
    void gather(std::span<const double> t, double radius, std::vector<std::size_t>& out) const {
        out.clear();
        const std::size_t du = static_cast<std::size_t>(d_);
        if (!std::isfinite(radius)) {
            for (std::size_t i = 0; i < samples_->size(); ++i) out.push_back(i);
            return;
        }
        std::vector<std::size_t> from(du), to(du), cur(du);
        for (std::size_t k = 0; k < du; ++k) {
            const double a = std::floor((t[k] - radius - lo_[k]) / cell_);
            const double b = std::floor((t[k] + radius - lo_[k]) / cell_);
            const double top = static_cast<double>(dims_[k] - 1);
            if (b < 0.0 || a > top) return;
            from[k] = static_cast<std::size_t>(std::max(a, 0.0));
            to[k] = static_cast<std::size_t>(std::min(b, top));
        }
        cur = from;
        for (;;) {
            std::size_t c = 0;
            for (std::size_t k = 0; k < du; ++k) c = c * dims_[k] + cur[k];
            out.insert(out.end(), members_.begin() + static_cast<std::ptrdiff_t>(start_[c]),
                       members_.begin() + static_cast<std::ptrdiff_t>(start_[c + 1]));
            std::size_t k = du;
            while (k-- > 0) {
                if (cur[k] < to[k]) {
                    ++cur[k];
                    break;
                }
                cur[k] = from[k];
            }
            if (k == static_cast<std::size_t>(-1)) break;
        }
        std::sort(out.begin(), out.end());
    }

private:
    std::size_t cell_index(std::span<const double> p) const {
        std::size_t c = 0;
        for (std::size_t k = 0; k < static_cast<std::size_t>(d_); ++k) {
            auto i = static_cast<std::size_t>(std::floor((p[k] - lo_[k]) / cell_));
            c = c * dims_[k] + std::min(i, dims_[k] - 1);
        }
        return c;
    }

    const SampleSet* samples_;
    int d_;
    double cell_ = 1.0;
    std::vector<double> lo_;
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> start_;
    std::vector<std::size_t> members_;
};

} // namespace vbkde
