#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vbkde/error.hpp"

namespace vbkde {

/// n points in R^d, stored row-major and sorted lexicographically at
/// construction so every downstream sum runs in a canonical order.
class SampleSet {
public:
    SampleSet(std::vector<double> flat, int d) : d_(d) {
        require(d >= 1, ErrorKind::invalid_dimension, "sample dimension must be >= 1");
        require(!flat.empty() && flat.size() % static_cast<std::size_t>(d) == 0, ErrorKind::invalid_argument,
                "sample buffer must hold n >= 1 points of dimension d");
        for (double v : flat)
            require(std::isfinite(v), ErrorKind::invalid_argument, "sample coordinates must be finite");
        const std::size_t n = flat.size() / static_cast<std::size_t>(d);
        const std::size_t du = static_cast<std::size_t>(d);
        if (d == 1) {
            std::sort(flat.begin(), flat.end());
            data_ = std::move(flat);
        } else {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return std::lexicographical_compare(flat.begin() + a * du, flat.begin() + (a + 1) * du,
                                                    flat.begin() + b * du, flat.begin() + (b + 1) * du);
            });
            data_.resize(flat.size());
            for (std::size_t i = 0; i < n; ++i)
                std::copy_n(flat.begin() + order[i] * du, du, data_.begin() + i * du);
        }
    }

    int dim() const noexcept { return d_; }
    std::size_t size() const noexcept { return data_.size() / static_cast<std::size_t>(d_); }
    std::span<const double> point(std::size_t i) const {
        return {data_.data() + i * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
    }
    std::span<const double> flat() const noexcept { return data_; }

    /// First n points of an unsorted draw stream, re-sorted.
    static SampleSet prefix(std::span<const double> stream, std::size_t n, int d) {
        const std::size_t len = n * static_cast<std::size_t>(d);
        require(len <= stream.size(), ErrorKind::invalid_argument, "prefix longer than stream");
        return SampleSet(std::vector<double>(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(len)), d);
    }

private:
    int d_;
    std::vector<double> data_;
};

/// Evaluation points, row-major. Tensor grids also remember their axes so
/// quadrature over the field can use Simpson weights.
class EvalGrid {
public:
    EvalGrid() = default;
    EvalGrid(std::vector<double> flat, int d) : d_(d), data_(std::move(flat)) {
        require(d >= 1, ErrorKind::invalid_dimension, "grid dimension must be >= 1");
        require(data_.size() % static_cast<std::size_t>(d) == 0, ErrorKind::invalid_argument,
                "grid buffer size must be a multiple of d");
    }

    /// Uniform tensor grid with `points` nodes per axis over [lo_k, hi_k].
    static EvalGrid tensor(std::span<const double> lo, std::span<const double> hi, std::size_t points) {
        require(lo.size() == hi.size() && !lo.empty(), ErrorKind::invalid_dimension, "grid bounds dimension mismatch");
        require(points >= 2, ErrorKind::invalid_argument, "grid needs at least 2 points per axis");
        const int d = static_cast<int>(lo.size());
        std::vector<std::vector<double>> axes(lo.size());
        for (std::size_t k = 0; k < lo.size(); ++k) {
            require(hi[k] > lo[k], ErrorKind::invalid_argument, "grid bounds must satisfy lo < hi");
            axes[k].resize(points);
            for (std::size_t i = 0; i < points; ++i)
                axes[k][i] = lo[k] + (hi[k] - lo[k]) * static_cast<double>(i) / static_cast<double>(points - 1);
        }
        std::size_t total = 1;
        for (std::size_t k = 0; k < lo.size(); ++k) total *= points;
        std::vector<double> flat(total * lo.size());
        std::vector<std::size_t> idx(lo.size(), 0);
        for (std::size_t p = 0; p < total; ++p) {
            for (std::size_t k = 0; k < lo.size(); ++k) flat[p * lo.size() + k] = axes[k][idx[k]];
            for (std::size_t k = lo.size(); k-- > 0;) {
                if (++idx[k] < points) break;
                idx[k] = 0;
            }
        }
        EvalGrid g(std::move(flat), d);
        g.axes_ = std::move(axes);
        return g;
    }

    static EvalGrid uniform_1d(double lo, double hi, std::size_t points) {
        const double l[1] = {lo}, h[1] = {hi};
        return tensor(l, h, points);
    }

    int dim() const noexcept { return d_; }
    std::size_t size() const noexcept { return data_.size() / static_cast<std::size_t>(d_); }
    std::span<const double> point(std::size_t i) const {
        return {data_.data() + i * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
    }
    std::span<const double> flat() const noexcept { return data_; }
    bool is_tensor() const noexcept { return !axes_.empty(); }
    const std::vector<std::vector<double>>& axes() const noexcept { return axes_; }

    friend bool operator==(const EvalGrid& a, const EvalGrid& b) { return a.d_ == b.d_ && a.data_ == b.data_; }

private:
    int d_ = 1;
    std::vector<double> data_;
    std::vector<std::vector<double>> axes_;
};

} // namespace vbkde
