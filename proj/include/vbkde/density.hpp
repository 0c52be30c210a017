#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vbkde/detail/quadrature.hpp"
#include "vbkde/error.hpp"
#include "vbkde/rng.hpp"

namespace vbkde {

/// Analytic test density: pdf, partial derivatives D_v f, and a seeded sampler.
struct DensityModel {
    std::string id;
    int dim = 1;
    /// Highest |v| for which `partial` is available.
    int max_derivative_order = 0;
    /// Highest derivative order guaranteed bounded.
    int smoothness_class = 0;
    std::function<double(std::span<const double>)> pdf;
    std::function<double(std::span<const double>, std::span<const int>)> partial;
    std::function<void(Engine&, std::span<double>)> sample_one;
    /// Axis-aligned box holding all but a negligible amount of mass.
    std::vector<double> box_lo, box_hi;

    double pdf1(double x) const { return pdf(std::span<const double>(&x, 1)); }

    /// k-th derivative for d = 1.
    double derivative(double x, int k) const {
        require(dim == 1, ErrorKind::unsupported, "derivative(x, k) is for d = 1 models");
        require(k <= max_derivative_order, ErrorKind::unsupported_order,
                "density '" + id + "' has derivatives up to order " + std::to_string(max_derivative_order));
        const int v[1] = {k};
        return partial(std::span<const double>(&x, 1), v);
    }

    /// n draws from the stream seeded with `seed`, row-major, unsorted.
    std::vector<double> draw(std::size_t n, std::uint64_t seed) const {
        Engine rng(seed);
        std::vector<double> out(n * static_cast<std::size_t>(dim));
        for (std::size_t i = 0; i < n; ++i)
            sample_one(rng, std::span<double>(out.data() + i * static_cast<std::size_t>(dim),
                                              static_cast<std::size_t>(dim)));
        return out;
    }
};

namespace detail {

/// Probabilists' Hermite polynomial He_k(z).
inline double hermite(int k, double z) {
    if (k == 0) return 1.0;
    double prev = 1.0, cur = z;
    for (int j = 1; j < k; ++j) {
        const double next = z * cur - j * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

} // namespace detail

struct GaussianComponent {
    double weight = 1.0;
    std::vector<double> mean;
    double sigma = 1.0;
};

/// Mixture of isotropic Gaussians. Derivatives of every order are available
/// through d^k/dz^k phi(z) = (-1)^k He_k(z) phi(z).
inline DensityModel gaussian_mixture(std::string id, std::vector<GaussianComponent> components, int max_order = 8) {
    require(!components.empty(), ErrorKind::invalid_argument, "mixture needs at least one component");
    const int d = static_cast<int>(components.front().mean.size());
    require(d >= 1, ErrorKind::invalid_dimension, "component mean must be non-empty");
    double wsum = 0.0;
    for (const auto& c : components) {
        require(static_cast<int>(c.mean.size()) == d, ErrorKind::invalid_dimension, "component dimension mismatch");
        require(c.sigma > 0.0 && c.weight > 0.0, ErrorKind::invalid_argument, "component sigma/weight must be > 0");
        wsum += c.weight;
    }
    auto comps = std::make_shared<std::vector<GaussianComponent>>(std::move(components));
    for (auto& c : *comps) c.weight /= wsum;

    DensityModel m;
    m.id = std::move(id);
    m.dim = d;
    m.max_derivative_order = max_order;
    m.smoothness_class = max_order;
    m.partial = [comps, d, max_order](std::span<const double> x, std::span<const int> v) {
        int order = 0;
        for (int vi : v) order += vi;
        require(order <= max_order, ErrorKind::unsupported_order, "derivative order beyond model support");
        double total = 0.0;
        for (const auto& c : *comps) {
            double term = c.weight;
            for (int k = 0; k < d; ++k) {
                const double z = (x[static_cast<std::size_t>(k)] - c.mean[static_cast<std::size_t>(k)]) / c.sigma;
                const int vk = v[static_cast<std::size_t>(k)];
                const double phi = std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * c.sigma);
                const double sign = (vk % 2 == 0) ? 1.0 : -1.0;
                term *= sign * detail::hermite(vk, z) * phi / std::pow(c.sigma, vk);
            }
            total += term;
        }
        return total;
    };
    m.pdf = [partial = m.partial, d](std::span<const double> x) {
        std::vector<int> zero(static_cast<std::size_t>(d), 0);
        return partial(x, zero);
    };
    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& c : *comps) cumulative.push_back(acc += c.weight);
    m.sample_one = [comps, cumulative](Engine& rng, std::span<double> out) {
        std::size_t pick = 0;
        if (comps->size() > 1) {
            const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            while (pick + 1 < cumulative.size() && u >= cumulative[pick]) ++pick;
        }
        const auto& c = (*comps)[pick];
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = c.mean[k] + c.sigma * normal(rng);
    };
    m.box_lo.assign(static_cast<std::size_t>(d), std::numeric_limits<double>::infinity());
    m.box_hi.assign(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
    for (const auto& c : *comps) {
        for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k) {
            m.box_lo[k] = std::min(m.box_lo[k], c.mean[k] - 12.0 * c.sigma);
            m.box_hi[k] = std::max(m.box_hi[k], c.mean[k] + 12.0 * c.sigma);
        }
    }
    return m;
}

/// Registration gate: normalization by quadrature within 1e-8 and every
/// derivative closure consistent with a central difference of the one below.
inline std::vector<std::string> check_density(const DensityModel& m, std::uint64_t seed = 0x5EED) {
    std::vector<std::string> problems;
    if (!m.pdf || !m.partial || !m.sample_one) {
        problems.push_back("model '" + m.id + "' is missing a closure");
        return problems;
    }
    if (m.dim < 1 || m.box_lo.size() != static_cast<std::size_t>(m.dim) ||
        m.box_hi.size() != static_cast<std::size_t>(m.dim)) {
        problems.push_back("model '" + m.id + "' has inconsistent dimension / quadrature box");
        return problems;
    }

    double mass = 0.0;
    try {
        std::vector<double> point(static_cast<std::size_t>(m.dim));
        // Nested adaptive quadrature, innermost axis last.
        std::function<double(std::size_t)> nested = [&](std::size_t axis) -> double {
            const bool last = axis + 1 == point.size();
            auto slice = [&](double v) {
                point[axis] = v;
                return last ? m.pdf(point) : nested(axis + 1);
            };
            const double rel = last ? 1e-12 : 1e-11;
            return detail::integrate(slice, m.box_lo[axis], m.box_hi[axis], rel, 1e-15).value;
        };
        mass = nested(0);
    } catch (const Error& e) {
        problems.push_back(std::string("normalization quadrature failed: ") + e.what());
    }
    if (std::abs(mass - 1.0) > 1e-8) {
        std::ostringstream os;
        os.precision(12);
        os << "pdf integrates to " << mass;
        problems.push_back(os.str());
    }

    Engine rng(seed);
    const std::size_t du = static_cast<std::size_t>(m.dim);
    const int top = std::min(m.max_derivative_order, 6);
    std::vector<double> x(du), xp(du), xm(du);
    const double step = 1e-4;
    for (int trial = 0; trial < 100 && problems.size() < 8; ++trial) {
        m.sample_one(rng, x);
        std::vector<int> zero(du, 0);
        if (m.pdf(x) < 0.0) problems.push_back("negative pdf");
        if (std::abs(m.partial(x, zero) - m.pdf(x)) > 1e-14) problems.push_back("partial(0) != pdf");
        for (int order = 0; order < top; ++order) {
            // Every multi-index of this order, enumerated by odometer.
            std::vector<int> v(du, 0);
            std::function<void(std::size_t, int)> visit = [&](std::size_t pos, int left) {
                if (pos + 1 == du) {
                    v[pos] = left;
                    for (std::size_t axis = 0; axis < du; ++axis) {
                        xp = x;
                        xm = x;
                        xp[axis] += step;
                        xm[axis] -= step;
                        const double fd = (m.partial(xp, v) - m.partial(xm, v)) / (2.0 * step);
                        auto w = v;
                        ++w[axis];
                        const double exact = m.partial(x, w);
                        if (std::abs(fd - exact) > 1e-5 * std::max(1.0, std::abs(exact))) {
                            std::ostringstream os;
                            os << "derivative of order " << order + 1 << " along axis " << axis
                               << " disagrees with finite difference (" << exact << " vs " << fd << ")";
                            problems.push_back(os.str());
                        }
                    }
                    return;
                }
                for (int k = left; k >= 0; --k) {
                    v[pos] = k;
                    visit(pos + 1, left - k);
                }
            };
            visit(0, order);
        }
    }
    return problems;
}

/// Registry of density models keyed by id, preloaded with the built-ins.
class DensityCatalog {
public:
    DensityCatalog() {
        add(gaussian_mixture("gauss1", {{1.0, {0.0}, 1.0}}));
        add(gaussian_mixture("mix1", {{0.5, {-1.0}, 1.0}, {0.5, {1.0}, 1.0}}));
        add(gaussian_mixture("gauss2", {{1.0, {0.0, 0.0}, 1.0}}));
        add(gaussian_mixture("iso2", {{1.0, {0.0, 0.0}, 0.7}}));
    }

    /// Validates and registers a model; returns its id.
    const std::string& register_density(DensityModel model) {
        require(!model.id.empty(), ErrorKind::registration, "density id must be non-empty");
        require(!models_.contains(model.id), ErrorKind::registration, "density id '" + model.id + "' already used");
        const auto problems = check_density(model);
        if (!problems.empty()) {
            std::string msg = "density '" + model.id + "' rejected:";
            for (const auto& p : problems) msg += " [" + p + "]";
            throw Error(ErrorKind::registration, msg);
        }
        return add(std::move(model));
    }

    const DensityModel& get(const std::string& id) const {
        auto it = models_.find(id);
        require(it != models_.end(), ErrorKind::unknown_id, "unknown density id '" + id + "'");
        return it->second;
    }

    bool contains(const std::string& id) const { return models_.contains(id); }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : models_) out.push_back(k);
        return out;
    }

private:
    const std::string& add(DensityModel model) {
        auto [it, inserted] = models_.emplace(model.id, std::move(model));
        return it->first;
    }

    std::map<std::string, DensityModel> models_;
};

} // namespace vbkde
