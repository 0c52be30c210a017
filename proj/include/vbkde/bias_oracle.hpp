#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbkde/clipping.hpp"
#include "vbkde/density.hpp"
#include "vbkde/detail/jet.hpp"
#include "vbkde/detail/quadrature.hpp"
#include "vbkde/detail/regression.hpp"
#include "vbkde/error.hpp"
#include "vbkde/kernels.hpp"

namespace vbkde {

/// Per-sample scale function gamma(s; h) of an ideal variable-bandwidth
/// estimator: constant (classical), alpha(f) (McKay), or
/// alpha(f) / (1 + h^2 beta) (h6 estimator).
class ScaleModel {
public:
    enum class Kind { constant, mckay, jkh };

    static ScaleModel constant(double value) {
        require(value > 0.0, ErrorKind::invalid_argument, "constant scale must be positive");
        ScaleModel s;
        s.kind_ = Kind::constant;
        s.value_ = value;
        return s;
    }

    static ScaleModel mckay(const DensityModel& f, const ClippingSpec& clip) {
        ScaleModel s;
        s.kind_ = Kind::mckay;
        s.density_ = &f;
        s.clip_ = clip;
        return s;
    }

    static ScaleModel jkh(const DensityModel& f, const ClippingSpec& clip, const MomentTable& tau) {
        require(f.dim == 1, ErrorKind::unsupported, "the h6 scale is defined for d = 1");
        ScaleModel s;
        s.kind_ = Kind::jkh;
        s.density_ = &f;
        s.clip_ = clip;
        s.tau2_ = tau.tau2;
        s.tau4_ = tau.tau4;
        return s;
    }

    Kind kind() const noexcept { return kind_; }
    const ClippingSpec* clip() const noexcept { return clip_ ? &*clip_ : nullptr; }
    double tau2() const noexcept { return tau2_; }
    double tau4() const noexcept { return tau4_; }
    double value() const noexcept { return value_; }

    /// A lower bound of gamma over all s valid for admissible h.
    double lower_bound() const {
        switch (kind_) {
        case Kind::constant: return value_;
        case Kind::mckay: return clip_->c();
        case Kind::jkh: return clip_->c() / 1.5;
        }
        return 0.0;
    }

    /// gamma(s; h). For the h6 scale, returns +inf where 1 + h^2 beta <= 0;
    /// `admissible` is cleared where h^2 |beta| >= 1/2.
    double raw(std::span<const double> s, double h, bool* admissible = nullptr) const {
        if (admissible) *admissible = true;
        switch (kind_) {
        case Kind::constant: return value_;
        case Kind::mckay: return clip_->alpha(density_->pdf(s));
        case Kind::jkh: {
            const double x = s[0];
            const double f = density_->pdf1(x);
            const double b = BetaSpec::formula(tau2_, tau4_, *clip_, f, density_->derivative(x, 1),
                                               density_->derivative(x, 2));
            if (admissible) *admissible = h * h * std::abs(b) < 0.5;
            const double denom = 1.0 + h * h * b;
            return denom > 0.0 ? clip_->alpha(f) / denom : std::numeric_limits<double>::infinity();
        }
        }
        return 0.0;
    }

    double operator()(std::span<const double> s, double h) const {
        bool ok = true;
        const double g = raw(s, h, &ok);
        require(ok, ErrorKind::bandwidth_too_large, "h^2 |beta| >= 1/2 for the h6 scale");
        return g;
    }

    /// Taylor jet of f / gamma^{2k} at t (d = 1). Coefficients are themselves
    /// jets in eps = delta^2 so bandwidth-dependent scales expand jointly.
    template <std::size_t N, std::size_t M>
    using JetT = detail::Jet<detail::Jet<double, M>, N>;

    template <std::size_t N, std::size_t M>
    JetT<N, M> ratio_jet(const DensityModel& f, double t, int k, std::optional<double> fixed_eps = std::nullopt) const {
        using Inner = detail::Jet<double, M>;
        using Outer = JetT<N, M>;
        const int need = static_cast<int>(N) + (kind_ == Kind::jkh ? 2 : 0);
        require(f.max_derivative_order >= need, ErrorKind::unsupported_order,
                "density '" + f.id + "' lacks derivatives of order " + std::to_string(need));
        auto shifted = [&](int offset) {
            Outer j;
            double fact = 1.0;
            for (std::size_t q = 0; q <= N; ++q) {
                if (q > 0) fact *= static_cast<double>(q);
                j.c[q] = Inner(f.derivative(t, static_cast<int>(q) + offset) / fact);
            }
            return j;
        };
        const Outer F = shifted(0);
        Outer gamma;
        switch (kind_) {
        case Kind::constant: gamma = Outer(Inner(value_)); break;
        case Kind::mckay: gamma = clip_->alpha(F); break;
        case Kind::jkh: {
            const Outer F1 = shifted(1), F2 = shifted(2);
            const Outer b = BetaSpec::formula(tau2_, tau4_, *clip_, F, F1, F2);
            const Inner eps = fixed_eps ? Inner(*fixed_eps) : Inner::variable(0.0);
            gamma = clip_->alpha(F) / (Outer(Inner(1.0)) + b * Outer(eps));
            break;
        }
        }
        Outer denom(Inner(1.0));
        for (int q = 0; q < 2 * k; ++q) denom = denom * gamma;
        return F / denom;
    }

    /// Scalar f(s) / gamma(s; delta)^{2k}, for finite differencing.
    double ratio(const DensityModel& f, std::span<const double> s, int k, double delta) const {
        return f.pdf(s) / std::pow((*this)(s, delta), 2 * k);
    }

private:
    ScaleModel() = default;
    Kind kind_ = Kind::constant;
    double value_ = 1.0;
    const DensityModel* density_ = nullptr;
    std::optional<ClippingSpec> clip_;
    double tau2_ = 0.0, tau4_ = 0.0;
};

namespace detail {

/// Integrates `integrand` over the part of [lo, hi] where `inside(s) < 0`,
/// locating boundary crossings by a scan plus bisection so that every
/// quadrature piece is smooth.
template <class Inside, class Integrand>
QuadratureResult integrate_support(Inside&& inside, Integrand&& integrand, double lo, double hi, double center,
                                   double rel_tol, bool skip_outside = true,
                                   int scan_points = 800) {
    std::vector<double> breaks{lo};
    auto bisect = [&](double a, double b) {
        const bool sa = inside(a) < 0.0;
        for (int it = 0; it < 200; ++it) {
            const double m = 0.5 * (a + b);
            if (m <= a || m >= b) break;
            if ((inside(m) < 0.0) == sa) a = m;
            else b = m;
        }
        return 0.5 * (a + b);
    };
    // Scan both halves separately so `center` is always a node.
    auto scan = [&](double a, double b) {
        double prev_s = a;
        bool prev_in = inside(a) < 0.0;
        for (int i = 1; i <= scan_points; ++i) {
            const double s = a + (b - a) * i / scan_points;
            const bool in = inside(s) < 0.0;
            if (in != prev_in) breaks.push_back(bisect(prev_s, s));
            prev_s = s;
            prev_in = in;
        }
    };
    scan(lo, center);
    breaks.push_back(center);
    scan(center, hi);
    breaks.push_back(hi);
    QuadratureResult total;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k], b = breaks[k + 1];
        if (!(b > a)) continue;
        if (skip_outside && !(inside(0.5 * (a + b)) < 0.0)) continue;
        const auto piece = integrate_unchecked(integrand, a, b, rel_tol);
        total.value += piece.value;
        total.error += piece.error;
    }
    return total;
}

} // namespace detail

/// E of the ideal estimator at t: integral of gamma^d(s) h^{-d} K((t - s) gamma(s) / h) f(s) ds,
/// by support-aware adaptive quadrature (absolute tolerance 1e-11).
inline double expected_ideal(const DensityModel& f, const RadialKernel& kernel, double h, const ScaleModel& scale,
                             std::span<const double> t) {
    require(h > 0.0, ErrorKind::invalid_argument, "bandwidth must be positive");
    const int d = f.dim;
    require(kernel.dimension() == d && static_cast<int>(t.size()) == d, ErrorKind::invalid_dimension,
            "dimension mismatch");
    const double T = kernel.support_T();
    const double R = h * std::sqrt(T) / scale.lower_bound() * 1.0001;
    const double hd = std::pow(h, d);
    std::vector<double> s(t.begin(), t.end());

    auto summand = [&](std::span<const double> at) {
        bool ok = true;
        const double g = scale.raw(at, h, &ok);
        double r2 = 0.0;
        for (int k = 0; k < d; ++k) r2 += (t[k] - at[k]) * (t[k] - at[k]);
        const double u = r2 * g * g / (h * h);
        if (!(u <= T)) return 0.0;
        require(ok, ErrorKind::bandwidth_too_large, "h^2 |beta| >= 1/2 inside the kernel support");
        return std::pow(g, d) * kernel.at_norm2(u) * f.pdf(at) / hd;
    };
    auto outside = [&](std::span<const double> at) {
        const double g = scale.raw(at, h);
        double r2 = 0.0;
        for (int k = 0; k < d; ++k) r2 += (t[k] - at[k]) * (t[k] - at[k]);
        if (!std::isfinite(g)) return r2 == 0.0 ? -1.0 : 1.0;
        return r2 * g * g / (h * h) - T;
    };

    // Nested 1-D support-aware quadrature, innermost axis last.
    std::function<detail::QuadratureResult(std::size_t)> nested = [&](std::size_t axis) {
        const bool last = axis + 1 == static_cast<std::size_t>(d);
        auto inside = [&](double v) {
            s[axis] = v;
            if (last) return outside(s);
            // A slice intersects the support iff its point nearest t does,
            // which holds when the radial map is monotone (h small).
            for (std::size_t k = axis + 1; k < static_cast<std::size_t>(d); ++k) s[k] = t[k];
            return outside(s);
        };
        auto integrand = [&](double v) {
            s[axis] = v;
            return last ? summand(s) : nested(axis + 1).value;
        };
        const double rel = last ? 1e-13 : 1e-11;
        return detail::integrate_support(inside, integrand, t[axis] - R, t[axis] + R, t[axis], rel, last);
    };
    const auto result = nested(0);
    if (result.error > 1e-11) {
        throw Error(ErrorKind::quadrature, "expected_ideal quadrature error " + std::to_string(result.error));
    }
    return result.value;
}

/// Bias expansion coefficients over a set of evaluation points.
struct BiasExpansion {
    std::vector<std::vector<double>> points;
    /// per_delta[k][q] = a_{2k, delta}(t_q) at the requested delta.
    std::vector<std::vector<double>> per_delta;
    /// collected[k][q] = coefficient of h^{2k} when delta = h (empty when unavailable).
    std::vector<std::vector<double>> collected;
    double delta = 0.0;
    std::vector<double> h_grid;
    double fitted_order = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// Second-order central difference stencil for the m-th derivative on
/// offsets -m/2.. (even m) or -(m+1)/2.. (odd m), unit step.
inline std::vector<std::pair<int, double>> central_stencil(int m) {
    switch (m) {
    case 0: return {{0, 1.0}};
    case 1: return {{-1, -0.5}, {1, 0.5}};
    case 2: return {{-1, 1.0}, {0, -2.0}, {1, 1.0}};
    case 3: return {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}};
    case 4: return {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}};
    case 5: return {{-3, -0.5}, {-2, 2.0}, {-1, -2.5}, {1, 2.5}, {2, -2.0}, {3, 0.5}};
    case 6: return {{-3, 1.0}, {-2, -6.0}, {-1, 15.0}, {0, -20.0}, {1, 15.0}, {2, -6.0}, {3, 1.0}};
    default: throw Error(ErrorKind::unsupported_order, "finite-difference order above 6");
    }
}

/// Mixed partial D_v g(t) by tensor central differences with one Richardson step.
inline double mixed_partial(const std::function<double(std::span<const double>)>& g, std::span<const double> t,
                            std::span<const int> v) {
    int order = 0;
    for (int vi : v) order += vi;
    const double step = 2.0 * std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (order + 4));
    auto at_step = [&](double s) {
        std::vector<std::vector<std::pair<int, double>>> st;
        for (int vi : v) st.push_back(central_stencil(vi));
        std::vector<double> x(t.begin(), t.end());
        std::vector<std::size_t> idx(v.size(), 0);
        double acc = 0.0;
        for (;;) {
            double w = 1.0;
            for (std::size_t k = 0; k < v.size(); ++k) {
                x[k] = t[k] + st[k][idx[k]].first * s;
                w *= st[k][idx[k]].second;
            }
            acc += w * g(x);
            std::size_t k = v.size();
            while (k-- > 0) {
                if (++idx[k] < st[k].size()) break;
                idx[k] = 0;
            }
            if (k == static_cast<std::size_t>(-1)) break;
        }
        return acc / std::pow(s, order);
    };
    if (order == 0) return g(t);
    return (4.0 * at_step(0.5 * step) - at_step(step)) / 3.0;
}

} // namespace detail

enum class DerivativeMode { analytic, finite_difference };

/// a_{2k}(t) = sum_{|v| = 2k} tau_v / v! D_v (f / gamma^{2k})(t) for k <= k_max.
inline BiasExpansion bias_coefficients(const DensityModel& f, const ScaleModel& scale, const RadialKernel& kernel,
                                       const std::vector<std::vector<double>>& points, int k_max,
                                       double delta = 0.0,
                                       DerivativeMode mode = DerivativeMode::analytic) {
    require(k_max >= 1 && k_max <= 3, ErrorKind::unsupported_order, "k_max must be 1, 2 or 3");
    const int d = f.dim;
    const MomentTable tau = moments(kernel, 2 * k_max);
    BiasExpansion out;
    out.points = points;
    out.delta = delta;
    out.per_delta.assign(static_cast<std::size_t>(k_max) + 1, std::vector<double>(points.size()));

    const int need = 2 * k_max + (scale.kind() == ScaleModel::Kind::jkh ? 2 : 0);
    const bool analytic = mode == DerivativeMode::analytic && d == 1;
    if (mode == DerivativeMode::analytic && !analytic)
        throw Error(ErrorKind::unsupported, "analytic bias coefficients are implemented for d = 1; use finite differences");
    if (analytic) {
        require(f.max_derivative_order >= need, ErrorKind::unsupported_order,
                "density lacks derivatives of order " + std::to_string(need) + " and finite differencing is disabled");
        out.collected.assign(static_cast<std::size_t>(k_max) + 1, std::vector<double>(points.size()));
        for (std::size_t q = 0; q < points.size(); ++q) {
            const double t = points[q][0];
            // Joint expansion in eps = delta^2; inner order 3 covers h^6.
            std::array<detail::Jet<double, 3>, 4> a{};
            for (int k = 0; k <= k_max; ++k) {
                const auto g = scale.template ratio_jet<6, 3>(f, t, k);
                a[static_cast<std::size_t>(k)] = g.c[static_cast<std::size_t>(2 * k)] * tau.tau_r(2 * k);
                const auto gd = scale.template ratio_jet<6, 3>(f, t, k, delta * delta);
                out.per_delta[static_cast<std::size_t>(k)][q] =
                    gd.c[static_cast<std::size_t>(2 * k)].c[0] * tau.tau_r(2 * k);
            }
            for (int m = 0; m <= k_max; ++m) {
                double c = 0.0;
                for (int j = 0; j <= m; ++j) c += a[static_cast<std::size_t>(j)].c[static_cast<std::size_t>(m - j)];
                out.collected[static_cast<std::size_t>(m)][q] = c;
            }
        }
        return out;
    }

    for (std::size_t q = 0; q < points.size(); ++q) {
        for (int k = 0; k <= k_max; ++k) {
            std::function<double(std::span<const double>)> g = [&](std::span<const double> s) {
                return scale.ratio(f, s, k, delta);
            };
            double acc = 0.0;
            for (const auto& v : detail::multi_indices(d, 2 * k)) {
                const double tv = tau.tau(v);
                if (tv == 0.0) continue;
                double vfact = 1.0;
                for (int vi : v)
                    for (int j = 2; j <= vi; ++j) vfact *= j;
                acc += tv / vfact * detail::mixed_partial(g, points[q], v);
            }
            out.per_delta[static_cast<std::size_t>(k)][q] = acc;
        }
    }
    if (scale.kind() != ScaleModel::Kind::jkh) out.collected = out.per_delta;
    return out;
}

struct BiasScanRow {
    double h = 0.0;
    double expected = 0.0;
    double bias = 0.0;
};

struct BiasScan {
    std::vector<BiasScanRow> rows;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
};

/// Logarithmically spaced bandwidths, decreasing from hi to lo.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
    require(lo > 0.0 && hi > lo && count >= 2, ErrorKind::invalid_argument, "log_spaced needs 0 < lo < hi, count >= 2");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::exp(std::log(hi) + (std::log(lo) - std::log(hi)) * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

/// Bias at every h plus the least-squares slope of log|bias| against log h,
/// skipping |bias| < 1e-12.
inline BiasScan bias_scan(const DensityModel& f, const RadialKernel& kernel, const ScaleModel& scale,
                          std::span<const double> t, std::span<const double> h_grid) {
    BiasScan scan;
    std::vector<double> lx, ly;
    const double ft = f.pdf(t);
    for (double h : h_grid) {
        BiasScanRow row;
        row.h = h;
        row.expected = expected_ideal(f, kernel, h, scale, t);
        row.bias = row.expected - ft;
        scan.rows.push_back(row);
        if (std::abs(row.bias) >= 1e-12) {
            lx.push_back(std::log(h));
            ly.push_back(std::log(std::abs(row.bias)));
        }
    }
    scan.used = lx.size();
    if (lx.size() >= 3) {
        const auto fit = detail::fit_line(lx, ly);
        scan.slope = fit.slope;
        scan.intercept = fit.intercept;
    }
    return scan;
}

inline double fit_bias_order(const DensityModel& f, const RadialKernel& kernel, const ScaleModel& scale,
                             std::span<const double> t, std::span<const double> h_grid) {
    const auto scan = bias_scan(f, kernel, scale, t, h_grid);
    require(scan.used >= 3, ErrorKind::insufficient_data,
            "fewer than 3 bandwidths with |bias| above the quadrature floor");
    return scan.slope;
}

} // namespace vbkde
