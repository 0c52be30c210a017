#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vbkde/detail/quadrature.hpp"
#include "vbkde/error.hpp"

namespace vbkde {

namespace detail {

inline double horner(const std::vector<double>& coeffs, double x) {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
    return acc;
}

inline std::vector<double> poly_derivative(const std::vector<double>& coeffs) {
    std::vector<double> out;
    for (std::size_t k = 1; k < coeffs.size(); ++k) out.push_back(coeffs[k] * static_cast<double>(k));
    return out;
}

/// Surface area of the unit sphere S^{d-1}; equals 2 for d = 1.
inline double unit_sphere_area(int d) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

} // namespace detail

/// Compactly supported radial kernel K(t) = normalization * profile(|t|^2).
///
/// The profile lives on [0, T] and is zero beyond. Polynomial profiles are
/// evaluated inline; arbitrary callables are accepted by the library but
/// cannot be serialized.
class RadialKernel {
public:
    using Profile = std::function<double(double)>;

    static RadialKernel polynomial(std::vector<double> coeffs, double support_T, int dimension) {
        require(dimension >= 1, ErrorKind::invalid_dimension, "kernel dimension must be >= 1");
        require(support_T > 0.0, ErrorKind::invalid_argument, "kernel support T must be positive");
        require(!coeffs.empty(), ErrorKind::invalid_argument, "empty profile polynomial");
        RadialKernel k;
        k.coeffs_ = std::move(coeffs);
        k.T_ = support_T;
        k.d_ = dimension;
        k.normalize();
        return k;
    }

    static RadialKernel callable(Profile profile, double support_T, int dimension) {
        require(dimension >= 1, ErrorKind::invalid_dimension, "kernel dimension must be >= 1");
        require(support_T > 0.0, ErrorKind::invalid_argument, "kernel support T must be positive");
        require(static_cast<bool>(profile), ErrorKind::invalid_argument, "empty profile callable");
        RadialKernel k;
        k.profile_ = std::move(profile);
        k.T_ = support_T;
        k.d_ = dimension;
        k.normalize();
        return k;
    }

    int dimension() const noexcept { return d_; }
    double support_T() const noexcept { return T_; }
    double normalization() const noexcept { return norm_; }
    bool is_polynomial() const noexcept { return coeffs_.has_value(); }
    const std::vector<double>& coefficients() const { return *coeffs_; }

    /// Unnormalized profile on [0, T], zero outside.
    double profile(double u) const {
        if (u > T_ || u < 0.0) return 0.0;
        return coeffs_ ? detail::horner(*coeffs_, u) : profile_(u);
    }

    /// K evaluated at a point whose squared norm is `norm2`.
    double at_norm2(double norm2) const {
        if (norm2 > T_) return 0.0;
        return norm_ * (coeffs_ ? detail::horner(*coeffs_, norm2) : profile_(norm2));
    }

    double operator()(std::span<const double> t) const {
        require(static_cast<int>(t.size()) == d_, ErrorKind::invalid_dimension, "kernel point dimension mismatch");
        double r2 = 0.0;
        for (double x : t) r2 += x * x;
        return at_norm2(r2);
    }

    /// First and second derivatives of the profile. Exact for polynomials,
    /// central differences otherwise.
    double profile_derivative(double u, int order) const {
        if (coeffs_) {
            if (u > T_ || u < 0.0) return 0.0;
            auto c = *coeffs_;
            for (int k = 0; k < order; ++k) c = detail::poly_derivative(c);
            return detail::horner(c, u);
        }
        const double s = 1e-4;
        if (order == 1) return (profile(u + s) - profile(u - s)) / (2 * s);
        return (profile(u + s) - 2 * profile(u) + profile(u - s)) / (s * s);
    }

    /// Radial integral of rho^{m+d-1} profile(rho^2) over [0, sqrt(T)].
    double radial_moment(int m) const {
        const int d = d_;
        auto integrand = [this, m, d](double rho) {
            return std::pow(rho, m + d - 1) * profile(rho * rho);
        };
        return detail::integrate(integrand, 0.0, std::sqrt(T_), 1e-13, 1e-15).value;
    }

    std::string id() const {
        std::ostringstream os;
        os.precision(17);
        if (coeffs_) {
            os << "poly[";
            for (std::size_t k = 0; k < coeffs_->size(); ++k) os << (k ? "," : "") << (*coeffs_)[k];
            os << "]";
        } else {
            os << "callable";
        }
        os << ";T=" << T_ << ";d=" << d_;
        return os.str();
    }

private:
    RadialKernel() = default;

    void normalize() {
        const double mass = detail::unit_sphere_area(d_) * radial_moment(0);
        require(mass > 0.0 && std::isfinite(mass), ErrorKind::construction, "kernel profile has non-positive mass");
        norm_ = 1.0 / mass;
    }

    std::optional<std::vector<double>> coeffs_;
    Profile profile_;
    double T_ = 1.0;
    int d_ = 1;
    double norm_ = 1.0;
};

/// Default profile (1 - u)^3 on [0, 1]; profile and its first two derivatives
/// vanish at the support edge.
inline RadialKernel make_default_profile(int d) {
    require(d >= 1, ErrorKind::invalid_dimension, "dimension must be >= 1, got " + std::to_string(d));
    return RadialKernel::polynomial({1.0, -3.0, 3.0, -1.0}, 1.0, d);
}

/// Checks the structural invariants of a radial kernel. Returns a list of
/// violations (empty when valid).
inline std::vector<std::string> check_kernel(const RadialKernel& k) {
    std::vector<std::string> problems;
    const double T = k.support_T();
    for (int i = 0; i <= 2000; ++i) {
        const double u = T * i / 2000.0;
        if (k.profile(u) < 0.0) {
            problems.push_back("profile negative at u=" + std::to_string(u));
            break;
        }
    }
    const double scale = std::max(1.0, std::abs(k.profile(0.0)));
    if (std::abs(k.profile(T)) > 1e-12 * scale) problems.push_back("profile(T) != 0");
    if (k.is_polynomial() && std::abs(k.profile_derivative(T, 1)) > 1e-10 * scale)
        problems.push_back("profile'(T) != 0");
    double mass = detail::unit_sphere_area(k.dimension()) * k.radial_moment(0) * k.normalization();
    if (std::abs(mass - 1.0) > 1e-8) problems.push_back("kernel mass " + std::to_string(mass) + " != 1");
    return problems;
}

/// Symmetric fourth-order kernel G(z) = (A + B z^2)(1 - z^2)^4 on [-1, 1].
class FourthOrderKernel {
public:
    double A() const noexcept { return A_; }
    double B() const noexcept { return B_; }
    double support_TG() const noexcept { return 1.0; }
    /// Fourth moment a = integral of z^4 G(z).
    double fourth_moment() const noexcept { return a_; }

    double G(double z) const { return std::abs(z) > 1.0 ? 0.0 : detail::horner(g_, z); }
    double dG(double z) const { return std::abs(z) > 1.0 ? 0.0 : detail::horner(dg_, z); }
    double d2G(double z) const { return std::abs(z) > 1.0 ? 0.0 : detail::horner(d2g_, z); }

    const std::vector<double>& coefficients() const noexcept { return g_; }

    std::string id() const { return "fourth-order:(A+Bz^2)(1-z^2)^4"; }

    friend FourthOrderKernel make_fourth_order_kernel();

private:
    double A_ = 0.0, B_ = 0.0, a_ = 0.0;
    std::vector<double> g_, dg_, d2g_;
};

/// Solves A m0 + B m2 = 1, A m2 + B m4 = 0 with m_k the moments of the
/// weight (1 - z^2)^4 on [-1, 1].
inline FourthOrderKernel make_fourth_order_kernel() {
    auto moment = [](int k) {
        auto f = [k](double z) { return std::pow(z, k) * std::pow(1.0 - z * z, 4); };
        return detail::integrate(f, -1.0, 1.0, 1e-14, 1e-16).value;
    };
    const double m0 = moment(0), m2 = moment(2), m4 = moment(4), m6 = moment(6);
    const double det = m0 * m4 - m2 * m2;
    require(std::abs(det) > 1e-14, ErrorKind::construction, "singular moment system for fourth-order kernel");

    FourthOrderKernel g;
    g.A_ = m4 / det;
    g.B_ = -m2 / det;
    g.a_ = g.A_ * m4 + g.B_ * m6;
    // (1 - z^2)^4 = 1 - 4z^2 + 6z^4 - 4z^6 + z^8
    const std::vector<double> w{1, 0, -4, 0, 6, 0, -4, 0, 1};
    g.g_.assign(11, 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
        g.g_[k] += g.A_ * w[k];
        g.g_[k + 2] += g.B_ * w[k];
    }
    g.dg_ = detail::poly_derivative(g.g_);
    g.d2g_ = detail::poly_derivative(g.dg_);
    return g;
}

/// Kernel moments: scalar tau_r = int K(x)|x|^r dx for r in {2, 4, 6} and
/// multi-index tau_v = int u^v K(u) du for |v| <= max_order.
struct MomentTable {
    int dimension = 1;
    int max_order = 0;
    double tau2 = 0.0, tau4 = 0.0, tau6 = 0.0;
    std::map<std::vector<int>, double> multi;

    double tau(const std::vector<int>& v) const {
        auto it = multi.find(v);
        require(it != multi.end(), ErrorKind::unsupported_order, "moment not tabulated");
        return it->second;
    }

    double tau_r(int r) const {
        switch (r) {
        case 0: return 1.0;
        case 2: return tau2;
        case 4: return tau4;
        case 6: return tau6;
        default: throw Error(ErrorKind::unsupported_order, "scalar moment order " + std::to_string(r));
        }
    }
};

namespace detail {

/// All multi-indices in N^d with |v| == order, in lexicographic order.
inline std::vector<std::vector<int>> multi_indices(int d, int order) {
    std::vector<std::vector<int>> out;
    std::vector<int> v(static_cast<std::size_t>(d), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == d - 1) {
            v[static_cast<std::size_t>(pos)] = left;
            out.push_back(v);
            return;
        }
        for (int k = left; k >= 0; --k) {
            v[static_cast<std::size_t>(pos)] = k;
            rec(pos + 1, left - k);
        }
    };
    rec(0, order);
    return out;
}

} // namespace detail

inline MomentTable moments(const RadialKernel& k, int max_order) {
    require(max_order <= 6, ErrorKind::unsupported_order,
            "moments supported up to order 6, requested " + std::to_string(max_order));
    require(max_order >= 0, ErrorKind::invalid_argument, "negative moment order");
    const int d = k.dimension();
    MomentTable t;
    t.dimension = d;
    t.max_order = max_order;
    const double area = detail::unit_sphere_area(d);
    std::map<int, double> radial;
    auto radial_at = [&](int m) {
        auto it = radial.find(m);
        if (it != radial.end()) return it->second;
        return radial[m] = k.radial_moment(m);
    };
    t.tau2 = k.normalization() * area * radial_at(2);
    t.tau4 = k.normalization() * area * radial_at(4);
    t.tau6 = k.normalization() * area * radial_at(6);

    for (int order = 0; order <= max_order; ++order) {
        for (const auto& v : detail::multi_indices(d, order)) {
            bool odd = false;
            for (int vi : v) odd = odd || (vi % 2 != 0);
            if (odd) {
                t.multi[v] = 0.0;
                continue;
            }
            if (order == 0) {
                t.multi[v] = 1.0;
                continue;
            }
            // Sphere integral of prod theta_i^{v_i}: 2 prod Gamma((v_i+1)/2) / Gamma((|v|+d)/2).
            double sphere = 2.0 / std::tgamma(0.5 * (order + d));
            for (int vi : v) sphere *= std::tgamma(0.5 * (vi + 1));
            t.multi[v] = k.normalization() * radial_at(order) * sphere;
        }
    }
    return t;
}

} // namespace vbkde
