#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vbkde/detail/jet.hpp"
#include "vbkde/error.hpp"

namespace vbkde {

/// Piecewise polynomial on [0, t0]. Piece k covers [breaks[k], breaks[k+1]]
/// and is a polynomial in the local variable (t - breaks[k]).
struct ClipSpline {
    std::vector<double> breaks;
    std::vector<std::vector<double>> coeffs;
};

/// Clipping function p with p >= 1, p(t) = t for t >= t0, p(t) = 1 for t <= 0,
/// together with the scale constant c.
class ClippingSpec {
public:
    /// The quintic-in-t^6 clipping function with t0 = 2 (five continuous derivatives).
    static ClippingSpec mckay_quintic(double c) {
        require(c > 0.0 && std::isfinite(c), ErrorKind::invalid_argument, "clipping constant c must be positive");
        ClippingSpec s;
        s.c_ = c;
        s.t0_ = 2.0;
        return s;
    }

    static ClippingSpec spline(double c, double t0, ClipSpline spline) {
        require(c > 0.0 && std::isfinite(c), ErrorKind::invalid_argument, "clipping constant c must be positive");
        require(t0 >= 1.0, ErrorKind::invalid_argument, "clipping threshold t0 must be >= 1");
        require(spline.breaks.size() >= 2 && spline.coeffs.size() + 1 == spline.breaks.size(),
                ErrorKind::invalid_argument, "spline needs k+1 breaks for k pieces");
        require(spline.breaks.front() == 0.0 && spline.breaks.back() == t0, ErrorKind::invalid_argument,
                "spline breaks must span [0, t0]");
        require(std::is_sorted(spline.breaks.begin(), spline.breaks.end()), ErrorKind::invalid_argument,
                "spline breaks must be increasing");
        ClippingSpec s;
        s.c_ = c;
        s.t0_ = t0;
        s.spline_ = std::move(spline);
        return s;
    }

    double c() const noexcept { return c_; }
    double t0() const noexcept { return t0_; }
    bool is_default() const noexcept { return spline_.breaks.empty(); }
    const ClipSpline& spline_data() const noexcept { return spline_; }

    /// p(t). Generic over the scalar so Taylor jets propagate through it.
    template <class T>
    T p(const T& t) const {
        const double v = detail::scalar_value(t);
        if (v <= 0.0) return T(1.0);
        if (v >= t0_) return t;
        if (is_default()) {
            const T s = t - T(2.0);
            const T q = T(1.0) - s * 2.0 + s * s * 2.25 - s * s * s * 1.75 + s * s * s * s * 0.875;
            return T(1.0) + detail::ipow(t, 6) * q / T(64.0);
        }
        std::size_t k = static_cast<std::size_t>(
            std::upper_bound(spline_.breaks.begin(), spline_.breaks.end(), v) - spline_.breaks.begin());
        k = std::min(std::max<std::size_t>(k, 1), spline_.coeffs.size()) - 1;
        const T local = t - T(spline_.breaks[k]);
        T acc(0.0);
        const auto& cf = spline_.coeffs[k];
        for (auto it = cf.rbegin(); it != cf.rend(); ++it) acc = acc * local + T(*it);
        return acc;
    }

    /// alpha(x) = c * sqrt(p(x / c^2)) for a density value x >= 0.
    template <class T>
    T alpha(const T& x) const {
        using std::sqrt;
        using detail::sqrt;
        require(detail::scalar_value(x) >= 0.0, ErrorKind::invalid_argument, "alpha: negative density value");
        return sqrt(p(x / T(c_ * c_))) * c_;
    }

    std::string id() const {
        std::ostringstream os;
        os.precision(17);
        os << (is_default() ? "mckay-quintic" : "spline") << ";c=" << c_ << ";t0=" << t0_;
        return os.str();
    }

private:
    ClippingSpec() = default;
    double c_ = 1.0;
    double t0_ = 2.0;
    ClipSpline spline_;
};

inline double p_eval(const ClippingSpec& spec, double t) { return spec.p(t); }

inline double alpha(const ClippingSpec& spec, double x) { return spec.alpha(x); }

/// Second-order scale correction of the h^6 estimator. Holds the kernel
/// moments and an accessor returning (f, f', f'') at a point.
struct BetaSpec {
    struct Derivs {
        double f = 0.0, d1 = 0.0, d2 = 0.0;
    };
    double tau2 = 0.0;
    double tau4 = 0.0;
    std::function<Derivs(double)> density;

    /// tau4 [f'' f - 2 f'^2] / (24 tau2 alpha(f)^6). Generic over scalar.
    template <class T>
    static T formula(double tau2_, double tau4_, const ClippingSpec& clip, const T& f, const T& d1, const T& d2) {
        const T a = clip.alpha(f);
        const T a2 = a * a;
        return (d2 * f - d1 * d1 * 2.0) * tau4_ / (a2 * a2 * a2 * (24.0 * tau2_));
    }
};

inline double beta(const BetaSpec& spec, const ClippingSpec& clip, double x) {
    require(static_cast<bool>(spec.density), ErrorKind::invalid_argument, "beta: missing density accessor");
    const auto d = spec.density(x);
    return BetaSpec::formula(spec.tau2, spec.tau4, clip, d.f, d.d1, d.d2);
}

/// gamma_h(x) = alpha(f(x)) / (1 + h^2 beta(x)); requires h^2 |beta(x)| < 1/2.
inline double gamma_h6(const BetaSpec& spec, const ClippingSpec& clip, double x, double h) {
    require(h >= 0.0, ErrorKind::invalid_argument, "gamma_h6: negative bandwidth");
    const auto d = spec.density(x);
    const double b = BetaSpec::formula(spec.tau2, spec.tau4, clip, d.f, d.d1, d.d2);
    if (!(h * h * std::abs(b) < 0.5)) {
        std::ostringstream msg;
        msg << "h^2 |beta| = " << h * h * std::abs(b) << " >= 1/2 at x = " << x;
        throw Error(ErrorKind::bandwidth_too_large, msg.str());
    }
    return clip.alpha(d.f) / (1.0 + h * h * b);
}

/// Numerical gate for clipping functions: p >= 1, nondecreasing, identity
/// beyond t0, and derivatives up to order 5 continuous at the knots 0 and t0.
inline std::vector<std::string> check_clipping(const ClippingSpec& spec) {
    std::vector<std::string> problems;
    const double t0 = spec.t0();
    double prev = spec.p(-1.0);
    const int steps = 20000;
    for (int i = 0; i <= steps; ++i) {
        const double t = -1.0 + (t0 + 3.0) * i / steps;
        const double v = spec.p(t);
        if (v < 1.0 - 1e-14) {
            problems.push_back("p < 1 at t=" + std::to_string(t));
            break;
        }
        if (v < prev - 1e-14) {
            problems.push_back("p decreasing at t=" + std::to_string(t));
            break;
        }
        if (t >= t0 && v != t) {
            problems.push_back("p(t) != t beyond t0 at t=" + std::to_string(t));
            break;
        }
        prev = v;
    }
    // One-sided Taylor jets on each side of a knot must agree through order 5.
    using J = detail::Jet<double, 5>;
    for (double knot : {0.0, t0}) {
        const double eps = 1e-12;
        const J left = spec.p(J::variable(knot - eps));
        const J right = spec.p(J::variable(knot + eps));
        for (std::size_t k = 0; k <= 5; ++k) {
            const double l = left.derivative(k), r = right.derivative(k);
            if (std::abs(l - r) > 1e-4 * std::max(1.0, std::abs(l))) {
                problems.push_back("derivative " + std::to_string(k) + " discontinuous at t=" + std::to_string(knot));
            }
        }
    }
    return problems;
}

/// Largest k <= 8 such that p has k continuous derivatives at every knot.
inline int smoothness_order(const ClippingSpec& spec) {
    using J = detail::Jet<double, 8>;
    std::vector<double> knots{0.0, spec.t0()};
    for (double b : spec.spline_data().breaks) knots.push_back(b);
    int order = 8;
    for (double knot : knots) {
        const double eps = 1e-12;
        const J left = spec.p(J::variable(knot - eps));
        const J right = spec.p(J::variable(knot + eps));
        for (int k = 0; k <= order; ++k) {
            const double l = left.derivative(static_cast<std::size_t>(k)), r = right.derivative(static_cast<std::size_t>(k));
            if (std::abs(l - r) > 1e-4 * std::max(1.0, std::abs(l))) {
                order = k - 1;
                break;
            }
        }
    }
    return order;
}

} // namespace vbkde
